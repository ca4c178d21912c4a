#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "qosdiff/checkpoint.hpp"

using namespace qosdiff;
using ad::Matrix;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("qosdiff_ckpt_" + name); }

}  // namespace

TEST_CASE("checkpoint save/load round trip is exact") {
  Matrix a(2, 3), b(1, 4);
  a << 1.0, -2.5, 1e-300, 3.14159265358979, 0.1, -0.0;
  b << 7, 8, 9, 1.0 / 3.0;
  const nn::StateList src{{"a", &a}, {"b", &b}};
  const auto path = temp_file("rt.bin");
  save_checkpoint(path, src);

  Matrix a2 = Matrix::Zero(2, 3), b2 = Matrix::Zero(1, 4);
  const nn::StateList dst{{"a", &a2}, {"b", &b2}};
  load_checkpoint(path, dst);
  CHECK(a2 == a);
  CHECK(b2 == b);

  Matrix wrong_shape = Matrix::Zero(3, 2);
  CHECK_THROWS(load_checkpoint(path, nn::StateList{{"a", &wrong_shape}, {"b", &b2}}));
  CHECK_THROWS(load_checkpoint(path, nn::StateList{{"x", &a2}, {"b", &b2}}));
  CHECK_THROWS(load_checkpoint(path, nn::StateList{{"a", &a2}}));
  fs::remove(path);
}

TEST_CASE("checkpoint rejects truncated or foreign files") {
  const auto path = temp_file("bad.bin");
  Matrix a = Matrix::Ones(2, 2);
  const nn::StateList s{{"a", &a}};
  {
    std::ofstream(path) << "qosdiff-checkpoint,1\na,2,2\n";
  }
  CHECK_THROWS(load_checkpoint(path, s));
  {
    std::ofstream(path) << "not a checkpoint\n";
  }
  CHECK_THROWS(load_checkpoint(path, s));
  {
    std::ofstream(path, std::ios::binary) << "qosdiff-checkpoint,1\na,2,2\nend\n" << std::string(8, '\0');
  }
  CHECK_THROWS(load_checkpoint(path, s));
  CHECK_THROWS(load_checkpoint(temp_file("missing.bin"), s));
  fs::remove(path);
}

TEST_CASE("snapshot and restore") {
  Matrix a(1, 2);
  a << 1, 2;
  const nn::StateList s{{"a", &a}};
  const auto saved = snapshot(s);
  a << 5, 6;
  restore(s, saved);
  CHECK(a(0, 0) == 1.0);
  CHECK(a(0, 1) == 2.0);
}
