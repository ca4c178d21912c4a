#include "qosdiff/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace qosdiff {

namespace {

constexpr const char* kMagic = "qosdiff-checkpoint,1";

std::uint64_t to_little_endian(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::little) {
    return x;
  } else {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((x >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return out;
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const nn::StateList& state) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << kMagic << '\n';
    for (const auto& e : state) {
      if (e.name.find_first_of(",\n") != std::string::npos) {
        throw std::invalid_argument("checkpoint tensor name '" + e.name + "' contains a separator");
      }
      out << e.name << ',' << e.value->rows() << ',' << e.value->cols() << '\n';
    }
    out << "end\n";
    for (const auto& e : state) {
      const ad::Matrix& m = *e.value;
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, m.data() + i, sizeof bits);
        bits = to_little_endian(bits);
        out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
      }
    }
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void load_checkpoint(const std::filesystem::path& path, const nn::StateList& state) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw std::runtime_error(path.string() + ": not a checkpoint");
  std::size_t k = 0;
  while (std::getline(in, line) && line != "end") {
    std::istringstream is(line);
    std::string name;
    std::string rows;
    std::string cols;
    std::getline(is, name, ',');
    std::getline(is, rows, ',');
    std::getline(is, cols, ',');
    if (k >= state.size()) throw std::runtime_error(path.string() + ": more tensors than the model has");
    const auto& e = state[k++];
    if (name != e.name || std::stol(rows) != e.value->rows() || std::stol(cols) != e.value->cols()) {
      throw std::runtime_error(path.string() + ": tensor '" + name + "' (" + rows + "x" + cols +
                               ") does not match model tensor '" + e.name + "'");
    }
  }
  if (line != "end" || k != state.size()) throw std::runtime_error(path.string() + ": truncated manifest");
  for (const auto& e : state) {
    ad::Matrix& m = *e.value;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      std::uint64_t bits = 0;
      if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) {
        throw std::runtime_error(path.string() + ": truncated tensor data");
      }
      bits = to_little_endian(bits);
      std::memcpy(m.data() + i, &bits, sizeof bits);
    }
  }
}

std::vector<ad::Matrix> snapshot(const nn::StateList& state) {
  std::vector<ad::Matrix> out;
  out.reserve(state.size());
  for (const auto& e : state) out.push_back(*e.value);
  return out;
}

void restore(const nn::StateList& state, const std::vector<ad::Matrix>& values) {
  if (values.size() != state.size()) throw std::invalid_argument("restore: snapshot size mismatch");
  for (std::size_t i = 0; i < state.size(); ++i) *state[i].value = values[i];
}

}  // namespace qosdiff
