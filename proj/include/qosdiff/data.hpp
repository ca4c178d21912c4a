#pragma once

// QoS matrix ingestion, normalization, train/validation/test splitting and
// test-time identity corruption.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace qosdiff::data {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Triplet {
  std::size_t user = 0;
  std::size_t service = 0;
  double value = 0.0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct IngestReport {
  std::size_t rejected_rows = 0;
  std::size_t duplicate_pairs = 0;
};

/// Observed QoS triplets plus categorical context per entity.
///
/// Context indices are per field: index 0 is reserved for values never seen
/// during ingestion, observed values are numbered from 1 in order of first
/// appearance. Vocabulary sizes therefore count the reserved slot.
struct QoSDataset {
  std::string name;
  std::size_t users = 0;
  std::size_t services = 0;
  std::vector<Triplet> triplets;
  double global_max = 0.0;
  bool normalized = false;

  std::vector<std::string> user_fields;
  std::vector<std::string> service_fields;
  std::vector<std::vector<std::size_t>> user_context;     // users x user_fields
  std::vector<std::vector<std::size_t>> service_context;  // services x service_fields
  std::vector<std::size_t> user_vocab_sizes;
  std::vector<std::size_t> service_vocab_sizes;

  IngestReport ingest;

  /// Throws std::logic_error naming the first broken invariant.
  void validate() const;
};

/// Categorical vocabulary with first-appearance numbering starting at 1.
class Vocabulary {
 public:
  std::size_t add(const std::string& value);
  /// Index of a known value, 0 for anything unseen.
  std::size_t lookup(const std::string& value) const;
  std::size_t size() const { return index_.size() + 1; }

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

/// WS-DREAM dataset #1 layout: a whitespace-separated matrix with one row per
/// user (-1 marks a missing entry) and tab-separated user / service lists
/// with a header row. Empty list paths skip context loading.
QoSDataset load_wsdream(const std::filesystem::path& matrix_path, const std::filesystem::path& user_list_path,
                        const std::filesystem::path& service_list_path, const std::vector<std::string>& user_fields,
                        const std::vector<std::string>& service_fields);

/// Generic CSV with header `user_id,service_id,value,<attributes...>`.
/// Entity ids are re-indexed densely in order of first appearance. For
/// duplicate (user, service) pairs the last occurrence wins.
QoSDataset load_triplets_csv(const std::filesystem::path& path, const std::vector<std::string>& user_fields,
                             const std::vector<std::string>& service_fields);

QoSDataset normalize(const QoSDataset& ds);
QoSDataset denormalize(const QoSDataset& ds);

struct Split {
  double density = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train;  // indices into QoSDataset::triplets
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

inline constexpr double kValidationFraction = 0.05;

/// floor(fraction * users * services)
std::size_t cell_count(const QoSDataset& ds, double fraction);

/// Permutes the observed entries once and takes floor(density*m*n) for
/// training, floor(0.05*m*n) for validation and the rest for testing.
Split make_split(const QoSDataset& ds, double density, std::uint64_t seed);

/// Writes `index,section` rows for audit.
void write_split_manifest(const Split& split, const std::filesystem::path& path);

struct CorruptedTestSet {
  double noise_ratio = 0.0;                  // percent
  std::vector<std::size_t> perturbed;        // sorted positions within the test list
  std::vector<Triplet> triplets;             // test triplets, re-identified on `perturbed`
};

/// Re-identifies floor(p/100 * N_test) randomly chosen test triplets with
/// uniformly drawn users and services; values are left untouched.
CorruptedTestSet corrupt_test(const Split& split, const QoSDataset& ds, double noise_percent, std::uint64_t seed);

std::vector<Triplet> select(const QoSDataset& ds, const std::vector<std::size_t>& indices);

/// Low-rank positive QoS matrix with categorical context, for tests and demos.
struct SyntheticSpec {
  std::size_t users = 60;
  std::size_t services = 80;
  double observed_fraction = 1.0;
  std::size_t rank = 3;
  std::size_t user_groups = 4;     // vocabulary of the single user attribute
  std::size_t service_groups = 5;  // vocabulary of the single service attribute
  double noise = 0.05;
  std::uint64_t seed = 1;
};
QoSDataset make_synthetic(const SyntheticSpec& spec);

}  // namespace qosdiff::data
