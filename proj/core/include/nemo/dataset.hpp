#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace nemo {

/// Fixed offline data: N designs of dimension d (row-major) and their scores.
struct OfflineDataset {
  int dim = 0;
  std::vector<double> X;
  std::vector<double> y;
  std::string name;
  nlohmann::json metadata = nlohmann::json::object();

  OfflineDataset() = default;
  OfflineDataset(int dim, std::vector<double> X, std::vector<double> y,
                 std::string name = {});

  std::size_t size() const { return y.size(); }
  bool empty() const { return y.empty(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(X).subspan(i * dim, dim);
  }
  void push_back(std::span<const double> x, double value);

  /// Throws DataError on an empty dataset, mismatched sizes or non-finite
  /// entries.
  void validate() const;

  /// Indices sorted by y, descending; ties keep dataset order.
  std::vector<std::size_t> order_by_score_desc() const;

  bool operator==(const OfflineDataset& o) const {
    return dim == o.dim && X == o.X && y == o.y;
  }
};

/// CSV with header x0,...,x{d-1},y. Values are written with 17 significant
/// digits so a save/load round trip is exact.
void save_dataset(const OfflineDataset& data, const std::filesystem::path& path);
OfflineDataset load_dataset(const std::filesystem::path& path);
std::string dataset_to_csv(const OfflineDataset& data);
OfflineDataset dataset_from_csv(const std::string& text);

/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents);

}  // namespace nemo
