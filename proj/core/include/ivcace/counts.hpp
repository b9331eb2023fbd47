#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "ivcace/model.hpp"
#include "ivcace/types.hpp"

namespace ivcace {

/// Observed-data sufficient statistics: one table per response pattern, each
/// indexed by (observable covariate configuration, d, z, y). With two
/// partially observed covariates the four tables are the usual NN (both
/// observed), N3 (only the first missing), N4 (only the second missing) and
/// NB (both missing).
class ObservedCounts {
 public:
  explicit ObservedCounts(const CovariateSpec& spec);

  const CellGeometry& geometry() const { return *geom_; }
  std::shared_ptr<const CellGeometry> shared_geometry() const { return geom_; }
  const CovariateSpec& spec() const { return geom_->spec(); }

  double at(std::uint32_t mask, std::size_t pattern_cell, int d, int z, int y) const {
    return tables_[mask][index(pattern_cell, d, z, y)];
  }
  double& at(std::uint32_t mask, std::size_t pattern_cell, int d, int z, int y) {
    return tables_[mask][index(pattern_cell, d, z, y)];
  }
  const std::vector<double>& table(std::uint32_t mask) const { return tables_[mask]; }

  /// Number of records with response pattern `mask`.
  double pattern_total(std::uint32_t mask) const;
  double total() const;

  void add(const Record& rec, double weight = 1.0);

  static std::size_t index(std::size_t pattern_cell, int d, int z, int y) {
    return ((pattern_cell * 2 + static_cast<std::size_t>(d)) * 2 + static_cast<std::size_t>(z)) * 2 +
           static_cast<std::size_t>(y);
  }

 private:
  std::shared_ptr<const CellGeometry> geom_;
  std::vector<std::vector<double>> tables_;
};

/// Response pattern of a record (bit j set when partial covariate j is present).
std::uint32_t response_mask(const Record& rec, const CovariateSpec& spec);

/// Partitions the dataset by response pattern. Validates every record.
ObservedCounts tabulate_observed(const Dataset& data, const CovariateSpec& spec);

}  // namespace ivcace
