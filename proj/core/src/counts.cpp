#include "ivcace/counts.hpp"

#include <numeric>

namespace ivcace {

ObservedCounts::ObservedCounts(const CovariateSpec& spec)
    : geom_(std::make_shared<const CellGeometry>(spec)) {
  tables_.resize(geom_->num_patterns());
  for (std::uint32_t m = 0; m < tables_.size(); ++m) {
    tables_[m].assign(geom_->pattern_size(m) * 8, 0.0);
  }
}

double ObservedCounts::pattern_total(std::uint32_t mask) const {
  return std::accumulate(tables_[mask].begin(), tables_[mask].end(), 0.0);
}

double ObservedCounts::total() const {
  double t = 0.0;
  for (std::uint32_t m = 0; m < tables_.size(); ++m) t += pattern_total(m);
  return t;
}

void ObservedCounts::add(const Record& rec, double weight) {
  const std::uint32_t mask = response_mask(rec, spec());
  at(mask, geom_->pattern_cell_of(mask, rec.x), rec.d, rec.z, rec.y) += weight;
}

std::uint32_t response_mask(const Record& rec, const CovariateSpec& spec) {
  const std::size_t F = spec.num_fully_observed();
  std::uint32_t mask = 0;
  for (std::size_t j = 0; j < spec.num_partial(); ++j) {
    if (rec.x[F + j] != kMissing) mask |= 1u << j;
  }
  return mask;
}

ObservedCounts tabulate_observed(const Dataset& data, const CovariateSpec& spec) {
  ObservedCounts counts(spec);
  for (std::size_t i = 0; i < data.size(); ++i) {
    validate_record(data[i], spec, i);
    counts.add(data[i]);
  }
  return counts;
}

}  // namespace ivcace
