#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ivcace/em.hpp"
#include "ivcace/types.hpp"

namespace ivcace {

using Cell = std::vector<int>;

/// Every covariate configuration of the spec, in cell-index order.
std::vector<Cell> all_cells(const CovariateSpec& spec);

struct CaceRow {
  Cell cell;
  double estimate = 0.0;
};

/// Per-cell complier effect. Fits carrying a latent risk factor use the
/// mixture formula over Q.
std::vector<CaceRow> cace_table(const FitResult& fit, const std::vector<Cell>& cells);

struct ComplianceRow {
  Cell cell;
  double p_always = 0.0;
  double p_complier = 0.0;
  double p_never = 0.0;
};

std::vector<ComplianceRow> compliance_proportions(const FitResult& fit,
                                                  const std::vector<Cell>& cells);

enum class Weighting { CellProbability, ComplierCount };
const char* to_string(Weighting w);

/// CellProbability: sum_x w(x) cace(x). ComplierCount: the same average with
/// weights w(x) P(c | x), normalized.
double weighted_cace(const FitResult& fit, Weighting weighting);

enum class TargetKind { CellCace, WeightedCellProbability, WeightedComplierCount };

struct EstimandTarget {
  TargetKind kind = TargetKind::CellCace;
  Cell cell;  // only for CellCace

  static EstimandTarget cell_cace(Cell c) { return {TargetKind::CellCace, std::move(c)}; }
  static EstimandTarget weighted(Weighting w);
  /// "cace[1,2,1]" (1-based level codes), "weighted_cell_probability", ...
  std::string label() const;
  bool operator==(const EstimandTarget&) const = default;
};

double evaluate_target(const FitResult& fit, const EstimandTarget& target);

struct BootstrapConfig {
  int n_resamples = 1000;
  std::uint64_t seed = 1;
  double ci_level = 0.95;
  int workers = 1;
  /// Error out when more replicates than this fraction fail.
  double max_drop_fraction = 0.05;

  void validate() const;
};

struct CaceReportRow {
  EstimandTarget target;
  double estimate = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct CaceReport {
  std::vector<CaceReportRow> rows;
  double ci_level = 0.95;
  int n_resamples = 0;
  int n_dropped = 0;
  /// Replicate estimates per row, in replicate order (dropped ones removed).
  std::vector<std::vector<double>> replicates;

  /// Row for `target`, or nullptr.
  const CaceReportRow* find(const EstimandTarget& target) const;
};

/// Percentile interval from order statistics: indices floor(a (B-1)) and
/// ceil((1-a) (B-1)) of the sorted sample, a = (1 - level) / 2.
std::pair<double, double> percentile_interval(std::vector<double> values, double level);

/// Nonparametric bootstrap over records. Each replicate refits EM from the
/// point-estimate parameters with a single restart. Replicate k draws from
/// its own stream derived from (seed, k), so results do not depend on the
/// worker count.
CaceReport bootstrap_ci(const Dataset& data, const CovariateSpec& spec, const FitConfig& config,
                        const BootstrapConfig& boot, const std::vector<EstimandTarget>& targets,
                        const FitResult& point_fit, const FitOptions& opts = {});

/// Convenience overload that computes the point fit first.
CaceReport bootstrap_ci(const Dataset& data, const CovariateSpec& spec, const FitConfig& config,
                        const BootstrapConfig& boot, const std::vector<EstimandTarget>& targets);

}  // namespace ivcace
