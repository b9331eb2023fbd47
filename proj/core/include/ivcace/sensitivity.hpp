#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ivcace/em.hpp"
#include "ivcace/estimands.hpp"
#include "ivcace/model.hpp"
#include "ivcace/params.hpp"

namespace ivcace {

/// EM with the latent binary risk factor Q held at fixed (pi, xi, kappa).
/// With `warm_start`, a single warm-started run is tried first; the full
/// random-restart fit is used when it fails or does not converge.
FitResult fit_with_q(const Dataset& data, const CovariateSpec& spec, const SensitivityParams& sens,
                     const FitConfig& config, const ParamSet* warm_start = nullptr);

/// Recenters the base interval [b, c] around a at the new estimate d:
/// [d - (a - b), d + (c - a)]. Requires b <= a <= c.
std::pair<double, double> shifted_ci(double a, double b, double c, double d);

struct SensitivityGrid {
  std::vector<double> pi_values{0.1, 0.5, 0.9};
  std::vector<double> outcome_odds_ratios{2.0, 0.5, 3.0, 1.0 / 3.0};
  std::vector<double> response_odds_ratios{2.0, 0.5, 3.0, 1.0 / 3.0};
  /// Only combine outcome and response odds ratios of the same magnitude
  /// (2 with 2 or 1/2, 3 with 3 or 1/3).
  bool pair_by_magnitude = true;
  std::vector<Cell> cells;
  /// Full bootstrap per grid point instead of the shifted interval.
  std::optional<BootstrapConfig> bootstrap;
  int workers = 1;

  void validate() const;
};

struct GridPoint {
  double pi = 0.0;
  double outcome_odds_ratio = 1.0;
  double response_odds_ratio = 1.0;
};

/// Grid points in output order: pi outermost, then outcome, then response.
std::vector<GridPoint> grid_points(const SensitivityGrid& grid);

struct SensitivityRow {
  Cell cell;
  GridPoint point;
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  /// Base interval excluded zero but this one covers it.
  bool flip = false;
  bool ok = true;
  std::string error;
};

struct SensitivityReport {
  std::vector<SensitivityRow> rows;
  int n_failed_points = 0;
};

/// Fits every grid point (warm-started from `base_fit`) and reports the
/// mixture CACE per cell. `base_report` must hold a row for each cell.
SensitivityReport sensitivity_grid(const Dataset& data, const CovariateSpec& spec,
                                   const SensitivityGrid& grid, const FitConfig& config,
                                   const FitResult& base_fit, const CaceReport& base_report);

}  // namespace ivcace
