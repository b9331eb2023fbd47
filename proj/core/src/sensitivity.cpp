#include "ivcace/sensitivity.hpp"

#include <cmath>
#include <sstream>

#include "ivcace/parallel.hpp"

namespace ivcace {

FitResult fit_with_q(const Dataset& data, const CovariateSpec& spec, const SensitivityParams& sens,
                     const FitConfig& config, const ParamSet* warm_start) {
  sens.validate();
  FitOptions opts;
  opts.sensitivity = &sens;
  if (warm_start) {
    FitConfig single = config;
    single.n_restarts = 1;
    opts.warm_start = warm_start;
    try {
      FitResult warm = fit_em(data, spec, single, opts);
      if (warm.converged) return warm;
    } catch (const EstimationError&) {
    }
    opts.warm_start = nullptr;
  }
  return fit_em(data, spec, config, opts);
}

std::pair<double, double> shifted_ci(double a, double b, double c, double d) {
  if (!(b <= a && a <= c)) throw ValidationError("shifted_ci: base interval must satisfy b <= a <= c");
  return {d - (a - b), d + (c - a)};
}

void SensitivityGrid::validate() const {
  if (pi_values.empty() || outcome_odds_ratios.empty() || response_odds_ratios.empty()) {
    throw ValidationError("sensitivity grid: every axis needs at least one value");
  }
  for (double p : pi_values) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("sensitivity grid: pi values must lie in [0, 1]");
  }
  for (const auto* axis : {&outcome_odds_ratios, &response_odds_ratios}) {
    for (double r : *axis) {
      if (!(r > 0.0) || !std::isfinite(r)) throw ValidationError("sensitivity grid: odds ratios must be positive");
    }
  }
  if (cells.empty()) throw ValidationError("sensitivity grid: no target cells");
  if (workers < 1) throw ValidationError("sensitivity grid: workers must be at least 1");
  if (bootstrap) bootstrap->validate();
}

std::vector<GridPoint> grid_points(const SensitivityGrid& grid) {
  std::vector<GridPoint> out;
  for (double pi : grid.pi_values) {
    for (double xo : grid.outcome_odds_ratios) {
      for (double ko : grid.response_odds_ratios) {
        if (grid.pair_by_magnitude && std::abs(std::abs(std::log(xo)) - std::abs(std::log(ko))) > 1e-9) {
          continue;
        }
        out.push_back({pi, xo, ko});
      }
    }
  }
  return out;
}

SensitivityReport sensitivity_grid(const Dataset& data, const CovariateSpec& spec,
                                   const SensitivityGrid& grid, const FitConfig& config,
                                   const FitResult& base_fit, const CaceReport& base_report) {
  grid.validate();
  std::vector<const CaceReportRow*> base_rows;
  for (const auto& cell : grid.cells) {
    const auto* row = base_report.find(EstimandTarget::cell_cace(cell));
    if (!row) {
      throw ValidationError("sensitivity grid: base report has no row for " +
                            EstimandTarget::cell_cace(cell).label());
    }
    base_rows.push_back(row);
  }
  const auto points = grid_points(grid);
  const std::size_t C = grid.cells.size();
  std::vector<SensitivityRow> rows(points.size() * C);

  parallel_for(points.size(), grid.workers, [&](std::size_t p) {
    const GridPoint& gp = points[p];
    const auto sens = SensitivityParams::uniform(gp.pi, std::log(gp.outcome_odds_ratio),
                                                 std::log(gp.response_odds_ratio), spec.num_partial());
    for (std::size_t k = 0; k < C; ++k) {
      rows[p * C + k].cell = grid.cells[k];
      rows[p * C + k].point = gp;
    }
    try {
      const FitResult fit = fit_with_q(data, spec, sens, config, &base_fit.params);
      std::optional<CaceReport> boot;
      if (grid.bootstrap) {
        std::vector<EstimandTarget> targets;
        for (const auto& cell : grid.cells) targets.push_back(EstimandTarget::cell_cace(cell));
        FitOptions opts;
        opts.sensitivity = &sens;
        boot = bootstrap_ci(data, spec, config, *grid.bootstrap, targets, fit, opts);
      }
      for (std::size_t k = 0; k < C; ++k) {
        auto& row = rows[p * C + k];
        const auto& base = *base_rows[k];
        row.estimate = evaluate_target(fit, EstimandTarget::cell_cace(grid.cells[k]));
        if (boot) {
          row.ci_low = boot->rows[k].lower;
          row.ci_high = boot->rows[k].upper;
        } else {
          std::tie(row.ci_low, row.ci_high) = shifted_ci(base.estimate, base.lower, base.upper, row.estimate);
        }
        const bool base_excludes = base.lower > 0.0 || base.upper < 0.0;
        row.flip = base_excludes && row.ci_low <= 0.0 && row.ci_high >= 0.0;
      }
    } catch (const std::runtime_error& e) {
      for (std::size_t k = 0; k < C; ++k) {
        rows[p * C + k].ok = false;
        rows[p * C + k].error = e.what();
      }
    } catch (const std::invalid_argument& e) {
      for (std::size_t k = 0; k < C; ++k) {
        rows[p * C + k].ok = false;
        rows[p * C + k].error = e.what();
      }
    }
  });

  SensitivityReport report;
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (!rows[p * C].ok) ++report.n_failed_points;
  }
  report.rows = std::move(rows);
  return report;
}

}  // namespace ivcace
