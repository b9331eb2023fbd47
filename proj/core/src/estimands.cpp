#include "ivcace/estimands.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ivcace/model.hpp"
#include "ivcace/parallel.hpp"
#include "ivcace/rng.hpp"

namespace ivcace {

std::vector<Cell> all_cells(const CovariateSpec& spec) {
  const CellGeometry geom(spec);
  std::vector<Cell> out;
  out.reserve(geom.num_cells());
  for (std::size_t c = 0; c < geom.num_cells(); ++c) out.push_back(geom.levels_of(c));
  return out;
}

namespace {

Eigen::VectorXd checked_design(const CovariateSpec& spec, const Cell& cell) {
  if (cell.size() != spec.num_covariates()) {
    throw ValidationError("cell has " + std::to_string(cell.size()) + " entries, expected " +
                          std::to_string(spec.num_covariates()));
  }
  for (std::size_t k = 0; k < cell.size(); ++k) {
    if (cell[k] < 0 || cell[k] >= spec.levels[k]) {
      throw ValidationError("cell level out of range for covariate " + std::to_string(k));
    }
  }
  return design_vector(cell);
}

double fitted_cace(const FitResult& fit, const Eigen::VectorXd& x) {
  return fit.sensitivity ? cace_with_q(fit.params, *fit.sensitivity, x) : cace(fit.params, x);
}

}  // namespace

std::vector<CaceRow> cace_table(const FitResult& fit, const std::vector<Cell>& cells) {
  std::vector<CaceRow> out;
  out.reserve(cells.size());
  for (const auto& c : cells) out.push_back({c, fitted_cace(fit, checked_design(fit.spec, c))});
  return out;
}

std::vector<ComplianceRow> compliance_proportions(const FitResult& fit,
                                                  const std::vector<Cell>& cells) {
  std::vector<ComplianceRow> out;
  out.reserve(cells.size());
  for (const auto& c : cells) {
    const auto p = prob_compliance(fit.params, checked_design(fit.spec, c));
    out.push_back({c, p[static_cast<std::size_t>(index_of(ComplianceClass::AlwaysTaker))],
                   p[static_cast<std::size_t>(index_of(ComplianceClass::Complier))],
                   p[static_cast<std::size_t>(index_of(ComplianceClass::NeverTaker))]});
  }
  return out;
}

const char* to_string(Weighting w) {
  return w == Weighting::CellProbability ? "cell_probability" : "complier_count";
}

double weighted_cace(const FitResult& fit, Weighting weighting) {
  const CellGeometry geom(fit.spec);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t c = 0; c < geom.num_cells(); ++c) {
    const auto& x = geom.design(c);
    double weight = fit.params.w[c];
    if (weighting == Weighting::ComplierCount) {
      weight *= prob_compliance(fit.params, x)[static_cast<std::size_t>(index_of(ComplianceClass::Complier))];
    }
    num += weight * fitted_cace(fit, x);
    den += weight;
  }
  if (weighting == Weighting::CellProbability) return num;
  if (!(den > 0.0)) throw EstimationError("weighted_cace: no complier mass");
  return num / den;
}

EstimandTarget EstimandTarget::weighted(Weighting w) {
  return {w == Weighting::CellProbability ? TargetKind::WeightedCellProbability
                                          : TargetKind::WeightedComplierCount,
          {}};
}

std::string EstimandTarget::label() const {
  switch (kind) {
    case TargetKind::WeightedCellProbability: return "weighted_cell_probability";
    case TargetKind::WeightedComplierCount: return "weighted_complier_count";
    case TargetKind::CellCace: break;
  }
  std::ostringstream s;
  s << "cace[";
  for (std::size_t k = 0; k < cell.size(); ++k) s << (k ? "," : "") << cell[k] + 1;
  s << "]";
  return s.str();
}

double evaluate_target(const FitResult& fit, const EstimandTarget& target) {
  switch (target.kind) {
    case TargetKind::CellCace: return fitted_cace(fit, checked_design(fit.spec, target.cell));
    case TargetKind::WeightedCellProbability: return weighted_cace(fit, Weighting::CellProbability);
    case TargetKind::WeightedComplierCount: return weighted_cace(fit, Weighting::ComplierCount);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

void BootstrapConfig::validate() const {
  if (n_resamples < 1) throw ValidationError("bootstrap: n_resamples must be at least 1");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw ValidationError("bootstrap: ci_level must lie in (0, 1)");
  if (workers < 1) throw ValidationError("bootstrap: workers must be at least 1");
}

const CaceReportRow* CaceReport::find(const EstimandTarget& target) const {
  for (const auto& r : rows) {
    if (r.target == target) return &r;
  }
  return nullptr;
}

std::pair<double, double> percentile_interval(std::vector<double> values, double level) {
  if (values.empty()) throw ValidationError("percentile_interval: no values");
  std::sort(values.begin(), values.end());
  const double a = (1.0 - level) / 2.0;
  const double last = static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(a * last + 1e-9));
  const auto hi = static_cast<std::size_t>(std::ceil((1.0 - a) * last - 1e-9));
  return {values[lo], values[std::min(hi, values.size() - 1)]};
}

CaceReport bootstrap_ci(const Dataset& data, const CovariateSpec& spec, const FitConfig& config,
                        const BootstrapConfig& boot, const std::vector<EstimandTarget>& targets,
                        const FitResult& point_fit, const FitOptions& opts) {
  boot.validate();
  config.validate();
  if (data.empty()) throw ValidationError("bootstrap: dataset is empty");
  for (std::size_t i = 0; i < data.size(); ++i) validate_record(data[i], spec, i);

  const std::size_t B = static_cast<std::size_t>(boot.n_resamples);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<double>> estimates(B, std::vector<double>(targets.size(), nan));
  std::vector<char> ok(B, 0);

  FitConfig replicate_config = config;
  replicate_config.n_restarts = 1;
  FitOptions replicate_opts = opts;
  replicate_opts.warm_start = &point_fit.params;

  parallel_for(B, boot.workers, [&](std::size_t b) {
    Rng rng(derive_seed(boot.seed, b));
    ObservedCounts counts(spec);
    for (std::size_t i = 0; i < data.size(); ++i) counts.add(data[rng.index(data.size())]);
    try {
      // Resamples that lose every record with a missing value fit without
      // the corresponding response model; fit_em detects that from counts.
      FitOptions o = replicate_opts;
      const FitResult f = fit_em(counts, replicate_config, o);
      for (std::size_t t = 0; t < targets.size(); ++t) estimates[b][t] = evaluate_target(f, targets[t]);
      ok[b] = 1;
    } catch (const EstimationError&) {
      ok[b] = 0;
    }
  });

  CaceReport report;
  report.ci_level = boot.ci_level;
  report.n_resamples = boot.n_resamples;
  report.n_dropped = static_cast<int>(std::count(ok.begin(), ok.end(), 0));
  if (static_cast<double>(report.n_dropped) > boot.max_drop_fraction * static_cast<double>(B)) {
    throw EstimationError("bootstrap: " + std::to_string(report.n_dropped) + " of " +
                          std::to_string(B) + " replicates failed");
  }
  report.replicates.assign(targets.size(), {});
  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto& reps = report.replicates[t];
    for (std::size_t b = 0; b < B; ++b) {
      if (ok[b]) reps.push_back(estimates[b][t]);
    }
    CaceReportRow row;
    row.target = targets[t];
    row.estimate = evaluate_target(point_fit, targets[t]);
    double mean = 0.0;
    for (double v : reps) mean += v;
    mean /= static_cast<double>(reps.size());
    double ss = 0.0;
    for (double v : reps) ss += (v - mean) * (v - mean);
    row.sd = reps.size() > 1 ? std::sqrt(ss / static_cast<double>(reps.size() - 1)) : 0.0;
    std::tie(row.lower, row.upper) = percentile_interval(reps, boot.ci_level);
    report.rows.push_back(row);
  }
  return report;
}

CaceReport bootstrap_ci(const Dataset& data, const CovariateSpec& spec, const FitConfig& config,
                        const BootstrapConfig& boot, const std::vector<EstimandTarget>& targets) {
  const FitResult point = fit_em(data, spec, config);
  return bootstrap_ci(data, spec, config, boot, targets, point);
}

}  // namespace ivcace
