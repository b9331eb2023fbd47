#include "ivcace/simulation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

#include "ivcace/estimands.hpp"
#include "ivcace/logistic.hpp"
#include "ivcace/model.hpp"
#include "ivcace/parallel.hpp"
#include "ivcace/rng.hpp"

namespace ivcace {

namespace {

constexpr std::size_t kN = 0;
constexpr std::size_t kC = 1;
constexpr std::size_t kA = 2;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::Mcar: return "mcar";
    case Scenario::Mar: return "mar";
    case Scenario::Nonignorable: return "nonignorable";
  }
  return "unknown";
}

Scenario parse_scenario(const std::string& name) {
  const auto n = lower(name);
  if (n == "mcar") return Scenario::Mcar;
  if (n == "mar") return Scenario::Mar;
  if (n == "nonignorable" || n == "ni") return Scenario::Nonignorable;
  throw ValidationError("unknown scenario '" + name + "' (expected mcar, mar or nonignorable)");
}

double SingleCovScenario::theta(int z, ComplianceClass u, int x) const {
  switch (u) {
    case ComplianceClass::Complier: return theta_complier[static_cast<std::size_t>(z)][static_cast<std::size_t>(x)];
    case ComplianceClass::AlwaysTaker: return theta_always[static_cast<std::size_t>(x)];
    case ComplianceClass::NeverTaker: return theta_never[static_cast<std::size_t>(x)];
  }
  return 0.0;
}

double SingleCovScenario::rho(int y, int z, ComplianceClass u) const {
  switch (u) {
    case ComplianceClass::Complier: return rho_complier[static_cast<std::size_t>(y)][static_cast<std::size_t>(z)];
    case ComplianceClass::AlwaysTaker: return rho_always[static_cast<std::size_t>(y)];
    case ComplianceClass::NeverTaker: return rho_never[static_cast<std::size_t>(y)];
  }
  return 0.0;
}

double SingleCovScenario::true_cace(int x) const {
  return theta(1, ComplianceClass::Complier, x) - theta(0, ComplianceClass::Complier, x);
}

double SingleCovScenario::missing_rate() const {
  double miss = 0.0;
  for (ComplianceClass u : kAllClasses) {
    const auto ui = static_cast<std::size_t>(index_of(u));
    for (int x = 0; x < 2; ++x) {
      const double px = x == 1 ? m_u[ui] : 1.0 - m_u[ui];
      for (int z = 0; z < 2; ++z) {
        const double pz = z == 1 ? xi_x[static_cast<std::size_t>(x)] : 1.0 - xi_x[static_cast<std::size_t>(x)];
        for (int y = 0; y < 2; ++y) {
          const double t = theta(z, u, x);
          const double py = y == 1 ? t : 1.0 - t;
          miss += w_u[ui] * px * pz * py * (1.0 - rho(y, z, u));
        }
      }
    }
  }
  return miss;
}

void SingleCovScenario::validate() const {
  const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  double total = 0.0;
  for (double v : w_u) {
    if (!in_unit(v)) throw ValidationError("scenario: class probabilities must lie in [0, 1]");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ValidationError("scenario: class probabilities must sum to 1");
  std::vector<double> all;
  all.insert(all.end(), m_u.begin(), m_u.end());
  all.insert(all.end(), xi_x.begin(), xi_x.end());
  for (const auto& r : theta_complier) all.insert(all.end(), r.begin(), r.end());
  all.insert(all.end(), theta_always.begin(), theta_always.end());
  all.insert(all.end(), theta_never.begin(), theta_never.end());
  for (const auto& r : rho_complier) all.insert(all.end(), r.begin(), r.end());
  all.insert(all.end(), rho_always.begin(), rho_always.end());
  all.insert(all.end(), rho_never.begin(), rho_never.end());
  for (double v : all) {
    if (!in_unit(v)) throw ValidationError("scenario: probabilities must lie in [0, 1]");
  }
}

SingleCovScenario scenario_params(Scenario s) {
  SingleCovScenario sc;
  sc.w_u[kN] = 0.2;
  sc.w_u[kA] = 0.375;
  sc.w_u[kC] = 1.0 - 0.2 - 0.375;
  sc.m_u[kN] = 0.5;
  sc.m_u[kA] = 0.25;
  sc.m_u[kC] = 0.8;
  sc.xi_x = {0.6, 0.4};
  sc.theta_never = {0.3, 0.5};
  sc.theta_always = {0.7, 0.8};
  sc.theta_complier[1] = {0.45, 0.7};
  sc.theta_complier[0] = {0.3, 0.45};

  switch (s) {
    case Scenario::Mcar:
      sc.rho_never = {0.88, 0.88};
      sc.rho_always = {0.88, 0.88};
      sc.rho_complier = {{{0.88, 0.88}, {0.88, 0.88}}};
      break;
    case Scenario::Mar:
      sc.rho_never = {0.94, 0.88};
      sc.rho_always = {0.97, 0.78};
      // [y][z]
      sc.rho_complier = {{{0.94, 0.97}, {0.88, 0.78}}};
      break;
    case Scenario::Nonignorable:
      sc.rho_never = {0.8, 0.75};
      sc.rho_always = {0.95, 1.0};
      sc.rho_complier = {{{0.83, 0.9}, {0.97, 0.8}}};
      break;
  }
  return sc;
}

CovariateSpec single_cov_spec() {
  CovariateSpec spec;
  spec.names = {"x"};
  spec.levels = {2};
  spec.fully_observed = {false};
  spec.response_yz_interaction = true;
  return spec;
}

ParamSet to_param_set(const SingleCovScenario& sc) {
  sc.validate();
  const CovariateSpec spec = single_cov_spec();
  ParamSet ps = ParamSet::zeros(spec);

  std::array<std::array<double, 3>, 2> joint{};  // P(X = x, U = u)
  for (int x = 0; x < 2; ++x) {
    for (std::size_t u = 0; u < 3; ++u) {
      joint[static_cast<std::size_t>(x)][u] = sc.w_u[u] * (x == 1 ? sc.m_u[u] : 1.0 - sc.m_u[u]);
    }
  }
  for (int x = 0; x < 2; ++x) {
    const auto& j = joint[static_cast<std::size_t>(x)];
    ps.w[static_cast<std::size_t>(x)] = j[0] + j[1] + j[2];
  }
  const auto two = [](double at0, double at1) {
    Eigen::VectorXd v(2);
    v << at0, at1 - at0;
    return v;
  };
  ps.alpha = two(logit(sc.xi_x[0]), logit(sc.xi_x[1]));
  const auto log_ratio = [&](int x, std::size_t u) {
    const auto& j = joint[static_cast<std::size_t>(x)];
    return std::log(j[u] / j[kN]);
  };
  ps.delta_c = two(log_ratio(0, kC), log_ratio(1, kC));
  ps.delta_a = two(log_ratio(0, kA), log_ratio(1, kA));
  ps.beta_c0 = two(logit(sc.theta_complier[0][0]), logit(sc.theta_complier[0][1]));
  ps.beta_c1 = two(logit(sc.theta_complier[1][0]), logit(sc.theta_complier[1][1]));
  ps.beta_a = two(logit(sc.theta_always[0]), logit(sc.theta_always[1]));
  ps.beta_n = two(logit(sc.theta_never[0]), logit(sc.theta_never[1]));

  auto& r = ps.response[0];
  const auto intercept = [](double v) {
    Eigen::VectorXd t(1);
    t << v;
    return t;
  };
  r.theta[kN] = intercept(logit(sc.rho_never[0]));
  r.gamma[kN] = logit(sc.rho_never[1]) - logit(sc.rho_never[0]);
  r.theta[kA] = intercept(logit(sc.rho_always[0]));
  r.gamma[kA] = logit(sc.rho_always[1]) - logit(sc.rho_always[0]);
  const double base = logit(sc.rho_complier[0][0]);
  r.theta[kC] = intercept(base);
  r.gamma[kC] = logit(sc.rho_complier[1][0]) - base;
  r.eta_complier = logit(sc.rho_complier[0][1]) - base;
  r.eta_yz_complier = logit(sc.rho_complier[1][1]) - base - r.gamma[kC] - r.eta_complier;
  return ps;
}

GeneratedData generate(const SingleCovScenario& sc, std::size_t n, std::uint64_t seed,
                       bool with_debug) {
  sc.validate();
  if (n < 1) throw ValidationError("generate: n must be at least 1");
  Rng rng(seed);
  GeneratedData out;
  out.records.reserve(n);
  if (with_debug) out.debug.reserve(n);
  const std::vector<double> w(sc.w_u.begin(), sc.w_u.end());
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = static_cast<ComplianceClass>(rng.categorical(w));
    const auto ui = static_cast<std::size_t>(index_of(u));
    const int x = rng.bernoulli(sc.m_u[ui]) ? 1 : 0;
    const int z = rng.bernoulli(sc.xi_x[static_cast<std::size_t>(x)]) ? 1 : 0;
    const int d = treatment_for(u, z);
    const int y = rng.bernoulli(sc.theta(z, u, x)) ? 1 : 0;
    const int r = rng.bernoulli(sc.rho(y, z, u)) ? 1 : 0;
    out.records.push_back(Record{{r == 1 ? x : kMissing}, z, d, y});
    if (with_debug) out.debug.push_back(DebugRow{u, {x}, {r}, 0});
  }
  return out;
}

GeneratedData generate_from_params(const CovariateSpec& spec, const ParamSet& params,
                                   std::size_t n, std::uint64_t seed,
                                   const SensitivityParams* sens, bool with_debug) {
  if (n < 1) throw ValidationError("generate: n must be at least 1");
  const CellGeometry geom(spec);
  params.validate(spec);
  const std::size_t F = spec.num_fully_observed();
  Rng rng(seed);
  GeneratedData out;
  out.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cell = rng.categorical(params.w);
    const auto& x = geom.design(cell);
    const int z = rng.bernoulli(prob_iv(params, x)) ? 1 : 0;
    const auto pu = prob_compliance(params, x);
    const auto u = static_cast<ComplianceClass>(rng.categorical({pu[0], pu[1], pu[2]}));
    const int q = (sens && rng.bernoulli(sens->pi)) ? 1 : 0;
    const double py = sens ? prob_outcome(params, u, z, x, q, *sens) : prob_outcome(params, u, z, x);
    const int y = rng.bernoulli(py) ? 1 : 0;
    Record rec{geom.levels_of(cell), z, treatment_for(u, z), y};
    DebugRow dbg{u, rec.x, std::vector<int>(spec.num_partial(), 1), q};
    const auto& xo = geom.observed_design(geom.observed_cell(cell));
    for (std::size_t j = 0; j < spec.num_partial(); ++j) {
      const double pr = sens ? prob_response(params, spec, j, u, z, y, xo, q, *sens)
                             : prob_response(params, spec, j, u, z, y, xo);
      if (!rng.bernoulli(pr)) {
        rec.x[F + j] = kMissing;
        dbg.r[j] = 0;
      }
    }
    out.records.push_back(std::move(rec));
    if (with_debug) out.debug.push_back(std::move(dbg));
  }
  return out;
}

RegistryDesign registry_like_design() {
  RegistryDesign d;
  d.spec.names = {"gest_age", "precare", "education"};
  d.spec.levels = {3, 2, 2};
  d.spec.fully_observed = {true, false, false};
  const CellGeometry geom(d.spec);
  ParamSet& p = d.params = ParamSet::zeros(d.spec);
  const double ga[3] = {0.15, 0.35, 0.50};
  const double late_care = 0.3;
  const double college = 0.4;
  for (std::size_t c = 0; c < geom.num_cells(); ++c) {
    const auto lv = geom.levels_of(c);
    p.w[c] = ga[lv[0]] * (lv[1] == 1 ? late_care : 1.0 - late_care) *
             (lv[2] == 1 ? college : 1.0 - college);
  }
  const auto vec = [](std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double e : v) out(i++) = e;
    return out;
  };
  p.alpha = vec({0.2, 0.1, 0.0, 0.1});
  p.delta_a = vec({1.5, -1.2, 0.0, 0.3});
  p.delta_c = vec({-0.5, 0.6, 0.05, -0.2});
  p.beta_c0 = vec({1.0, -2.4, 0.3, -0.3});
  p.beta_c1 = vec({-0.3, -1.8, 0.2, -0.5});
  p.beta_a = vec({0.5, -1.8, 0.2, -0.4});
  p.beta_n = vec({1.2, -2.2, 0.2, -0.3});
  // Prenatal-care start: roughly 10% missing, more often after a death.
  auto& pre = p.response[0];
  pre.theta[kN] = vec({2.0, 0.3});
  pre.theta[kC] = vec({2.2, 0.3});
  pre.theta[kA] = vec({1.6, 0.3});
  pre.gamma = {-0.8, -0.8, -0.8};
  pre.eta_complier = 0.3;
  // Maternal education: roughly 2% missing.
  auto& edu = p.response[1];
  edu.theta[kN] = vec({3.6, 0.3});
  edu.theta[kC] = vec({3.8, 0.3});
  edu.theta[kA] = vec({3.3, 0.3});
  edu.gamma = {-0.6, -0.6, -0.6};
  edu.eta_complier = 0.2;
  return d;
}

// ---------------------------------------------------------------------------

const char* to_string(StudyMethod m) {
  switch (m) {
    case StudyMethod::EmNonignorable: return "em_ni";
    case StudyMethod::CompleteCase: return "complete_case";
    case StudyMethod::MarImpute: return "mar_impute";
  }
  return "unknown";
}

StudyMethod parse_study_method(const std::string& name) {
  const auto n = lower(name);
  if (n == "em_ni") return StudyMethod::EmNonignorable;
  if (n == "complete_case") return StudyMethod::CompleteCase;
  if (n == "mar_impute") return StudyMethod::MarImpute;
  throw ValidationError("unknown study method '" + name +
                        "' (expected em_ni, complete_case or mar_impute)");
}

void StudyConfig::validate() const {
  if (n_replications < 1 || n_per_dataset < 1) {
    throw ValidationError("study: replication count and dataset size must be positive");
  }
  if (custom) custom->validate();
}

StudySummary run_study(const StudyConfig& config, const FitConfig& fit,
                       const ImputationConfig& impute) {
  config.validate();
  fit.validate();
  impute.validate();
  const SingleCovScenario sc = config.custom ? *config.custom : scenario_params(config.scenario);
  const CovariateSpec spec = single_cov_spec();
  const std::vector<EstimandTarget> targets{EstimandTarget::cell_cace({0}),
                                            EstimandTarget::cell_cace({1})};
  const double nan = std::numeric_limits<double>::quiet_NaN();

  StudySummary summary;
  summary.scenario = config.scenario;
  const std::size_t R = config.n_replications;
  summary.estimates.assign(config.methods.size(), std::vector<std::array<double, 2>>(R, {nan, nan}));
  if (config.methods.empty()) return summary;

  parallel_for(R, config.workers, [&](std::size_t rep) {
    const auto data = generate(sc, config.n_per_dataset, derive_seed(config.seed, rep)).records;
    for (std::size_t m = 0; m < config.methods.size(); ++m) {
      auto& slot = summary.estimates[m][rep];
      try {
        switch (config.methods[m]) {
          case StudyMethod::EmNonignorable: {
            const auto f = fit_em(data, spec, fit);
            slot = {evaluate_target(f, targets[0]), evaluate_target(f, targets[1])};
            break;
          }
          case StudyMethod::CompleteCase: {
            const auto f = complete_case_fit(data, spec, fit);
            slot = {evaluate_target(f, targets[0]), evaluate_target(f, targets[1])};
            break;
          }
          case StudyMethod::MarImpute: {
            ImputationConfig ic = impute;
            ic.seed = derive_seed(impute.seed ^ config.seed, rep);
            const auto res = mar_impute_fit(data, spec, fit, ic, targets);
            slot = {res.pooled[0].estimate, res.pooled[1].estimate};
            break;
          }
        }
      } catch (const std::runtime_error&) {
        slot = {nan, nan};
      }
    }
  });

  for (std::size_t m = 0; m < config.methods.size(); ++m) {
    for (int level = 1; level >= 0; --level) {
      StudyRow row;
      row.method = config.methods[m];
      row.level = level;
      row.truth = sc.true_cace(level);
      double sum = 0.0;
      for (const auto& e : summary.estimates[m]) {
        const double v = e[static_cast<std::size_t>(level)];
        if (std::isnan(v)) {
          ++row.n_failed;
        } else {
          ++row.n_ok;
          sum += v;
        }
      }
      if (static_cast<double>(row.n_failed) > config.max_failure_fraction * static_cast<double>(R)) {
        std::ostringstream msg;
        msg << "study aborted: " << row.n_failed << " of " << R << " replications failed for method "
            << to_string(row.method);
        throw EstimationError(msg.str());
      }
      row.mean = row.n_ok > 0 ? sum / static_cast<double>(row.n_ok) : nan;
      double ss = 0.0;
      for (const auto& e : summary.estimates[m]) {
        const double v = e[static_cast<std::size_t>(level)];
        if (!std::isnan(v)) ss += (v - row.mean) * (v - row.mean);
      }
      row.sd = row.n_ok > 1 ? std::sqrt(ss / static_cast<double>(row.n_ok - 1)) : 0.0;
      row.percent_bias = 100.0 * std::abs(row.mean - row.truth) / row.truth;
      summary.rows.push_back(row);
    }
  }
  return summary;
}

}  // namespace ivcace
