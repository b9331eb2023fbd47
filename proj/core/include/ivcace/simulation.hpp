#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ivcace/baselines.hpp"
#include "ivcace/em.hpp"
#include "ivcace/params.hpp"
#include "ivcace/types.hpp"

namespace ivcace {

enum class Scenario { Mcar, Mar, Nonignorable };

const char* to_string(Scenario s);
/// Accepts "mcar", "mar", "nonignorable" (case-insensitive).
Scenario parse_scenario(const std::string& name);

/// Single binary covariate design. Outcome and response probabilities for
/// always and never takers are stored once, so they cannot differ across z.
struct SingleCovScenario {
  /// P(U = u), indexed by ComplianceClass.
  std::array<double, 3> w_u{};
  /// P(X = 1 | U = u).
  std::array<double, 3> m_u{};
  /// P(Z = 1 | X = x) for x = 0, 1.
  std::array<double, 2> xi_x{};
  /// Complier P(Y(z) = 1 | x), [z][x].
  std::array<std::array<double, 2>, 2> theta_complier{};
  /// P(Y = 1 | a, x) and P(Y = 1 | n, x), [x].
  std::array<double, 2> theta_always{};
  std::array<double, 2> theta_never{};
  /// Complier P(R = 1 | y, z), [y][z].
  std::array<std::array<double, 2>, 2> rho_complier{};
  /// P(R = 1 | y, a) and P(R = 1 | y, n), [y].
  std::array<double, 2> rho_always{};
  std::array<double, 2> rho_never{};

  double theta(int z, ComplianceClass u, int x) const;
  double rho(int y, int z, ComplianceClass u) const;
  /// True CACE within covariate level x.
  double true_cace(int x) const;
  /// Marginal probability that the covariate is missing.
  double missing_rate() const;
  void validate() const;
};

SingleCovScenario scenario_params(Scenario s);

/// Covariate layout of the single-covariate design: intercept plus one binary
/// partially observed covariate, with the saturated (y, z) response table.
CovariateSpec single_cov_spec();

/// Exact encoding of a scenario in the general model's parameterization.
ParamSet to_param_set(const SingleCovScenario& sc);

/// Ground truth retained alongside generated records for invariant checks.
struct DebugRow {
  ComplianceClass u = ComplianceClass::NeverTaker;
  std::vector<int> x_true;
  std::vector<int> r;
  int q = 0;
};

struct GeneratedData {
  Dataset records;
  std::vector<DebugRow> debug;  // empty unless requested
};

/// Draws U, X | U, Z | X, D(U, Z), Y | (Z, U, X), R | (Y, Z, U) and masks X
/// when R = 0.
GeneratedData generate(const SingleCovScenario& sc, std::size_t n, std::uint64_t seed,
                       bool with_debug = false);

/// Forward simulation of the general model. With `sens`, a latent Q is drawn
/// and shifts outcome and response log-odds.
GeneratedData generate_from_params(const CovariateSpec& spec, const ParamSet& params,
                                   std::size_t n, std::uint64_t seed,
                                   const SensitivityParams* sens = nullptr,
                                   bool with_debug = false);

/// Three-covariate synthetic design shaped like a premature-birth registry:
/// gestational age (3 levels, fully observed), prenatal-care start and
/// maternal education (2 levels each, partially observed). The complier
/// effect is strongly protective at the lowest gestational-age level and
/// fades to about zero at the highest.
struct RegistryDesign {
  CovariateSpec spec;
  ParamSet params;
};
RegistryDesign registry_like_design();

enum class StudyMethod { EmNonignorable, CompleteCase, MarImpute };
const char* to_string(StudyMethod m);
StudyMethod parse_study_method(const std::string& name);

struct StudyConfig {
  std::size_t n_replications = 500;
  std::size_t n_per_dataset = 5000;
  Scenario scenario = Scenario::Mcar;
  std::vector<StudyMethod> methods{StudyMethod::EmNonignorable, StudyMethod::CompleteCase,
                                   StudyMethod::MarImpute};
  std::uint64_t seed = 1;
  /// Optional override of the scenario's parameter values.
  std::optional<SingleCovScenario> custom;
  int workers = 1;
  /// Abort when more than this fraction of replications fail for a method.
  double max_failure_fraction = 0.02;

  void validate() const;
};

struct StudyRow {
  StudyMethod method;
  int level = 0;
  double truth = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  /// 100 * |mean - truth| / truth.
  double percent_bias = 0.0;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
};

struct StudySummary {
  Scenario scenario;
  std::vector<StudyRow> rows;
  /// Per-replication estimates, [method][replication][level]; NaN marks failures.
  std::vector<std::vector<std::array<double, 2>>> estimates;
};

StudySummary run_study(const StudyConfig& config, const FitConfig& fit,
                       const ImputationConfig& impute);

}  // namespace ivcace
