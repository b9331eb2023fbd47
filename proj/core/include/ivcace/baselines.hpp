#pragma once

#include <cstdint>
#include <vector>

#include "ivcace/em.hpp"
#include "ivcace/estimands.hpp"
#include "ivcace/types.hpp"

namespace ivcace {

struct ImputationConfig {
  int n_imputations = 5;
  int n_cycles = 10;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Point estimate with a normal-theory interval.
struct IntervalEstimate {
  double estimate = 0.0;
  double variance = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Rubin's rules. `within` is the mean of per-imputation variances (NaN when
/// none were supplied) and total = within + (1 + 1/M) between.
struct PooledValue {
  double estimate = 0.0;
  double within = 0.0;
  double between = 0.0;
  double total = 0.0;
};

PooledValue rubin_pool(const std::vector<double>& estimates,
                       const std::vector<double>& variances = {});

/// EM on the records with every covariate present, without response factors.
FitResult complete_case_fit(const Dataset& data, const CovariateSpec& spec, const FitConfig& config);

/// Chained-equation multiple imputation under MAR. Each partially observed
/// covariate is imputed from a multinomial-logistic model on the other
/// covariates and the full z x d x y interaction, with coefficients drawn from their approximate
/// posterior. Returns n_imputations completed datasets, or the input alone
/// when nothing is missing.
std::vector<Dataset> impute_chained(const Dataset& data, const CovariateSpec& spec,
                                    const ImputationConfig& config);

struct MarImputeResult {
  std::vector<FitResult> fits;
  /// One entry per requested target.
  std::vector<PooledValue> pooled;
};

/// Fits EM (no missingness model) to each completed dataset and pools the
/// targets. Within-imputation variances are not available for EM estimates,
/// so `within` and `total` are NaN and `between` carries the imputation
/// spread.
MarImputeResult mar_impute_fit(const Dataset& data, const CovariateSpec& spec,
                               const FitConfig& config, const ImputationConfig& impute,
                               const std::vector<EstimandTarget>& targets);

/// E(Y | D = 1) - E(Y | D = 0) with a Wald interval.
IntervalEstimate unadjusted_difference(const Dataset& data, double ci_level = 0.95);

/// Logistic Y ~ D + X standardized over the empirical covariate
/// distribution, with a delta-method variance, pooled over imputations.
IntervalEstimate regression_adjusted(const Dataset& data, const CovariateSpec& spec,
                                     const ImputationConfig& impute, double ci_level = 0.95);

/// Logistic propensity D ~ X, records cut at propensity quantiles into
/// `n_subclasses` groups (ties go to the lower group), within-group
/// differences averaged with group-size weights, pooled over imputations.
IntervalEstimate propensity_subclassification(const Dataset& data, const CovariateSpec& spec,
                                              const ImputationConfig& impute,
                                              int n_subclasses = 5, double ci_level = 0.95);

/// Two-sided standard normal quantile for a central interval of `level`.
double normal_critical_value(double level);

}  // namespace ivcace
