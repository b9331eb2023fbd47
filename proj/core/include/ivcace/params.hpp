#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "ivcace/types.hpp"

namespace ivcace {

/// Coefficients of the response (non-missingness) model for one partially
/// observed covariate. The instrument shift exists only for compliers; always
/// and never takers have it fixed at zero by the exclusion restriction.
struct ResponseParams {
  /// theta[u] acts on (intercept, fully observed covariates).
  std::array<Eigen::VectorXd, 3> theta;
  /// Shift for y = 1, per class.
  std::array<double, 3> gamma{0.0, 0.0, 0.0};
  /// Complier shift for z = 1.
  double eta_complier = 0.0;
  /// Complier shift for y = 1 and z = 1 jointly; used only when the spec
  /// enables the interaction.
  double eta_yz_complier = 0.0;
  /// When false the covariate is treated as always observed and its response
  /// factor is dropped from the likelihood.
  bool modeled = true;
};

/// Every model parameter. Outcome coefficients for always and never takers
/// are single vectors shared by both instrument arms.
struct ParamSet {
  std::vector<double> w;
  Eigen::VectorXd alpha;
  Eigen::VectorXd delta_a;
  Eigen::VectorXd delta_c;
  Eigen::VectorXd beta_c0;
  Eigen::VectorXd beta_c1;
  Eigen::VectorXd beta_a;
  Eigen::VectorXd beta_n;
  std::vector<ResponseParams> response;

  /// All coefficients zero, w uniform.
  static ParamSet zeros(const CovariateSpec& spec);

  const Eigen::VectorXd& beta(ComplianceClass u, int z) const;
  Eigen::VectorXd& beta(ComplianceClass u, int z);

  /// Flat view of every free coefficient and cell mass, in a fixed order.
  std::vector<double> flatten() const;

  /// Throws ValidationError when dimensions disagree with `spec` or w is not
  /// a probability vector.
  void validate(const CovariateSpec& spec) const;
};

double max_abs_difference(const ParamSet& a, const ParamSet& b);

/// Latent binary risk factor Q used by the sensitivity analysis. Q is
/// independent of covariates, compliance class and instrument, shifts the
/// outcome log-odds by xi(u, z) and the response log-odds by kappa(j, u).
struct SensitivityParams {
  double pi = 0.0;
  double xi_c0 = 0.0;
  double xi_c1 = 0.0;
  double xi_a = 0.0;  // shared across z
  double xi_n = 0.0;  // shared across z
  /// kappa[j][u]; an empty vector means zero for every covariate.
  std::vector<std::array<double, 3>> kappa;

  double xi(ComplianceClass u, int z) const;
  double kappa_for(std::size_t j, ComplianceClass u) const;

  /// One scalar xi for every (u, z) and one scalar kappa for every (j, u).
  static SensitivityParams uniform(double pi, double xi, double kappa, std::size_t num_partial);

  void validate() const;
};

}  // namespace ivcace
