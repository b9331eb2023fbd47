#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ivcace/params.hpp"
#include "ivcace/types.hpp"

namespace ivcace {

/// Index arithmetic over the full cross-classification of covariate levels.
/// Cell indices are mixed-radix with the last covariate varying fastest.
/// Response patterns are bitmasks over the partially observed covariates:
/// bit j set means covariate (F + j) is observed.
class CellGeometry {
 public:
  explicit CellGeometry(const CovariateSpec& spec);

  const CovariateSpec& spec() const { return spec_; }
  std::size_t num_cells() const { return num_cells_; }
  std::size_t num_observed_cells() const { return num_obs_cells_; }
  std::size_t num_patterns() const { return std::size_t{1} << spec_.num_partial(); }
  std::uint32_t full_mask() const { return static_cast<std::uint32_t>(num_patterns() - 1); }

  int level(std::size_t cell, std::size_t k) const;
  std::size_t cell_of(const std::vector<int>& levels) const;
  std::vector<int> levels_of(std::size_t cell) const;

  /// Full design vector (intercept first, levels as integer scores).
  const Eigen::VectorXd& design(std::size_t cell) const { return design_[cell]; }
  /// Index of the fully observed part of `cell`.
  std::size_t observed_cell(std::size_t cell) const { return obs_cell_[cell]; }
  /// Design over the intercept and fully observed covariates.
  const Eigen::VectorXd& observed_design(std::size_t obs_cell) const {
    return obs_design_[obs_cell];
  }

  /// Number of distinct observable covariate configurations under `mask`.
  std::size_t pattern_size(std::uint32_t mask) const;
  /// Index of the observable part of `cell` under `mask`.
  std::size_t pattern_cell(std::uint32_t mask, std::size_t cell) const;
  /// Pattern index of a record whose missing entries are kMissing.
  std::size_t pattern_cell_of(std::uint32_t mask, const std::vector<int>& x) const;

 private:
  CovariateSpec spec_;
  std::size_t num_cells_ = 1;
  std::size_t num_obs_cells_ = 1;
  std::vector<std::size_t> strides_;
  std::vector<Eigen::VectorXd> design_;
  std::vector<std::size_t> obs_cell_;
  std::vector<Eigen::VectorXd> obs_design_;
};

/// Design vector (1, levels...) for a full covariate configuration.
Eigen::VectorXd design_vector(const std::vector<int>& levels);

double prob_iv(const ParamSet& params, const Eigen::VectorXd& x);

/// Returns probabilities indexed by ComplianceClass: {never, complier, always}.
std::array<double, 3> prob_compliance(const ParamSet& params, const Eigen::VectorXd& x);

/// P(Y(z) = 1 | U = u, X = x). Identical for both z when u is not a complier.
double prob_outcome(const ParamSet& params, ComplianceClass u, int z, const Eigen::VectorXd& x);
double prob_outcome(const ParamSet& params, ComplianceClass u, int z, const Eigen::VectorXd& x,
                    int q, const SensitivityParams& sens);

/// P(R_j = 1 | Y = y, Z = z, U = u, fully observed covariates).
double prob_response(const ParamSet& params, const CovariateSpec& spec, std::size_t j,
                     ComplianceClass u, int z, int y, const Eigen::VectorXd& x_obs);
double prob_response(const ParamSet& params, const CovariateSpec& spec, std::size_t j,
                     ComplianceClass u, int z, int y, const Eigen::VectorXd& x_obs, int q,
                     const SensitivityParams& sens);

/// Joint probability of (response pattern, covariate cell, class, z, y).
double cell_joint_prob(const ParamSet& params, const CellGeometry& geom, std::uint32_t mask,
                       std::size_t cell, ComplianceClass u, int z, int y);
/// Same joint with the latent risk factor Q = q, including its prior weight.
double cell_joint_prob(const ParamSet& params, const CellGeometry& geom, std::uint32_t mask,
                       std::size_t cell, ComplianceClass u, int z, int y, int q,
                       const SensitivityParams& sens);

/// Complier average causal effect P(Y(1)=1 | c, x) - P(Y(0)=1 | c, x).
double cace(const ParamSet& params, const Eigen::VectorXd& x);

/// Complier effect averaged over the latent risk factor:
/// pi * [effect with both complier logits shifted by xi] + (1 - pi) * cace.
double cace_with_q(const ParamSet& params, const SensitivityParams& sens, const Eigen::VectorXd& x);

}  // namespace ivcace
