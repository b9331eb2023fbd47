#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ivcace/counts.hpp"
#include "ivcace/model.hpp"
#include "ivcace/params.hpp"
#include "ivcace/types.hpp"

namespace ivcace {

struct FitConfig {
  int max_em_iters = 2000;
  /// Stop when the observed log-likelihood moves less than this.
  double loglik_tol = 1e-8;
  /// Or when no parameter moves more than this in one iteration.
  double param_tol = 1e-6;
  int newton_max_iters = 50;
  double ridge = 1e-8;
  std::uint64_t init_seed = 20130101;
  int n_restarts = 5;

  void validate() const;
};

/// Expected complete-data counts over (response pattern, covariate cell,
/// compliance class, z, y[, q]). Treatment is implied by (class, z), so the
/// structurally impossible (class, treatment) pairs have no storage at all.
class CellExpectations {
 public:
  CellExpectations() = default;
  CellExpectations(std::shared_ptr<const CellGeometry> geom, int q_levels);

  const CellGeometry& geometry() const { return *geom_; }
  int q_levels() const { return q_levels_; }

  double at(std::uint32_t mask, std::size_t cell, ComplianceClass u, int z, int y, int q = 0) const {
    return n_[index(mask, cell, u, z, y, q)];
  }
  double& at(std::uint32_t mask, std::size_t cell, ComplianceClass u, int z, int y, int q = 0) {
    return n_[index(mask, cell, u, z, y, q)];
  }
  std::size_t index(std::uint32_t mask, std::size_t cell, ComplianceClass u, int z, int y,
                    int q) const {
    return (((((static_cast<std::size_t>(mask) * num_cells_ + cell) * 3 +
               static_cast<std::size_t>(index_of(u))) * 2 + static_cast<std::size_t>(z)) * 2 +
             static_cast<std::size_t>(y)) * static_cast<std::size_t>(q_levels_)) +
           static_cast<std::size_t>(q);
  }

  const std::vector<double>& values() const { return n_; }
  std::vector<double>& values() { return n_; }
  double total() const;
  /// Sum over everything except the covariate cell.
  std::vector<double> cell_marginal() const;

 private:
  std::shared_ptr<const CellGeometry> geom_;
  int q_levels_ = 1;
  std::size_t num_cells_ = 0;
  std::vector<double> n_;
};

struct FitResult {
  CovariateSpec spec;
  ParamSet params;
  std::vector<double> loglik_trace;
  bool converged = false;
  int iterations = 0;
  CellExpectations final_expectations;
  /// Set when the fit included the latent risk factor.
  std::optional<SensitivityParams> sensitivity;
  /// Index of the winning restart.
  int restart = 0;
  /// Sub-model Newton solves that hit the iteration cap in the last M-step.
  std::vector<std::string> warnings;

  double loglik() const { return loglik_trace.empty() ? 0.0 : loglik_trace.back(); }
};

/// Classes compatible with observed (d, z) under monotonicity.
std::vector<ComplianceClass> latent_support(int d, int z);

CellExpectations e_step(const ParamSet& params, const ObservedCounts& counts,
                        const SensitivityParams* sens = nullptr);

double observed_loglik(const ParamSet& params, const ObservedCounts& counts,
                       const SensitivityParams* sens = nullptr);

struct MStepReport {
  std::vector<std::string> nonconverged;
};

/// Maximizes the expected complete-data log-likelihood. Newton solves start
/// from `start` when given (its `modeled` response flags are carried over),
/// else from zeros. With `sens`, outcome and response fits carry the fixed
/// Q offsets.
ParamSet m_step(const CellExpectations& expect, const CovariateSpec& spec, const FitConfig& config,
                const ParamSet* start = nullptr, const SensitivityParams* sens = nullptr,
                MStepReport* report = nullptr);

struct FitOptions {
  /// Used as the first restart's starting point instead of a random draw.
  const ParamSet* warm_start = nullptr;
  /// Fixed latent risk factor; null fits the base model.
  const SensitivityParams* sensitivity = nullptr;
  /// When false every response factor is dropped (complete-data likelihood
  /// for X, Z, U, Y only); the data must then have no missing covariates.
  bool model_missingness = true;
};

FitResult fit_em(const ObservedCounts& counts, const FitConfig& config, const FitOptions& opts = {});
FitResult fit_em(const Dataset& data, const CovariateSpec& spec, const FitConfig& config,
                 const FitOptions& opts = {});

/// Random starting point: coefficients uniform(-0.5, 0.5), w from the
/// complete-case cell frequencies (uniform when there are none).
ParamSet random_start(const ObservedCounts& counts, std::uint64_t seed);

}  // namespace ivcace
