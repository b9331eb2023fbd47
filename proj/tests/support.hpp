#pragma once

// Shared fixtures and independent oracles for the unit tests. Nothing here
// calls into model.cpp: probabilities are rebuilt from the parameter values
// with textbook formulas so the library can be checked against them.

#include <cmath>
#include <cstdint>
#include <vector>

#include "ivcace/params.hpp"
#include "ivcace/rng.hpp"
#include "ivcace/types.hpp"

namespace testing {

using ivcace::ComplianceClass;

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

inline double dot(const Eigen::VectorXd& b, const std::vector<double>& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += b[static_cast<Eigen::Index>(i)] * x[i];
  return s;
}

inline std::size_t oracle_cell_index(const ivcace::CovariateSpec& spec, const std::vector<int>& x) {
  std::size_t idx = 0;
  for (std::size_t k = 0; k < x.size(); ++k) idx = idx * static_cast<std::size_t>(spec.levels[k]) + static_cast<std::size_t>(x[k]);
  return idx;
}

inline std::vector<std::vector<int>> oracle_all_cells(const ivcace::CovariateSpec& spec) {
  std::vector<std::vector<int>> out{{}};
  for (int L : spec.levels) {
    std::vector<std::vector<int>> next;
    for (const auto& prefix : out) {
      for (int l = 0; l < L; ++l) {
        auto c = prefix;
        c.push_back(l);
        next.push_back(c);
      }
    }
    out = next;
  }
  return out;
}

/// P(mask, x, u, z, y [, q]) written out factor by factor.
inline double oracle_joint(const ivcace::CovariateSpec& spec, const ivcace::ParamSet& p,
                           std::uint32_t mask, const std::vector<int>& x, ComplianceClass u, int z,
                           int y, int q = 0, const ivcace::SensitivityParams* sens = nullptr) {
  std::vector<double> xd{1.0};
  for (int v : x) xd.push_back(v);
  const std::size_t F = spec.num_fully_observed();
  std::vector<double> xo(xd.begin(), xd.begin() + static_cast<std::ptrdiff_t>(F + 1));

  double prob = p.w[oracle_cell_index(spec, x)];
  const double pz = sigmoid(dot(p.alpha, xd));
  prob *= z ? pz : 1.0 - pz;

  const double ec = std::exp(dot(p.delta_c, xd));
  const double ea = std::exp(dot(p.delta_a, xd));
  const double denom = 1.0 + ec + ea;
  prob *= u == ComplianceClass::NeverTaker ? 1.0 / denom : u == ComplianceClass::Complier ? ec / denom : ea / denom;

  const Eigen::VectorXd& b = u == ComplianceClass::Complier ? (z ? p.beta_c1 : p.beta_c0)
                             : u == ComplianceClass::AlwaysTaker ? p.beta_a
                                                                 : p.beta_n;
  double lin = dot(b, xd);
  if (sens && q == 1) {
    lin += u == ComplianceClass::Complier ? (z ? sens->xi_c1 : sens->xi_c0)
           : u == ComplianceClass::AlwaysTaker ? sens->xi_a
                                               : sens->xi_n;
  }
  const double py = sigmoid(lin);
  prob *= y ? py : 1.0 - py;

  const auto ui = static_cast<std::size_t>(static_cast<int>(u));
  for (std::size_t j = 0; j < spec.num_partial(); ++j) {
    const bool observed = (mask >> j) & 1u;
    const auto& r = p.response[j];
    if (!r.modeled) {
      if (!observed) return 0.0;
      continue;
    }
    double e = dot(r.theta[ui], xo) + r.gamma[ui] * y;
    if (u == ComplianceClass::Complier) {
      e += r.eta_complier * z;
      if (spec.response_yz_interaction) e += r.eta_yz_complier * y * z;
    }
    if (sens && q == 1 && !sens->kappa.empty()) e += sens->kappa[j][ui];
    const double pr = sigmoid(e);
    prob *= observed ? pr : 1.0 - pr;
  }
  if (sens) prob *= q ? sens->pi : 1.0 - sens->pi;
  return prob;
}

inline Eigen::VectorXd random_vector(ivcace::Rng& rng, std::size_t n, double scale) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-scale, scale);
  return v;
}

/// Small random layout: 0-1 fully observed and 1-2 partial covariates with
/// 2-3 levels each.
inline ivcace::CovariateSpec random_spec(ivcace::Rng& rng) {
  ivcace::CovariateSpec s;
  const int nf = static_cast<int>(rng.index(2));
  const int np = 1 + static_cast<int>(rng.index(2));
  for (int k = 0; k < nf + np; ++k) {
    s.names.push_back("v" + std::to_string(k));
    s.levels.push_back(2 + static_cast<int>(rng.index(2)));
    s.fully_observed.push_back(k < nf);
  }
  s.response_yz_interaction = rng.bernoulli(0.5);
  return s;
}

inline ivcace::ParamSet random_params(const ivcace::CovariateSpec& spec, ivcace::Rng& rng, double scale = 0.8) {
  auto p = ivcace::ParamSet::zeros(spec);
  double tot = 0.0;
  for (auto& w : p.w) tot += (w = 0.2 + rng.uniform());
  for (auto& w : p.w) w /= tot;
  const std::size_t D = spec.design_size();
  p.alpha = random_vector(rng, D, scale);
  p.delta_a = random_vector(rng, D, scale);
  p.delta_c = random_vector(rng, D, scale);
  p.beta_c0 = random_vector(rng, D, scale);
  p.beta_c1 = random_vector(rng, D, scale);
  p.beta_a = random_vector(rng, D, scale);
  p.beta_n = random_vector(rng, D, scale);
  for (auto& r : p.response) {
    for (auto& t : r.theta) {
      t = random_vector(rng, spec.observed_design_size(), scale);
      t[0] += 1.5;  // mostly observed
    }
    for (auto& g : r.gamma) g = rng.uniform(-scale, scale);
    r.eta_complier = rng.uniform(-scale, scale);
    r.eta_yz_complier = spec.response_yz_interaction ? rng.uniform(-scale, scale) : 0.0;
  }
  return p;
}

}  // namespace testing
