#include "ivcace/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "ivcace/logistic.hpp"

namespace ivcace {

const char* to_string(ComplianceClass u) {
  switch (u) {
    case ComplianceClass::NeverTaker: return "never_taker";
    case ComplianceClass::Complier: return "complier";
    case ComplianceClass::AlwaysTaker: return "always_taker";
  }
  return "unknown";
}

std::size_t CovariateSpec::num_fully_observed() const {
  return static_cast<std::size_t>(std::count(fully_observed.begin(), fully_observed.end(), true));
}

void CovariateSpec::validate() const {
  if (levels.size() != fully_observed.size()) {
    throw ValidationError("covariate spec: levels and observed flags differ in length");
  }
  if (!names.empty() && names.size() != levels.size()) {
    throw ValidationError("covariate spec: names and levels differ in length");
  }
  bool seen_partial = false;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (levels[k] < 2) {
      throw ValidationError("covariate spec: covariate " + std::to_string(k) +
                            " needs at least 2 levels");
    }
    if (!fully_observed[k]) {
      seen_partial = true;
    } else if (seen_partial) {
      throw ValidationError(
          "covariate spec: fully observed covariates must precede partially observed ones");
    }
  }
  if (num_partial() > 16) {
    throw ValidationError("covariate spec: at most 16 partially observed covariates");
  }
}

void validate_record(const Record& rec, const CovariateSpec& spec, std::size_t row) {
  const auto where = [&] { return "record " + std::to_string(row) + ": "; };
  if (rec.x.size() != spec.num_covariates()) {
    throw ValidationError(where() + "expected " + std::to_string(spec.num_covariates()) +
                          " covariates, got " + std::to_string(rec.x.size()));
  }
  if ((rec.z != 0 && rec.z != 1) || (rec.d != 0 && rec.d != 1) || (rec.y != 0 && rec.y != 1)) {
    throw ValidationError(where() + "z, d and y must be 0 or 1");
  }
  for (std::size_t k = 0; k < rec.x.size(); ++k) {
    const int v = rec.x[k];
    if (v == kMissing) {
      if (spec.fully_observed[k]) {
        throw ValidationError(where() + "missing value in fully observed covariate " +
                              std::to_string(k));
      }
      continue;
    }
    if (v < 0 || v >= spec.levels[k]) {
      throw ValidationError(where() + "level " + std::to_string(v) + " out of range for covariate " +
                            std::to_string(k));
    }
  }
}

// ---------------------------------------------------------------------------

ParamSet ParamSet::zeros(const CovariateSpec& spec) {
  const auto p = static_cast<Eigen::Index>(spec.design_size());
  const auto po = static_cast<Eigen::Index>(spec.observed_design_size());
  ParamSet ps;
  std::size_t cells = 1;
  for (int l : spec.levels) cells *= static_cast<std::size_t>(l);
  ps.w.assign(cells, 1.0 / static_cast<double>(cells));
  ps.alpha = Eigen::VectorXd::Zero(p);
  ps.delta_a = Eigen::VectorXd::Zero(p);
  ps.delta_c = Eigen::VectorXd::Zero(p);
  ps.beta_c0 = Eigen::VectorXd::Zero(p);
  ps.beta_c1 = Eigen::VectorXd::Zero(p);
  ps.beta_a = Eigen::VectorXd::Zero(p);
  ps.beta_n = Eigen::VectorXd::Zero(p);
  ps.response.resize(spec.num_partial());
  for (auto& r : ps.response) {
    for (auto& t : r.theta) t = Eigen::VectorXd::Zero(po);
  }
  return ps;
}

const Eigen::VectorXd& ParamSet::beta(ComplianceClass u, int z) const {
  switch (u) {
    case ComplianceClass::NeverTaker: return beta_n;
    case ComplianceClass::AlwaysTaker: return beta_a;
    case ComplianceClass::Complier: return z == 1 ? beta_c1 : beta_c0;
  }
  return beta_n;
}

Eigen::VectorXd& ParamSet::beta(ComplianceClass u, int z) {
  return const_cast<Eigen::VectorXd&>(std::as_const(*this).beta(u, z));
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> out(w);
  const auto append = [&](const Eigen::VectorXd& v) { out.insert(out.end(), v.begin(), v.end()); };
  append(alpha);
  append(delta_a);
  append(delta_c);
  append(beta_c0);
  append(beta_c1);
  append(beta_a);
  append(beta_n);
  for (const auto& r : response) {
    for (const auto& t : r.theta) append(t);
    out.insert(out.end(), r.gamma.begin(), r.gamma.end());
    out.push_back(r.eta_complier);
    out.push_back(r.eta_yz_complier);
  }
  return out;
}

void ParamSet::validate(const CovariateSpec& spec) const {
  const auto p = static_cast<Eigen::Index>(spec.design_size());
  const auto po = static_cast<Eigen::Index>(spec.observed_design_size());
  std::size_t cells = 1;
  for (int l : spec.levels) cells *= static_cast<std::size_t>(l);
  if (w.size() != cells) throw ValidationError("params: w has wrong number of cells");
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("params: w entries must lie in [0, 1]");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ValidationError("params: w must sum to 1");
  for (const auto* v : {&alpha, &delta_a, &delta_c, &beta_c0, &beta_c1, &beta_a, &beta_n}) {
    if (v->size() != p) throw ValidationError("params: coefficient vector has wrong dimension");
  }
  if (response.size() != spec.num_partial()) {
    throw ValidationError("params: one response model per partially observed covariate");
  }
  for (const auto& r : response) {
    for (const auto& t : r.theta) {
      if (t.size() != po) throw ValidationError("params: response theta has wrong dimension");
    }
  }
}

double max_abs_difference(const ParamSet& a, const ParamSet& b) {
  const auto fa = a.flatten();
  const auto fb = b.flatten();
  if (fa.size() != fb.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) m = std::max(m, std::abs(fa[i] - fb[i]));
  return m;
}

double SensitivityParams::xi(ComplianceClass u, int z) const {
  switch (u) {
    case ComplianceClass::NeverTaker: return xi_n;
    case ComplianceClass::AlwaysTaker: return xi_a;
    case ComplianceClass::Complier: return z == 1 ? xi_c1 : xi_c0;
  }
  return 0.0;
}

double SensitivityParams::kappa_for(std::size_t j, ComplianceClass u) const {
  if (j >= kappa.size()) return 0.0;
  return kappa[j][static_cast<std::size_t>(index_of(u))];
}

SensitivityParams SensitivityParams::uniform(double pi, double xi, double kappa,
                                             std::size_t num_partial) {
  SensitivityParams s;
  s.pi = pi;
  s.xi_c0 = s.xi_c1 = s.xi_a = s.xi_n = xi;
  s.kappa.assign(num_partial, {kappa, kappa, kappa});
  return s;
}

void SensitivityParams::validate() const {
  if (!(pi >= 0.0 && pi <= 1.0)) throw ValidationError("sensitivity: pi must lie in [0, 1]");
}

// ---------------------------------------------------------------------------

CellGeometry::CellGeometry(const CovariateSpec& spec) : spec_(spec) {
  spec_.validate();
  const std::size_t K = spec_.num_covariates();
  const std::size_t F = spec_.num_fully_observed();
  strides_.assign(K, 1);
  for (std::size_t k = K; k-- > 0;) {
    strides_[k] = num_cells_;
    num_cells_ *= static_cast<std::size_t>(spec_.levels[k]);
  }
  for (std::size_t k = 0; k < F; ++k) num_obs_cells_ *= static_cast<std::size_t>(spec_.levels[k]);

  design_.reserve(num_cells_);
  obs_cell_.reserve(num_cells_);
  for (std::size_t c = 0; c < num_cells_; ++c) {
    const auto lv = levels_of(c);
    design_.push_back(design_vector(lv));
    std::size_t oc = 0;
    for (std::size_t k = 0; k < F; ++k) oc = oc * static_cast<std::size_t>(spec_.levels[k]) + static_cast<std::size_t>(lv[k]);
    obs_cell_.push_back(oc);
  }
  obs_design_.assign(num_obs_cells_, Eigen::VectorXd());
  for (std::size_t c = 0; c < num_cells_; ++c) {
    auto& od = obs_design_[obs_cell_[c]];
    if (od.size() == 0) od = design_[c].head(static_cast<Eigen::Index>(F + 1));
  }
}

int CellGeometry::level(std::size_t cell, std::size_t k) const {
  return static_cast<int>((cell / strides_[k]) % static_cast<std::size_t>(spec_.levels[k]));
}

std::size_t CellGeometry::cell_of(const std::vector<int>& levels) const {
  std::size_t c = 0;
  for (std::size_t k = 0; k < levels.size(); ++k) c += strides_[k] * static_cast<std::size_t>(levels[k]);
  return c;
}

std::vector<int> CellGeometry::levels_of(std::size_t cell) const {
  std::vector<int> out(spec_.num_covariates());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = level(cell, k);
  return out;
}

std::size_t CellGeometry::pattern_size(std::uint32_t mask) const {
  const std::size_t F = spec_.num_fully_observed();
  std::size_t n = num_obs_cells_;
  for (std::size_t j = 0; j < spec_.num_partial(); ++j) {
    if (mask & (1u << j)) n *= static_cast<std::size_t>(spec_.levels[F + j]);
  }
  return n;
}

std::size_t CellGeometry::pattern_cell(std::uint32_t mask, std::size_t cell) const {
  const std::size_t F = spec_.num_fully_observed();
  std::size_t idx = obs_cell_[cell];
  for (std::size_t j = 0; j < spec_.num_partial(); ++j) {
    if (mask & (1u << j)) {
      idx = idx * static_cast<std::size_t>(spec_.levels[F + j]) +
            static_cast<std::size_t>(level(cell, F + j));
    }
  }
  return idx;
}

std::size_t CellGeometry::pattern_cell_of(std::uint32_t mask, const std::vector<int>& x) const {
  const std::size_t F = spec_.num_fully_observed();
  std::size_t idx = 0;
  for (std::size_t k = 0; k < F; ++k) idx = idx * static_cast<std::size_t>(spec_.levels[k]) + static_cast<std::size_t>(x[k]);
  for (std::size_t j = 0; j < spec_.num_partial(); ++j) {
    if (mask & (1u << j)) {
      idx = idx * static_cast<std::size_t>(spec_.levels[F + j]) + static_cast<std::size_t>(x[F + j]);
    }
  }
  return idx;
}

Eigen::VectorXd design_vector(const std::vector<int>& levels) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(levels.size() + 1));
  x(0) = 1.0;
  for (std::size_t k = 0; k < levels.size(); ++k) x(static_cast<Eigen::Index>(k + 1)) = levels[k];
  return x;
}

// ---------------------------------------------------------------------------

namespace {

void check_dim(const Eigen::VectorXd& coef, const Eigen::VectorXd& x, const char* what) {
  if (coef.size() != x.size()) {
    throw ValidationError(std::string(what) + ": coefficient dimension " +
                          std::to_string(coef.size()) + " does not match covariate dimension " +
                          std::to_string(x.size()));
  }
}

}  // namespace

double prob_iv(const ParamSet& params, const Eigen::VectorXd& x) {
  check_dim(params.alpha, x, "prob_iv");
  return inv_logit(params.alpha.dot(x));
}

std::array<double, 3> prob_compliance(const ParamSet& params, const Eigen::VectorXd& x) {
  check_dim(params.delta_a, x, "prob_compliance");
  check_dim(params.delta_c, x, "prob_compliance");
  const double ea = clamp_logit(params.delta_a.dot(x));
  const double ec = clamp_logit(params.delta_c.dot(x));
  const double m = std::max({0.0, ea, ec});
  const double wn = std::exp(-m);
  const double wa = std::exp(ea - m);
  const double wc = std::exp(ec - m);
  const double total = wn + wa + wc;
  return {wn / total, wc / total, wa / total};
}

double prob_outcome(const ParamSet& params, ComplianceClass u, int z, const Eigen::VectorXd& x) {
  const auto& b = params.beta(u, z);
  check_dim(b, x, "prob_outcome");
  return inv_logit(b.dot(x));
}

double prob_outcome(const ParamSet& params, ComplianceClass u, int z, const Eigen::VectorXd& x,
                    int q, const SensitivityParams& sens) {
  const auto& b = params.beta(u, z);
  check_dim(b, x, "prob_outcome");
  return inv_logit(b.dot(x) + (q == 1 ? sens.xi(u, z) : 0.0));
}

namespace {

double response_eta(const ParamSet& params, const CovariateSpec& spec, std::size_t j,
                    ComplianceClass u, int z, int y, const Eigen::VectorXd& x_obs) {
  if (j >= params.response.size()) {
    throw ValidationError("prob_response: covariate index " + std::to_string(j) + " out of range");
  }
  const auto& r = params.response[j];
  const auto& th = r.theta[static_cast<std::size_t>(index_of(u))];
  check_dim(th, x_obs, "prob_response");
  double eta = th.dot(x_obs);
  if (y == 1) eta += r.gamma[static_cast<std::size_t>(index_of(u))];
  if (u == ComplianceClass::Complier && z == 1) {
    eta += r.eta_complier;
    if (y == 1 && spec.response_yz_interaction) eta += r.eta_yz_complier;
  }
  return eta;
}

}  // namespace

double prob_response(const ParamSet& params, const CovariateSpec& spec, std::size_t j,
                     ComplianceClass u, int z, int y, const Eigen::VectorXd& x_obs) {
  const double eta = response_eta(params, spec, j, u, z, y, x_obs);
  return params.response[j].modeled ? inv_logit(eta) : 1.0;
}

double prob_response(const ParamSet& params, const CovariateSpec& spec, std::size_t j,
                     ComplianceClass u, int z, int y, const Eigen::VectorXd& x_obs, int q,
                     const SensitivityParams& sens) {
  const double eta = response_eta(params, spec, j, u, z, y, x_obs);
  if (!params.response[j].modeled) return 1.0;
  return inv_logit(eta + (q == 1 ? sens.kappa_for(j, u) : 0.0));
}

namespace {

double joint_impl(const ParamSet& params, const CellGeometry& geom, std::uint32_t mask,
                  std::size_t cell, ComplianceClass u, int z, int y, int q,
                  const SensitivityParams* sens) {
  if (cell >= geom.num_cells()) throw ValidationError("cell_joint_prob: cell index out of range");
  if (mask > geom.full_mask()) throw ValidationError("cell_joint_prob: response pattern out of range");
  const auto& spec = geom.spec();
  const auto& x = geom.design(cell);
  const double pz = prob_iv(params, x);
  double p = params.w[cell] * (z == 1 ? pz : 1.0 - pz);
  p *= prob_compliance(params, x)[static_cast<std::size_t>(index_of(u))];
  const double py = sens ? prob_outcome(params, u, z, x, q, *sens) : prob_outcome(params, u, z, x);
  p *= (y == 1 ? py : 1.0 - py);
  const auto& xo = geom.observed_design(geom.observed_cell(cell));
  for (std::size_t j = 0; j < spec.num_partial(); ++j) {
    const double pr = sens ? prob_response(params, spec, j, u, z, y, xo, q, *sens)
                           : prob_response(params, spec, j, u, z, y, xo);
    p *= (mask & (1u << j)) ? pr : 1.0 - pr;
  }
  if (sens) p *= (q == 1 ? sens->pi : 1.0 - sens->pi);
  return p;
}

}  // namespace

double cell_joint_prob(const ParamSet& params, const CellGeometry& geom, std::uint32_t mask,
                       std::size_t cell, ComplianceClass u, int z, int y) {
  return joint_impl(params, geom, mask, cell, u, z, y, 0, nullptr);
}

double cell_joint_prob(const ParamSet& params, const CellGeometry& geom, std::uint32_t mask,
                       std::size_t cell, ComplianceClass u, int z, int y, int q,
                       const SensitivityParams& sens) {
  return joint_impl(params, geom, mask, cell, u, z, y, q, &sens);
}

double cace(const ParamSet& params, const Eigen::VectorXd& x) {
  check_dim(params.beta_c1, x, "cace");
  check_dim(params.beta_c0, x, "cace");
  return inv_logit(params.beta_c1.dot(x)) - inv_logit(params.beta_c0.dot(x));
}

double cace_with_q(const ParamSet& params, const SensitivityParams& sens, const Eigen::VectorXd& x) {
  const double base = cace(params, x);
  const double shifted = inv_logit(params.beta_c1.dot(x) + sens.xi_c1) -
                         inv_logit(params.beta_c0.dot(x) + sens.xi_c0);
  return sens.pi * shifted + (1.0 - sens.pi) * base;
}

}  // namespace ivcace
