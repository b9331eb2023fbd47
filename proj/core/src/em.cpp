#include "ivcace/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ivcace/logistic.hpp"
#include "ivcace/rng.hpp"

namespace ivcace {

void FitConfig::validate() const {
  if (max_em_iters < 1 || newton_max_iters < 1 || n_restarts < 1) {
    throw ValidationError("fit config: iteration caps and restart count must be >= 1");
  }
  if (!(loglik_tol > 0.0) || !(param_tol > 0.0) || !(ridge > 0.0)) {
    throw ValidationError("fit config: tolerances and ridge must be positive");
  }
}

CellExpectations::CellExpectations(std::shared_ptr<const CellGeometry> geom, int q_levels)
    : geom_(std::move(geom)), q_levels_(q_levels), num_cells_(geom_->num_cells()) {
  n_.assign(geom_->num_patterns() * num_cells_ * 12 * static_cast<std::size_t>(q_levels_), 0.0);
}

double CellExpectations::total() const { return std::accumulate(n_.begin(), n_.end(), 0.0); }

std::vector<double> CellExpectations::cell_marginal() const {
  std::vector<double> out(num_cells_, 0.0);
  const std::size_t block = 12 * static_cast<std::size_t>(q_levels_);
  for (std::size_t m = 0; m < geom_->num_patterns(); ++m) {
    for (std::size_t c = 0; c < num_cells_; ++c) {
      const std::size_t base = (m * num_cells_ + c) * block;
      for (std::size_t k = 0; k < block; ++k) out[c] += n_[base + k];
    }
  }
  return out;
}

std::vector<ComplianceClass> latent_support(int d, int z) {
  if (d == 1 && z == 0) return {ComplianceClass::AlwaysTaker};
  if (d == 0 && z == 1) return {ComplianceClass::NeverTaker};
  if (d == 1 && z == 1) return {ComplianceClass::AlwaysTaker, ComplianceClass::Complier};
  return {ComplianceClass::NeverTaker, ComplianceClass::Complier};
}

namespace {

struct Evaluation {
  CellExpectations expect;
  double loglik = 0.0;
};

// Joint probabilities for every lattice point, grouped per stratum, then
// apportioned. Lattice order is fixed so results are bit-reproducible.
Evaluation evaluate(const ParamSet& params, const ObservedCounts& counts,
                    const SensitivityParams* sens, bool want_expectations) {
  const CellGeometry& geom = counts.geometry();
  const CovariateSpec& spec = geom.spec();
  params.validate(spec);
  const int Q = sens ? 2 : 1;
  const std::size_t C = geom.num_cells();
  const std::size_t O = geom.num_observed_cells();
  const std::size_t M = spec.num_partial();

  // Per-cell factors not involving the response model: w * P(z|x) * P(u|x) * P(y|u,z,x) * P(q).
  std::vector<double> base(C * 12 * static_cast<std::size_t>(Q));
  const auto base_idx = [Q](std::size_t c, int u, int z, int y, int q) {
    return (((c * 3 + static_cast<std::size_t>(u)) * 2 + static_cast<std::size_t>(z)) * 2 +
            static_cast<std::size_t>(y)) * static_cast<std::size_t>(Q) + static_cast<std::size_t>(q);
  };
  for (std::size_t c = 0; c < C; ++c) {
    const auto& x = geom.design(c);
    const double pz1 = prob_iv(params, x);
    const auto pu = prob_compliance(params, x);
    for (ComplianceClass u : kAllClasses) {
      const int ui = index_of(u);
      for (int z = 0; z < 2; ++z) {
        for (int q = 0; q < Q; ++q) {
          const double py1 = sens ? prob_outcome(params, u, z, x, q, *sens) : prob_outcome(params, u, z, x);
          const double prior_q = sens ? (q == 1 ? sens->pi : 1.0 - sens->pi) : 1.0;
          const double common = params.w[c] * (z == 1 ? pz1 : 1.0 - pz1) * pu[static_cast<std::size_t>(ui)] * prior_q;
          base[base_idx(c, ui, z, 1, q)] = common * py1;
          base[base_idx(c, ui, z, 0, q)] = common * (1.0 - py1);
        }
      }
    }
  }
  // Response probabilities per (j, observed cell, u, z, y, q).
  std::vector<double> resp(M * O * 12 * static_cast<std::size_t>(Q));
  const auto resp_idx = [&](std::size_t j, std::size_t o, int u, int z, int y, int q) {
    return (j * O + o) * 12 * static_cast<std::size_t>(Q) + base_idx(0, u, z, y, q);
  };
  for (std::size_t j = 0; j < M; ++j) {
    for (std::size_t o = 0; o < O; ++o) {
      const auto& xo = geom.observed_design(o);
      for (ComplianceClass u : kAllClasses) {
        for (int z = 0; z < 2; ++z) {
          for (int y = 0; y < 2; ++y) {
            for (int q = 0; q < Q; ++q) {
              resp[resp_idx(j, o, index_of(u), z, y, q)] =
                  sens ? prob_response(params, spec, j, u, z, y, xo, q, *sens)
                       : prob_response(params, spec, j, u, z, y, xo);
            }
          }
        }
      }
    }
  }

  Evaluation ev;
  ev.expect = CellExpectations(counts.shared_geometry(), Q);
  auto& P = ev.expect.values();
  double loglik = 0.0;
  for (std::uint32_t mask = 0; mask <= geom.full_mask(); ++mask) {
    const auto& table = counts.table(mask);
    std::vector<double> denom(table.size(), 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t pc = geom.pattern_cell(mask, c);
      const std::size_t o = geom.observed_cell(c);
      for (ComplianceClass u : kAllClasses) {
        const int ui = index_of(u);
        for (int z = 0; z < 2; ++z) {
          const int d = treatment_for(u, z);
          for (int y = 0; y < 2; ++y) {
            for (int q = 0; q < Q; ++q) {
              double p = base[base_idx(c, ui, z, y, q)];
              for (std::size_t j = 0; j < M; ++j) {
                const double pr = resp[resp_idx(j, o, ui, z, y, q)];
                p *= (mask & (1u << j)) ? pr : 1.0 - pr;
              }
              P[ev.expect.index(mask, c, u, z, y, q)] = p;
              denom[ObservedCounts::index(pc, d, z, y)] += p;
            }
          }
        }
      }
    }
    for (std::size_t s = 0; s < table.size(); ++s) {
      if (table[s] <= 0.0) continue;
      if (!(denom[s] > 0.0)) {
        std::ostringstream msg;
        msg << "stratum with zero model probability (pattern " << mask << ", observed cell "
            << s / 8 << ", d=" << (s / 4) % 2 << ", z=" << (s / 2) % 2 << ", y=" << s % 2
            << ") holds " << table[s] << " records";
        throw EstimationError(msg.str());
      }
      loglik += table[s] * std::log(denom[s]);
    }
    if (!want_expectations) continue;
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t pc = geom.pattern_cell(mask, c);
      for (ComplianceClass u : kAllClasses) {
        for (int z = 0; z < 2; ++z) {
          const int d = treatment_for(u, z);
          for (int y = 0; y < 2; ++y) {
            const std::size_t s = ObservedCounts::index(pc, d, z, y);
            for (int q = 0; q < Q; ++q) {
              double& cell = P[ev.expect.index(mask, c, u, z, y, q)];
              cell = table[s] > 0.0 ? table[s] * cell / denom[s] : 0.0;
            }
          }
        }
      }
    }
  }
  ev.loglik = loglik;
  return ev;
}

Eigen::VectorXd or_zeros(const ParamSet* start, Eigen::VectorXd ParamSet::*member, Eigen::Index p) {
  if (start && (start->*member).size() == p) return start->*member;
  return Eigen::VectorXd::Zero(p);
}

}  // namespace

CellExpectations e_step(const ParamSet& params, const ObservedCounts& counts,
                        const SensitivityParams* sens) {
  return evaluate(params, counts, sens, true).expect;
}

double observed_loglik(const ParamSet& params, const ObservedCounts& counts,
                       const SensitivityParams* sens) {
  return evaluate(params, counts, sens, false).loglik;
}

ParamSet m_step(const CellExpectations& expect, const CovariateSpec& spec, const FitConfig& config,
                const ParamSet* start, const SensitivityParams* sens, MStepReport* report) {
  const CellGeometry& geom = expect.geometry();
  const std::size_t C = geom.num_cells();
  const std::size_t O = geom.num_observed_cells();
  const std::size_t M = spec.num_partial();
  const int Q = expect.q_levels();
  if (sens && Q != 2) throw ValidationError("m_step: sensitivity fit needs q-augmented expectations");
  const auto p = static_cast<Eigen::Index>(spec.design_size());
  const auto po = static_cast<Eigen::Index>(spec.observed_design_size());
  const double total = expect.total();
  if (!(total > 0.0)) throw EstimationError("m_step: expectations carry no mass");

  NewtonOptions nopts;
  nopts.max_iters = config.newton_max_iters;
  nopts.ridge = config.ridge;
  const auto note = [&](const NewtonResult& r, const std::string& name) {
    if (report && !r.converged) report->nonconverged.push_back(name);
  };

  ParamSet out = ParamSet::zeros(spec);
  if (start) {
    for (std::size_t j = 0; j < M && j < start->response.size(); ++j) {
      out.response[j].modeled = start->response[j].modeled;
    }
  }

  // Marginal sums used by several sub-models, indexed [cell][u][z][y][q].
  std::vector<double> cuzyq(C * 12 * static_cast<std::size_t>(Q), 0.0);
  const auto k_idx = [Q](std::size_t c, int u, int z, int y, int q) {
    return (((c * 3 + static_cast<std::size_t>(u)) * 2 + static_cast<std::size_t>(z)) * 2 +
            static_cast<std::size_t>(y)) * static_cast<std::size_t>(Q) + static_cast<std::size_t>(q);
  };
  for (std::uint32_t mask = 0; mask <= geom.full_mask(); ++mask) {
    for (std::size_t c = 0; c < C; ++c) {
      for (ComplianceClass u : kAllClasses) {
        for (int z = 0; z < 2; ++z) {
          for (int y = 0; y < 2; ++y) {
            for (int q = 0; q < Q; ++q) {
              cuzyq[k_idx(c, index_of(u), z, y, q)] += expect.at(mask, c, u, z, y, q);
            }
          }
        }
      }
    }
  }

  // Cell masses.
  const auto marg = expect.cell_marginal();
  for (std::size_t c = 0; c < C; ++c) out.w[c] = marg[c] / total;

  // Instrument model.
  {
    BinomialData bd{Eigen::MatrixXd(C, p), Eigen::VectorXd::Zero(C), Eigen::VectorXd::Zero(C),
                    Eigen::VectorXd::Zero(C)};
    for (std::size_t c = 0; c < C; ++c) {
      const auto i = static_cast<Eigen::Index>(c);
      bd.X.row(i) = geom.design(c).transpose();
      for (int u = 0; u < 3; ++u)
        for (int y = 0; y < 2; ++y)
          for (int q = 0; q < Q; ++q) {
            bd.n1(i) += cuzyq[k_idx(c, u, 1, y, q)];
            bd.n0(i) += cuzyq[k_idx(c, u, 0, y, q)];
          }
    }
    const auto r = fit_logistic(bd, or_zeros(start, &ParamSet::alpha, p), nopts);
    note(r, "instrument");
    out.alpha = r.coef;
  }

  // Compliance model: categories (never, complier, always) with never as reference.
  {
    MultinomialData md{Eigen::MatrixXd(C, p), Eigen::MatrixXd::Zero(C, 3)};
    for (std::size_t c = 0; c < C; ++c) {
      const auto i = static_cast<Eigen::Index>(c);
      md.X.row(i) = geom.design(c).transpose();
      for (int u = 0; u < 3; ++u)
        for (int z = 0; z < 2; ++z)
          for (int y = 0; y < 2; ++y)
            for (int q = 0; q < Q; ++q) md.counts(i, u) += cuzyq[k_idx(c, u, z, y, q)];
    }
    Eigen::VectorXd init(2 * p);
    init << or_zeros(start, &ParamSet::delta_c, p), or_zeros(start, &ParamSet::delta_a, p);
    const auto r = fit_multinomial(md, init, nopts);
    note(r, "compliance");
    out.delta_c = r.coef.head(p);
    out.delta_a = r.coef.tail(p);
  }

  // Outcome models; always and never takers pool both instrument arms.
  struct OutcomeSlice {
    ComplianceClass u;
    std::vector<int> zs;
    Eigen::VectorXd ParamSet::*member;
    const char* name;
  };
  const OutcomeSlice slices[] = {
      {ComplianceClass::Complier, {0}, &ParamSet::beta_c0, "outcome complier z=0"},
      {ComplianceClass::Complier, {1}, &ParamSet::beta_c1, "outcome complier z=1"},
      {ComplianceClass::AlwaysTaker, {0, 1}, &ParamSet::beta_a, "outcome always taker"},
      {ComplianceClass::NeverTaker, {0, 1}, &ParamSet::beta_n, "outcome never taker"},
  };
  for (const auto& sl : slices) {
    const auto rows = static_cast<Eigen::Index>(C * static_cast<std::size_t>(Q));
    BinomialData bd{Eigen::MatrixXd(rows, p), Eigen::VectorXd::Zero(rows), Eigen::VectorXd::Zero(rows),
                    Eigen::VectorXd::Zero(rows)};
    for (std::size_t c = 0; c < C; ++c) {
      for (int q = 0; q < Q; ++q) {
        const auto i = static_cast<Eigen::Index>(c * static_cast<std::size_t>(Q) + static_cast<std::size_t>(q));
        bd.X.row(i) = geom.design(c).transpose();
        for (int z : sl.zs) {
          bd.n1(i) += cuzyq[k_idx(c, index_of(sl.u), z, 1, q)];
          bd.n0(i) += cuzyq[k_idx(c, index_of(sl.u), z, 0, q)];
        }
        // xi is tied across z for always/never takers, so zs.front() suffices.
        bd.offset(i) = (sens && q == 1) ? sens->xi(sl.u, sl.zs.front()) : 0.0;
      }
    }
    const auto r = fit_logistic(bd, or_zeros(start, sl.member, p), nopts);
    note(r, sl.name);
    out.*sl.member = r.coef;
  }

  // Response models, one per (partial covariate, class).
  for (std::size_t j = 0; j < M; ++j) {
    auto& rp = out.response[j];
    if (!rp.modeled) {
      if (start && j < start->response.size()) rp = start->response[j];
      continue;
    }
    // Aggregate by (observed cell, u, z, y, q) and response indicator.
    const std::size_t block = 12 * static_cast<std::size_t>(Q);
    std::vector<double> obs1(O * block, 0.0), obs0(O * block, 0.0);
    for (std::uint32_t mask = 0; mask <= geom.full_mask(); ++mask) {
      auto& dst = (mask & (1u << j)) ? obs1 : obs0;
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t o = geom.observed_cell(c);
        for (ComplianceClass u : kAllClasses)
          for (int z = 0; z < 2; ++z)
            for (int y = 0; y < 2; ++y)
              for (int q = 0; q < Q; ++q)
                dst[k_idx(o, index_of(u), z, y, q)] += expect.at(mask, c, u, z, y, q);
      }
    }
    for (ComplianceClass u : kAllClasses) {
      const auto ui = static_cast<std::size_t>(index_of(u));
      const bool complier = u == ComplianceClass::Complier;
      const bool inter = complier && spec.response_yz_interaction;
      const Eigen::Index cols = po + 1 + (complier ? 1 : 0) + (inter ? 1 : 0);
      const auto rows = static_cast<Eigen::Index>(O * 4 * static_cast<std::size_t>(Q));
      BinomialData bd{Eigen::MatrixXd::Zero(rows, cols), Eigen::VectorXd::Zero(rows),
                      Eigen::VectorXd::Zero(rows), Eigen::VectorXd::Zero(rows)};
      Eigen::Index i = 0;
      for (std::size_t o = 0; o < O; ++o) {
        for (int z = 0; z < 2; ++z) {
          for (int y = 0; y < 2; ++y) {
            for (int q = 0; q < Q; ++q, ++i) {
              bd.X.row(i).head(po) = geom.observed_design(o).transpose();
              bd.X(i, po) = y;
              if (complier) bd.X(i, po + 1) = z;
              if (inter) bd.X(i, po + 2) = y * z;
              bd.n1(i) = obs1[k_idx(o, index_of(u), z, y, q)];
              bd.n0(i) = obs0[k_idx(o, index_of(u), z, y, q)];
              bd.offset(i) = (sens && q == 1) ? sens->kappa_for(j, u) : 0.0;
            }
          }
        }
      }
      Eigen::VectorXd init = Eigen::VectorXd::Zero(cols);
      if (start && j < start->response.size() && start->response[j].theta[ui].size() == po) {
        const auto& sr = start->response[j];
        init.head(po) = sr.theta[ui];
        init(po) = sr.gamma[ui];
        if (complier) init(po + 1) = sr.eta_complier;
        if (inter) init(po + 2) = sr.eta_yz_complier;
      }
      const auto r = fit_logistic(bd, init, nopts);
      note(r, "response covariate " + std::to_string(j) + " " + to_string(u));
      rp.theta[ui] = r.coef.head(po);
      rp.gamma[ui] = r.coef(po);
      if (complier) rp.eta_complier = r.coef(po + 1);
      if (inter) rp.eta_yz_complier = r.coef(po + 2);
    }
  }
  return out;
}

ParamSet random_start(const ObservedCounts& counts, std::uint64_t seed) {
  const CovariateSpec& spec = counts.spec();
  const CellGeometry& geom = counts.geometry();
  Rng rng(seed);
  ParamSet ps = ParamSet::zeros(spec);
  const auto draw = [&](Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-0.5, 0.5);
  };
  draw(ps.alpha);
  draw(ps.delta_a);
  draw(ps.delta_c);
  draw(ps.beta_c0);
  draw(ps.beta_c1);
  draw(ps.beta_a);
  draw(ps.beta_n);
  for (auto& r : ps.response) {
    for (auto& t : r.theta) draw(t);
    for (auto& g : r.gamma) g = rng.uniform(-0.5, 0.5);
    r.eta_complier = rng.uniform(-0.5, 0.5);
    if (spec.response_yz_interaction) r.eta_yz_complier = rng.uniform(-0.5, 0.5);
  }
  // Complete-case pattern cells coincide with full cell indices.
  const auto& complete = counts.table(geom.full_mask());
  std::vector<double> freq(geom.num_cells(), 0.0);
  for (std::size_t c = 0; c < geom.num_cells(); ++c) {
    for (std::size_t k = 0; k < 8; ++k) freq[c] += complete[c * 8 + k];
  }
  const double cc_total = std::accumulate(freq.begin(), freq.end(), 0.0);
  if (cc_total > 0.0) {
    // Empty cells keep a half-record of mass so EM can still move into them.
    double t = 0.0;
    for (auto& f : freq) {
      if (f <= 0.0) f = 0.5;
      t += f;
    }
    for (std::size_t c = 0; c < freq.size(); ++c) ps.w[c] = freq[c] / t;
  }
  return ps;
}

namespace {

struct RestartOutcome {
  FitResult fit;
  bool ok = false;
  std::string error;
};

RestartOutcome run_restart(const ObservedCounts& counts, const FitConfig& config,
                           const FitOptions& opts, ParamSet params) {
  RestartOutcome out;
  const SensitivityParams* sens = opts.sensitivity;
  FitResult& fit = out.fit;
  fit.spec = counts.spec();
  if (sens) fit.sensitivity = *sens;
  try {
    Evaluation ev = evaluate(params, counts, sens, true);
    fit.loglik_trace.push_back(ev.loglik);
    MStepReport report;
    for (int it = 1; it <= config.max_em_iters; ++it) {
      report.nonconverged.clear();
      ParamSet next = m_step(ev.expect, counts.spec(), config, &params, sens, &report);
      const double change = max_abs_difference(next, params);
      params = std::move(next);
      Evaluation ev_next = evaluate(params, counts, sens, true);
      const double gain = ev_next.loglik - ev.loglik;
      ev = std::move(ev_next);
      fit.loglik_trace.push_back(ev.loglik);
      fit.iterations = it;
      if (std::abs(gain) < config.loglik_tol || change < config.param_tol) {
        fit.converged = true;
        break;
      }
    }
    fit.params = std::move(params);
    fit.final_expectations = std::move(ev.expect);
    fit.warnings = std::move(report.nonconverged);
    out.ok = true;
  } catch (const EstimationError& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

FitResult fit_em(const ObservedCounts& counts, const FitConfig& config, const FitOptions& opts) {
  config.validate();
  const CovariateSpec& spec = counts.spec();
  if (!(counts.total() > 0.0)) throw ValidationError("fit_em: dataset is empty");
  if (opts.sensitivity) opts.sensitivity->validate();
  // Compliers are only identified by contrasting the two instrument arms.
  std::array<double, 2> arm{0.0, 0.0};
  for (std::uint32_t mask = 0; mask <= counts.geometry().full_mask(); ++mask) {
    for (std::size_t pc = 0; pc < counts.geometry().pattern_size(mask); ++pc) {
      for (int d = 0; d < 2; ++d) {
        for (int z = 0; z < 2; ++z) {
          for (int y = 0; y < 2; ++y) arm[static_cast<std::size_t>(z)] += counts.at(mask, pc, d, z, y);
        }
      }
    }
  }
  if (!(arm[0] > 0.0 && arm[1] > 0.0)) throw EstimationError("fit_em: one instrument arm has no records");

  std::vector<bool> modeled(spec.num_partial(), false);
  for (std::size_t j = 0; j < spec.num_partial(); ++j) {
    for (std::uint32_t mask = 0; mask <= counts.geometry().full_mask(); ++mask) {
      if (!(mask & (1u << j)) && counts.pattern_total(mask) > 0.0) modeled[j] = true;
    }
    if (modeled[j] && !opts.model_missingness) {
      throw ValidationError("fit_em: missing covariate values with missingness modeling disabled");
    }
  }
  const auto prepare = [&](ParamSet ps) {
    for (std::size_t j = 0; j < spec.num_partial(); ++j) {
      ps.response[j].modeled = modeled[j];
      if (!modeled[j]) {
        for (auto& t : ps.response[j].theta) t.setZero();
        ps.response[j].gamma = {0.0, 0.0, 0.0};
        ps.response[j].eta_complier = 0.0;
        ps.response[j].eta_yz_complier = 0.0;
      }
    }
    return ps;
  };

  std::optional<RestartOutcome> best;
  std::string last_error;
  for (int r = 0; r < config.n_restarts; ++r) {
    ParamSet init = (r == 0 && opts.warm_start) ? *opts.warm_start
                                                : random_start(counts, derive_seed(config.init_seed, static_cast<std::uint64_t>(r)));
    init.validate(spec);
    RestartOutcome res = run_restart(counts, config, opts, prepare(std::move(init)));
    if (!res.ok) {
      last_error = res.error;
      continue;
    }
    res.fit.restart = r;
    if (!best || res.fit.loglik() > best->fit.loglik()) best = std::move(res);
  }
  if (!best) throw EstimationError("fit_em: every restart failed: " + last_error);
  return std::move(best->fit);
}

FitResult fit_em(const Dataset& data, const CovariateSpec& spec, const FitConfig& config,
                 const FitOptions& opts) {
  if (data.empty()) throw ValidationError("fit_em: dataset is empty");
  return fit_em(tabulate_observed(data, spec), config, opts);
}

}  // namespace ivcace
