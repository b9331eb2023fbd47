#include "ivcace/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "ivcace/logistic.hpp"
#include "ivcace/parallel.hpp"
#include "ivcace/rng.hpp"

namespace ivcace {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_complete(const Record& r) {
  return std::none_of(r.x.begin(), r.x.end(), [](int v) { return v == kMissing; });
}

void validate_all(const Dataset& data, const CovariateSpec& spec) {
  spec.validate();
  if (data.empty()) throw ValidationError("dataset is empty");
  for (std::size_t i = 0; i < data.size(); ++i) validate_record(data[i], spec, i);
}

/// Dummy coding of the covariates (reference level 0), skipping `skip`.
std::size_t dummy_width(const CovariateSpec& spec, std::size_t skip) {
  std::size_t w = 0;
  for (std::size_t k = 0; k < spec.num_covariates(); ++k) {
    if (k != skip) w += static_cast<std::size_t>(spec.levels[k] - 1);
  }
  return w;
}

void fill_dummies(const CovariateSpec& spec, const std::vector<int>& x, std::size_t skip,
                  Eigen::Ref<Eigen::VectorXd> out) {
  std::size_t pos = 0;
  for (std::size_t k = 0; k < spec.num_covariates(); ++k) {
    if (k == skip) continue;
    for (int l = 1; l < spec.levels[k]; ++l) out[static_cast<Eigen::Index>(pos++)] = x[k] == l ? 1.0 : 0.0;
  }
}

IntervalEstimate make_interval(double estimate, double variance, double ci_level) {
  const double h = normal_critical_value(ci_level) * std::sqrt(std::max(variance, 0.0));
  return {estimate, variance, estimate - h, estimate + h};
}

// Draws from N(mean, cov); false when cov is not positive definite.
bool draw_normal(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, Rng& rng,
                 Eigen::VectorXd& out) {
  if (!cov.allFinite()) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) return false;
  Eigen::VectorXd e(mean.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = rng.normal();
  out = mean + llt.matrixL() * e;
  return out.allFinite();
}

class ChainedImputer {
 public:
  ChainedImputer(const Dataset& data, const CovariateSpec& spec) : data_(data), spec_(spec) {
    const std::size_t F = spec.num_fully_observed();
    for (std::size_t j = F; j < spec.num_covariates(); ++j) {
      std::vector<std::size_t> miss;
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].x[j] == kMissing) miss.push_back(i);
      }
      if (miss.empty()) continue;
      if (miss.size() == data.size()) {
        throw ValidationError("imputation: covariate '" + spec.names[j] + "' is never observed");
      }
      targets_.push_back(j);
      missing_.push_back(std::move(miss));
    }
  }

  bool needed() const { return !targets_.empty(); }

  Dataset run(int n_cycles, Rng& rng) const {
    Dataset out = data_;
    // Start from draws of the observed marginal.
    for (std::size_t t = 0; t < targets_.size(); ++t) {
      const auto freq = observed_frequencies(targets_[t], nullptr, 0);
      for (std::size_t i : missing_[t]) out[i].x[targets_[t]] = static_cast<int>(rng.categorical(freq));
    }
    for (int cycle = 0; cycle < n_cycles; ++cycle) {
      for (std::size_t t = 0; t < targets_.size(); ++t) impute_one(out, t, rng);
    }
    return out;
  }

 private:
  // z, d and y enter fully interacted: P(x | z, d, y) mixes over compliance
  // classes and has no main-effects form, so a main-effects model would bias
  // the imputations even under MCAR. Other covariates enter as dummies.
  static constexpr Eigen::Index kZdy = 8;

  std::size_t predictor_width(std::size_t j) const { return kZdy + dummy_width(spec_, j); }

  Eigen::VectorXd predictors(const Record& r, std::size_t j) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(predictor_width(j)));
    v[0] = 1.0;
    v[1] = r.z;
    v[2] = r.d;
    v[3] = r.y;
    v[4] = r.z * r.d;
    v[5] = r.z * r.y;
    v[6] = r.d * r.y;
    v[7] = r.z * r.d * r.y;
    fill_dummies(spec_, r.x, j, v.tail(v.size() - kZdy));
    return v;
  }

  // Observed-value frequencies of covariate j, optionally restricted to the
  // records sharing the fully observed part of `like`.
  std::vector<double> observed_frequencies(std::size_t j, const Record* like, double prior) const {
    std::vector<double> f(static_cast<std::size_t>(spec_.levels[j]), prior);
    const std::size_t F = spec_.num_fully_observed();
    for (const auto& r : data_) {
      if (r.x[j] == kMissing) continue;
      if (like && !std::equal(r.x.begin(), r.x.begin() + static_cast<std::ptrdiff_t>(F), like->x.begin())) continue;
      f[static_cast<std::size_t>(r.x[j])] += 1.0;
    }
    return f;
  }

  void impute_one(Dataset& cur, std::size_t t, Rng& rng) const {
    const std::size_t j = targets_[t];
    const auto K = static_cast<Eigen::Index>(spec_.levels[j]);

    // Group observed records by predictor pattern.
    std::map<std::vector<double>, Eigen::Index> rows;
    std::vector<Eigen::VectorXd> xs;
    std::vector<Eigen::VectorXd> cs;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (data_[i].x[j] == kMissing) continue;
      const Eigen::VectorXd v = predictors(cur[i], j);
      const std::vector<double> key(v.data(), v.data() + v.size());
      auto [it, fresh] = rows.emplace(key, static_cast<Eigen::Index>(xs.size()));
      if (fresh) {
        xs.push_back(v);
        cs.push_back(Eigen::VectorXd::Zero(K));
      }
      cs[static_cast<std::size_t>(it->second)][cur[i].x[j]] += 1.0;
    }
    MultinomialData md;
    const auto P = static_cast<Eigen::Index>(predictor_width(j));
    md.X.resize(static_cast<Eigen::Index>(xs.size()), P);
    md.counts.resize(static_cast<Eigen::Index>(xs.size()), K);
    for (std::size_t r = 0; r < xs.size(); ++r) {
      md.X.row(static_cast<Eigen::Index>(r)) = xs[r].transpose();
      md.counts.row(static_cast<Eigen::Index>(r)) = cs[r].transpose();
    }

    Eigen::VectorXd coef;
    bool model_ok = false;
    const auto fit = fit_multinomial(md, Eigen::VectorXd::Zero(P * (K - 1)));
    if (fit.converged && fit.coef.allFinite()) {
      model_ok = draw_normal(fit.coef, multinomial_covariance(md, fit.coef), rng, coef);
    }

    for (std::size_t i : missing_[t]) {
      std::vector<double> w;
      if (model_ok) {
        const Eigen::VectorXd p = multinomial_probs(predictors(cur[i], j), coef, static_cast<int>(K));
        w.assign(p.data(), p.data() + p.size());
      } else {
        w = observed_frequencies(j, &cur[i], 0.0);
        if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) w = observed_frequencies(j, nullptr, 0.0);
      }
      cur[i].x[j] = static_cast<int>(rng.categorical(w));
    }
  }

  const Dataset& data_;
  const CovariateSpec& spec_;
  std::vector<std::size_t> targets_;
  std::vector<std::vector<std::size_t>> missing_;
};

struct ArmMeans {
  double n1 = 0.0, s1 = 0.0, n0 = 0.0, s0 = 0.0;

  void add(const Record& r) {
    if (r.d == 1) {
      n1 += 1.0;
      s1 += r.y;
    } else {
      n0 += 1.0;
      s0 += r.y;
    }
  }
  double difference() const { return s1 / n1 - s0 / n0; }
  double variance() const {
    const double p1 = s1 / n1;
    const double p0 = s0 / n0;
    return p1 * (1.0 - p1) / n1 + p0 * (1.0 - p0) / n0;
  }
};

// Estimate and variance on one completed dataset.
std::pair<double, double> regression_on(const Dataset& data, const CovariateSpec& spec) {
  const auto none = spec.num_covariates();
  const auto P = static_cast<Eigen::Index>(2 + dummy_width(spec, none));
  std::map<std::vector<double>, Eigen::Index> rows;
  std::vector<Eigen::VectorXd> xs;
  std::vector<std::array<double, 2>> ys;
  for (const auto& r : data) {
    Eigen::VectorXd v(P);
    v[0] = 1.0;
    v[1] = r.d;
    fill_dummies(spec, r.x, none, v.tail(P - 2));
    const std::vector<double> key(v.data(), v.data() + v.size());
    auto [it, fresh] = rows.emplace(key, static_cast<Eigen::Index>(xs.size()));
    if (fresh) {
      xs.push_back(v);
      ys.push_back({0.0, 0.0});
    }
    ys[static_cast<std::size_t>(it->second)][static_cast<std::size_t>(r.y)] += 1.0;
  }
  BinomialData bd;
  const auto R = static_cast<Eigen::Index>(xs.size());
  bd.X.resize(R, P);
  bd.n1.resize(R);
  bd.n0.resize(R);
  bd.offset = Eigen::VectorXd::Zero(R);
  for (Eigen::Index i = 0; i < R; ++i) {
    bd.X.row(i) = xs[static_cast<std::size_t>(i)].transpose();
    bd.n1[i] = ys[static_cast<std::size_t>(i)][1];
    bd.n0[i] = ys[static_cast<std::size_t>(i)][0];
  }
  const auto fit = fit_logistic(bd, Eigen::VectorXd::Zero(P));
  if (!fit.converged) throw EstimationError("regression_adjusted: outcome regression did not converge");

  // Standardize over the empirical covariate distribution.
  double est = 0.0;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(P);
  for (const auto& r : data) {
    Eigen::VectorXd v(P);
    v[0] = 1.0;
    fill_dummies(spec, r.x, none, v.tail(P - 2));
    v[1] = 1.0;
    const double p1 = inv_logit(v.dot(fit.coef));
    const Eigen::VectorXd v1 = v;
    v[1] = 0.0;
    const double p0 = inv_logit(v.dot(fit.coef));
    est += p1 - p0;
    grad += p1 * (1.0 - p1) * v1 - p0 * (1.0 - p0) * v;
  }
  const double n = static_cast<double>(data.size());
  est /= n;
  grad /= n;
  const double var = grad.dot(logistic_covariance(bd, fit.coef) * grad);
  return {est, var};
}

std::pair<double, double> subclass_on(const Dataset& data, const CovariateSpec& spec, int n_sub) {
  const auto none = spec.num_covariates();
  const auto P = static_cast<Eigen::Index>(1 + dummy_width(spec, none));
  std::vector<double> score(data.size(), 0.0);
  if (P > 1) {
    std::map<std::vector<double>, Eigen::Index> rows;
    std::vector<Eigen::VectorXd> xs;
    std::vector<std::array<double, 2>> ds;
    std::vector<Eigen::Index> row_of(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      Eigen::VectorXd v(P);
      v[0] = 1.0;
      fill_dummies(spec, data[i].x, none, v.tail(P - 1));
      const std::vector<double> key(v.data(), v.data() + v.size());
      auto [it, fresh] = rows.emplace(key, static_cast<Eigen::Index>(xs.size()));
      if (fresh) {
        xs.push_back(v);
        ds.push_back({0.0, 0.0});
      }
      row_of[i] = it->second;
      ds[static_cast<std::size_t>(it->second)][static_cast<std::size_t>(data[i].d)] += 1.0;
    }
    BinomialData bd;
    const auto R = static_cast<Eigen::Index>(xs.size());
    bd.X.resize(R, P);
    bd.n1.resize(R);
    bd.n0.resize(R);
    bd.offset = Eigen::VectorXd::Zero(R);
    for (Eigen::Index i = 0; i < R; ++i) {
      bd.X.row(i) = xs[static_cast<std::size_t>(i)].transpose();
      bd.n1[i] = ds[static_cast<std::size_t>(i)][1];
      bd.n0[i] = ds[static_cast<std::size_t>(i)][0];
    }
    const auto fit = fit_logistic(bd, Eigen::VectorXd::Zero(P));
    const Eigen::VectorXd eta = bd.X * fit.coef;
    // Rank on the linear predictor: monotone in the propensity and free of
    // rounding ties near 0 and 1.
    for (std::size_t i = 0; i < data.size(); ++i) score[i] = clamp_logit(eta[row_of[i]]);
  }

  std::vector<double> sorted = score;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t N = data.size();
  std::vector<double> cuts;
  for (int k = 1; k < n_sub; ++k) {
    const std::size_t idx = (static_cast<std::size_t>(k) * N + static_cast<std::size_t>(n_sub) - 1) /
                                static_cast<std::size_t>(n_sub) - 1;
    cuts.push_back(sorted[std::min(idx, N - 1)]);
  }
  std::vector<ArmMeans> groups(static_cast<std::size_t>(n_sub));
  for (std::size_t i = 0; i < N; ++i) {
    // Values equal to a cut belong to the lower subclass.
    const auto g = static_cast<std::size_t>(std::lower_bound(cuts.begin(), cuts.end(), score[i]) - cuts.begin());
    groups[g].add(data[i]);
  }
  double est = 0.0;
  double var = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& a = groups[g];
    const double size = a.n1 + a.n0;
    if (size == 0.0) continue;
    if (a.n1 == 0.0 || a.n0 == 0.0) {
      throw EstimationError("propensity_subclassification: subclass " + std::to_string(g + 1) +
                            " lacks a treatment arm");
    }
    const double w = size / static_cast<double>(N);
    est += w * a.difference();
    var += w * w * a.variance();
  }
  return {est, var};
}

template <typename F>
IntervalEstimate pooled_over_imputations(const Dataset& data, const CovariateSpec& spec,
                                         const ImputationConfig& impute, double ci_level, F&& one) {
  const auto sets = impute_chained(data, spec, impute);
  std::vector<double> est;
  std::vector<double> var;
  for (const auto& s : sets) {
    const auto [e, v] = one(s);
    est.push_back(e);
    var.push_back(v);
  }
  const auto pooled = rubin_pool(est, var);
  return make_interval(pooled.estimate, pooled.total, ci_level);
}

}  // namespace

void ImputationConfig::validate() const {
  if (n_imputations < 1 || n_cycles < 1) {
    throw ValidationError("imputation: n_imputations and n_cycles must be at least 1");
  }
}

PooledValue rubin_pool(const std::vector<double>& estimates, const std::vector<double>& variances) {
  if (estimates.empty()) throw ValidationError("rubin_pool: no estimates");
  if (!variances.empty() && variances.size() != estimates.size()) {
    throw ValidationError("rubin_pool: estimate and variance counts differ");
  }
  const double M = static_cast<double>(estimates.size());
  PooledValue p;
  p.estimate = std::accumulate(estimates.begin(), estimates.end(), 0.0) / M;
  double ss = 0.0;
  for (double e : estimates) ss += (e - p.estimate) * (e - p.estimate);
  p.between = estimates.size() > 1 ? ss / (M - 1.0) : 0.0;
  p.within = variances.empty() ? kNaN : std::accumulate(variances.begin(), variances.end(), 0.0) / M;
  p.total = p.within + (1.0 + 1.0 / M) * p.between;
  return p;
}

FitResult complete_case_fit(const Dataset& data, const CovariateSpec& spec, const FitConfig& config) {
  validate_all(data, spec);
  Dataset cc;
  cc.reserve(data.size());
  std::copy_if(data.begin(), data.end(), std::back_inserter(cc), is_complete);
  if (cc.empty()) throw EstimationError("complete_case_fit: no complete records");
  FitOptions opts;
  opts.model_missingness = false;
  return fit_em(cc, spec, config, opts);
}

std::vector<Dataset> impute_chained(const Dataset& data, const CovariateSpec& spec,
                                    const ImputationConfig& config) {
  config.validate();
  validate_all(data, spec);
  const ChainedImputer imputer(data, spec);
  if (!imputer.needed()) return {data};
  std::vector<Dataset> out(static_cast<std::size_t>(config.n_imputations));
  for (std::size_t m = 0; m < out.size(); ++m) {
    Rng rng(derive_seed(config.seed, m));
    out[m] = imputer.run(config.n_cycles, rng);
  }
  return out;
}

MarImputeResult mar_impute_fit(const Dataset& data, const CovariateSpec& spec,
                               const FitConfig& config, const ImputationConfig& impute,
                               const std::vector<EstimandTarget>& targets) {
  const auto sets = impute_chained(data, spec, impute);
  FitOptions opts;
  opts.model_missingness = false;
  MarImputeResult res;
  for (const auto& s : sets) res.fits.push_back(fit_em(s, spec, config, opts));
  for (const auto& t : targets) {
    std::vector<double> est;
    for (const auto& f : res.fits) est.push_back(evaluate_target(f, t));
    res.pooled.push_back(rubin_pool(est));
  }
  return res;
}

IntervalEstimate unadjusted_difference(const Dataset& data, double ci_level) {
  ArmMeans a;
  for (const auto& r : data) a.add(r);
  if (a.n1 == 0.0 || a.n0 == 0.0) throw EstimationError("unadjusted_difference: empty treatment arm");
  return make_interval(a.difference(), a.variance(), ci_level);
}

IntervalEstimate regression_adjusted(const Dataset& data, const CovariateSpec& spec,
                                     const ImputationConfig& impute, double ci_level) {
  return pooled_over_imputations(data, spec, impute, ci_level,
                                 [&](const Dataset& s) { return regression_on(s, spec); });
}

IntervalEstimate propensity_subclassification(const Dataset& data, const CovariateSpec& spec,
                                              const ImputationConfig& impute, int n_subclasses,
                                              double ci_level) {
  if (n_subclasses < 1) throw ValidationError("propensity_subclassification: n_subclasses must be >= 1");
  return pooled_over_imputations(data, spec, impute, ci_level, [&](const Dataset& s) {
    return subclass_on(s, spec, n_subclasses);
  });
}

double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal(), 0.5 + level / 2.0);
}

}  // namespace ivcace
