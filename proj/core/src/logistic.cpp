#include "ivcace/logistic.hpp"

#include <algorithm>
#include <cmath>

namespace ivcace {

double clamp_logit(double eta) { return std::clamp(eta, -kLogitClamp, kLogitClamp); }

double inv_logit(double eta) {
  eta = clamp_logit(eta);
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double logit(double p) {
  if (p <= 0.0) return -kLogitClamp;
  if (p >= 1.0) return kLogitClamp;
  return clamp_logit(std::log(p / (1.0 - p)));
}

namespace {

// log(sigma(eta)) and log(1 - sigma(eta)) without overflow.
double log_sigmoid(double eta) {
  return eta >= 0.0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta));
}

// Solves H step = g, adding ridge * I only when H does not factor cleanly.
Eigen::VectorXd solve_newton(Eigen::MatrixXd H, const Eigen::VectorXd& g, double ridge) {
  const Eigen::Index p = H.rows();
  double r = ridge;
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive();
    if (ok) {
      const Eigen::VectorXd d = ldlt.vectorD();
      const double dmax = d.cwiseAbs().maxCoeff();
      ok = dmax > 0.0 && d.minCoeff() > 1e-13 * dmax;
    }
    if (ok) return ldlt.solve(g);
    H += r * Eigen::MatrixXd::Identity(p, p);
    r *= 10.0;
  }
  return Eigen::VectorXd::Zero(p);
}

void logistic_derivatives(const BinomialData& data, const Eigen::VectorXd& coef,
                          Eigen::VectorXd& grad, Eigen::MatrixXd& hess) {
  const Eigen::Index p = data.X.cols();
  grad.setZero(p);
  hess.setZero(p, p);
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    const double total = data.n1(i) + data.n0(i);
    if (total <= 0.0) continue;
    const double raw = data.X.row(i).dot(coef) + data.offset(i);
    if (std::abs(raw) >= kLogitClamp) continue;  // flat beyond the clamp
    const double mu = inv_logit(raw);
    grad.noalias() += (data.n1(i) - total * mu) * data.X.row(i).transpose();
    hess.noalias() += (total * mu * (1.0 - mu)) * data.X.row(i).transpose() * data.X.row(i);
  }
}

template <typename LoglikFn, typename DerivFn>
NewtonResult newton_ascent(const Eigen::VectorXd& start, const NewtonOptions& opts,
                           LoglikFn&& loglik, DerivFn&& derivatives) {
  NewtonResult res;
  res.coef = start;
  res.loglik = loglik(res.coef);
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  for (int it = 0; it < opts.max_iters; ++it) {
    res.iterations = it + 1;
    derivatives(res.coef, grad, hess);
    if (grad.size() == 0 || grad.cwiseAbs().maxCoeff() < 1e-12) {
      res.converged = true;
      break;
    }
    const Eigen::VectorXd step = solve_newton(hess, grad, opts.ridge);
    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd cand;
    double cand_ll = res.loglik;
    for (int halving = 0; halving < 40; ++halving) {
      cand = res.coef + t * step;
      cand_ll = loglik(cand);
      if (std::isfinite(cand_ll) && cand_ll >= res.loglik - 1e-12 * (1.0 + std::abs(res.loglik))) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      res.converged = step.cwiseAbs().maxCoeff() < opts.tol;
      break;
    }
    const double change = t * step.cwiseAbs().maxCoeff();
    const double gain = cand_ll - res.loglik;
    res.coef = cand;
    res.loglik = cand_ll;
    if (change < opts.tol || (gain >= 0.0 && gain < 1e-15 * (1.0 + std::abs(cand_ll)) && t == 1.0)) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace

double logistic_loglik(const BinomialData& data, const Eigen::VectorXd& coef) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    if (data.n1(i) <= 0.0 && data.n0(i) <= 0.0) continue;
    const double eta = clamp_logit(data.X.row(i).dot(coef) + data.offset(i));
    if (data.n1(i) > 0.0) ll += data.n1(i) * log_sigmoid(eta);
    if (data.n0(i) > 0.0) ll += data.n0(i) * log_sigmoid(-eta);
  }
  return ll;
}

NewtonResult fit_logistic(const BinomialData& data, const Eigen::VectorXd& start,
                          const NewtonOptions& opts) {
  return newton_ascent(
      start, opts, [&](const Eigen::VectorXd& c) { return logistic_loglik(data, c); },
      [&](const Eigen::VectorXd& c, Eigen::VectorXd& g, Eigen::MatrixXd& h) {
        logistic_derivatives(data, c, g, h);
      });
}

Eigen::VectorXd multinomial_probs(const Eigen::VectorXd& x, const Eigen::VectorXd& coef,
                                  int categories) {
  const Eigen::Index p = x.size();
  Eigen::VectorXd eta(categories);
  eta(0) = 0.0;
  for (int k = 1; k < categories; ++k) {
    eta(k) = clamp_logit(coef.segment((k - 1) * p, p).dot(x));
  }
  const double m = eta.maxCoeff();
  Eigen::VectorXd e = (eta.array() - m).exp();
  return e / e.sum();
}

double multinomial_loglik(const MultinomialData& data, const Eigen::VectorXd& coef) {
  const int K = static_cast<int>(data.counts.cols());
  double ll = 0.0;
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    const Eigen::VectorXd pr = multinomial_probs(data.X.row(i).transpose(), coef, K);
    for (int k = 0; k < K; ++k) {
      const double c = data.counts(i, k);
      if (c > 0.0) ll += c * std::log(pr(k));
    }
  }
  return ll;
}

namespace {

void multinomial_derivatives(const MultinomialData& data, const Eigen::VectorXd& coef,
                             Eigen::VectorXd& grad, Eigen::MatrixXd& hess) {
  const Eigen::Index p = data.X.cols();
  const int K = static_cast<int>(data.counts.cols());
  const Eigen::Index dim = p * (K - 1);
  grad.setZero(dim);
  hess.setZero(dim, dim);
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    const double total = data.counts.row(i).sum();
    if (total <= 0.0) continue;
    const Eigen::VectorXd x = data.X.row(i).transpose();
    const Eigen::VectorXd pr = multinomial_probs(x, coef, K);
    const Eigen::MatrixXd xx = x * x.transpose();
    for (int k = 1; k < K; ++k) {
      grad.segment((k - 1) * p, p).noalias() += (data.counts(i, k) - total * pr(k)) * x;
      for (int l = 1; l < K; ++l) {
        const double w = total * pr(k) * ((k == l ? 1.0 : 0.0) - pr(l));
        hess.block((k - 1) * p, (l - 1) * p, p, p).noalias() += w * xx;
      }
    }
  }
}

Eigen::MatrixXd inverse_information(const Eigen::MatrixXd& info, double ridge) {
  const Eigen::Index p = info.rows();
  Eigen::MatrixXd H = info;
  double r = ridge;
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
        ldlt.vectorD().minCoeff() > 1e-13 * ldlt.vectorD().cwiseAbs().maxCoeff()) {
      return ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    }
    H += r * Eigen::MatrixXd::Identity(p, p);
    r *= 10.0;
  }
  return Eigen::MatrixXd::Zero(p, p);
}

}  // namespace

NewtonResult fit_multinomial(const MultinomialData& data, const Eigen::VectorXd& start,
                             const NewtonOptions& opts) {
  return newton_ascent(
      start, opts, [&](const Eigen::VectorXd& c) { return multinomial_loglik(data, c); },
      [&](const Eigen::VectorXd& c, Eigen::VectorXd& g, Eigen::MatrixXd& h) {
        multinomial_derivatives(data, c, g, h);
      });
}

Eigen::MatrixXd logistic_covariance(const BinomialData& data, const Eigen::VectorXd& coef,
                                    double ridge) {
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  logistic_derivatives(data, coef, g, h);
  return inverse_information(h, ridge);
}

Eigen::MatrixXd multinomial_covariance(const MultinomialData& data,
                                       const Eigen::VectorXd& coef, double ridge) {
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  multinomial_derivatives(data, coef, g, h);
  return inverse_information(h, ridge);
}

}  // namespace ivcace
