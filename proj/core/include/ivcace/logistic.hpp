#pragma once

#include <Eigen/Dense>

namespace ivcace {

/// Linear predictors are clamped to +/- this value, roughly logit(1 - 1e-16).
inline constexpr double kLogitClamp = 36.7;

double clamp_logit(double eta);
double inv_logit(double eta);
/// log(p / (1 - p)) with p in {0, 1} mapped to the clamp bounds.
double logit(double p);

struct NewtonOptions {
  int max_iters = 50;
  double ridge = 1e-8;
  double tol = 1e-10;
};

struct NewtonResult {
  Eigen::VectorXd coef;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Grouped binomial data: row i has design X.row(i), n1(i) weighted successes,
/// n0(i) weighted failures, and a fixed offset added to the linear predictor.
struct BinomialData {
  Eigen::MatrixXd X;
  Eigen::VectorXd n1;
  Eigen::VectorXd n0;
  Eigen::VectorXd offset;
};

double logistic_loglik(const BinomialData& data, const Eigen::VectorXd& coef);

/// Weighted logistic MLE by Newton-Raphson with step halving. Rows whose
/// linear predictor sits on the clamp contribute no curvature; the ridge is
/// added to the Hessian only when its factorization is singular.
NewtonResult fit_logistic(const BinomialData& data, const Eigen::VectorXd& start,
                          const NewtonOptions& opts = {});

/// Grouped multinomial data with category 0 as the reference: counts(i, k) is
/// the weight of category k in row i.
struct MultinomialData {
  Eigen::MatrixXd X;
  Eigen::MatrixXd counts;
};

/// Coefficients are stacked by category: entries [(k-1)*p, k*p) belong to
/// category k for k = 1..K-1.
double multinomial_loglik(const MultinomialData& data, const Eigen::VectorXd& coef);

Eigen::VectorXd multinomial_probs(const Eigen::VectorXd& x, const Eigen::VectorXd& coef,
                                  int categories);

NewtonResult fit_multinomial(const MultinomialData& data, const Eigen::VectorXd& start,
                             const NewtonOptions& opts = {});

/// Inverse of the observed information at `coef`; used to draw imputation
/// model parameters. Falls back to a ridge-regularized inverse.
Eigen::MatrixXd logistic_covariance(const BinomialData& data, const Eigen::VectorXd& coef,
                                    double ridge = 1e-8);
Eigen::MatrixXd multinomial_covariance(const MultinomialData& data,
                                       const Eigen::VectorXd& coef, double ridge = 1e-8);

}  // namespace ivcace
