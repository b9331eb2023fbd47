#include <doctest.h>

#include <cmath>

#include "ivcace/logistic.hpp"

using namespace ivcace;

namespace {

double logit_of(double p) { return std::log(p / (1.0 - p)); }

BinomialData two_groups(double s0, double f0, double s1, double f1) {
  BinomialData d;
  d.X.resize(2, 2);
  d.X << 1, 0, 1, 1;
  d.n1.resize(2);
  d.n1 << s0, s1;
  d.n0.resize(2);
  d.n0 << f0, f1;
  d.offset = Eigen::VectorXd::Zero(2);
  return d;
}

}  // namespace

TEST_CASE("saturated two-group logistic fit matches empirical log-odds") {
  // Closed form: intercept = logit(p0), slope = logit(p1) - logit(p0).
  const auto d = two_groups(3.0, 7.0, 12.5, 4.5);
  const auto r = fit_logistic(d, Eigen::VectorXd::Zero(2));
  REQUIRE(r.converged);
  CHECK(r.coef[0] == doctest::Approx(logit_of(0.3)).epsilon(1e-10));
  CHECK(r.coef[1] == doctest::Approx(logit_of(12.5 / 17.0) - logit_of(0.3)).epsilon(1e-10));
  const double ll = 3 * std::log(0.3) + 7 * std::log(0.7) + 12.5 * std::log(12.5 / 17) + 4.5 * std::log(4.5 / 17);
  CHECK(r.loglik == doctest::Approx(ll).epsilon(1e-12));
  CHECK(logistic_loglik(d, r.coef) == doctest::Approx(ll).epsilon(1e-12));
}

TEST_CASE("offsets shift the fitted intercept") {
  auto d = two_groups(3.0, 7.0, 6.0, 4.0);
  d.offset << 0.5, 0.5;
  const auto r = fit_logistic(d, Eigen::VectorXd::Zero(2));
  CHECK(r.coef[0] == doctest::Approx(logit_of(0.3) - 0.5).epsilon(1e-10));
  CHECK(r.coef[1] == doctest::Approx(logit_of(0.6) - logit_of(0.3)).epsilon(1e-10));
}

TEST_CASE("intercept-only covariance is the inverse binomial information") {
  BinomialData d;
  d.X = Eigen::MatrixXd::Ones(1, 1);
  d.n1 = Eigen::VectorXd::Constant(1, 20.0);
  d.n0 = Eigen::VectorXd::Constant(1, 80.0);
  d.offset = Eigen::VectorXd::Zero(1);
  const auto r = fit_logistic(d, Eigen::VectorXd::Zero(1));
  const auto cov = logistic_covariance(d, r.coef);
  CHECK(cov(0, 0) == doctest::Approx(1.0 / (100 * 0.2 * 0.8)).epsilon(1e-9));
}

TEST_CASE("complete separation stays finite") {
  // Group 1 is all successes: the MLE slope is infinite.
  const auto d = two_groups(2.0, 8.0, 5.0, 0.0);
  const auto r = fit_logistic(d, Eigen::VectorXd::Zero(2));
  CHECK(r.coef.allFinite());
  CHECK(inv_logit(r.coef[0]) == doctest::Approx(0.2).epsilon(1e-8));
  CHECK(inv_logit(r.coef[0] + r.coef[1]) > 0.999);
}

TEST_CASE("zero weight rows and an all-zero problem are harmless") {
  const auto d = two_groups(0.0, 0.0, 0.0, 0.0);
  const auto r = fit_logistic(d, Eigen::VectorXd::Zero(2));
  CHECK(r.coef.allFinite());
  CHECK(r.loglik == 0.0);
}

TEST_CASE("saturated multinomial fit matches empirical log-ratios") {
  MultinomialData d;
  d.X.resize(2, 2);
  d.X << 1, 0, 1, 1;
  d.counts.resize(2, 3);
  d.counts << 5, 3, 2, 1, 6, 3;
  const auto r = fit_multinomial(d, Eigen::VectorXd::Zero(4));
  REQUIRE(r.converged);
  // Category 1 block then category 2 block, each (intercept, slope).
  CHECK(r.coef[0] == doctest::Approx(std::log(3.0 / 5.0)).epsilon(1e-10));
  CHECK(r.coef[1] == doctest::Approx(std::log(6.0 / 1.0) - std::log(3.0 / 5.0)).epsilon(1e-10));
  CHECK(r.coef[2] == doctest::Approx(std::log(2.0 / 5.0)).epsilon(1e-10));
  CHECK(r.coef[3] == doctest::Approx(std::log(3.0 / 1.0) - std::log(2.0 / 5.0)).epsilon(1e-10));
  const auto p = multinomial_probs(d.X.row(1).transpose(), r.coef, 3);
  CHECK(p[0] == doctest::Approx(0.1).epsilon(1e-10));
  CHECK(p[1] == doctest::Approx(0.6).epsilon(1e-10));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("two-category multinomial agrees with the logistic fit") {
  MultinomialData m;
  m.X.resize(3, 2);
  m.X << 1, 0, 1, 1, 1, 2;
  m.counts.resize(3, 2);
  m.counts << 8, 2, 5, 5, 1, 9;
  BinomialData b;
  b.X = m.X;
  b.n1 = m.counts.col(1);
  b.n0 = m.counts.col(0);
  b.offset = Eigen::VectorXd::Zero(3);
  const auto rm = fit_multinomial(m, Eigen::VectorXd::Zero(2));
  const auto rb = fit_logistic(b, Eigen::VectorXd::Zero(2));
  CHECK((rm.coef - rb.coef).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(rm.loglik == doctest::Approx(rb.loglik).epsilon(1e-12));
}

TEST_CASE("clamped helpers") {
  CHECK(clamp_logit(100.0) == kLogitClamp);
  CHECK(clamp_logit(-100.0) == -kLogitClamp);
  CHECK(logit(0.0) == -kLogitClamp);
  CHECK(logit(1.0) == kLogitClamp);
  CHECK(inv_logit(0.0) == 0.5);
  CHECK(logit(inv_logit(1.25)) == doctest::Approx(1.25).epsilon(1e-12));
}
