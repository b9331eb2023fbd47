#include <doctest.h>

#include <cmath>

#include "ivcace/estimands.hpp"
#include "ivcace/simulation.hpp"
#include "support.hpp"

using namespace ivcace;

TEST_CASE("percentile interval uses floor and ceil order statistics") {
  // B = 11, level 0.8: a = 0.1, indices floor(1.0) = 1 and ceil(9.0) = 9.
  std::vector<double> v{10, 0, 9, 1, 8, 2, 7, 3, 6, 4, 5};
  const auto [lo, hi] = percentile_interval(v, 0.8);
  CHECK(lo == 1.0);
  CHECK(hi == 9.0);
  // B = 4, level 0.5: a = 0.25, floor(0.75) = 0, ceil(2.25) = 3.
  const auto [lo2, hi2] = percentile_interval({4, 1, 3, 2}, 0.5);
  CHECK(lo2 == 1.0);
  CHECK(hi2 == 4.0);
  CHECK_THROWS_AS(percentile_interval({}, 0.9), ValidationError);
}

TEST_CASE("tables and weighted effects follow their definitions") {
  CovariateSpec spec{{"g", "p"}, {3, 2}, {true, false}, false};
  Rng rng(31);
  FitResult fit;
  fit.spec = spec;
  fit.params = testing::random_params(spec, rng);
  const auto cells = all_cells(spec);
  REQUIRE(cells.size() == 6);
  CHECK(cells[1] == Cell{0, 1});

  double by_cell = 0.0;
  double num = 0.0;
  double den = 0.0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    std::vector<double> x{1.0, double(cells[c][0]), double(cells[c][1])};
    const double eff = testing::sigmoid(testing::dot(fit.params.beta_c1, x)) -
                       testing::sigmoid(testing::dot(fit.params.beta_c0, x));
    const double ec = std::exp(testing::dot(fit.params.delta_c, x));
    const double ea = std::exp(testing::dot(fit.params.delta_a, x));
    const double pc = ec / (1 + ec + ea);
    by_cell += fit.params.w[c] * eff;
    num += fit.params.w[c] * pc * eff;
    den += fit.params.w[c] * pc;
    CHECK(cace_table(fit, {cells[c]})[0].estimate == doctest::Approx(eff).epsilon(1e-14));
    const auto comp = compliance_proportions(fit, {cells[c]})[0];
    CHECK(comp.p_complier == doctest::Approx(pc).epsilon(1e-14));
    CHECK(comp.p_always == doctest::Approx(ea / (1 + ec + ea)).epsilon(1e-14));
    CHECK(comp.p_always + comp.p_complier + comp.p_never == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK(weighted_cace(fit, Weighting::CellProbability) == doctest::Approx(by_cell).epsilon(1e-13));
  CHECK(weighted_cace(fit, Weighting::ComplierCount) == doctest::Approx(num / den).epsilon(1e-13));
  CHECK(evaluate_target(fit, EstimandTarget::weighted(Weighting::ComplierCount)) ==
        weighted_cace(fit, Weighting::ComplierCount));
  CHECK_THROWS_AS(cace_table(fit, {{3, 0}}), ValidationError);
  CHECK_THROWS_AS(cace_table(fit, {{0}}), ValidationError);
}

TEST_CASE("target labels use 1-based codes") {
  CHECK(EstimandTarget::cell_cace({0, 1, 0}).label() == "cace[1,2,1]");
  CHECK(EstimandTarget::weighted(Weighting::CellProbability).label() == "weighted_cell_probability");
  CHECK(EstimandTarget::weighted(Weighting::ComplierCount).label() == "weighted_complier_count");
}

TEST_CASE("bootstrap is deterministic and independent of the worker count") {
  const auto data = generate(scenario_params(Scenario::Nonignorable), 1500, 3).records;
  const auto spec = single_cov_spec();
  FitConfig cfg;
  cfg.n_restarts = 2;
  BootstrapConfig b;
  b.n_resamples = 12;
  b.seed = 5;
  const std::vector<EstimandTarget> targets{EstimandTarget::cell_cace({1}), EstimandTarget::cell_cace({0})};
  const auto r1 = bootstrap_ci(data, spec, cfg, b, targets);
  b.workers = 3;
  const auto r3 = bootstrap_ci(data, spec, cfg, b, targets);
  REQUIRE(r1.rows.size() == 2);
  CHECK(r1.replicates == r3.replicates);
  CHECK(r1.n_dropped == 0);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(r1.rows[i].lower == r3.rows[i].lower);
    CHECK(r1.rows[i].upper == r3.rows[i].upper);
    CHECK(r1.rows[i].lower <= r1.rows[i].upper);
    CHECK(r1.rows[i].sd > 0.0);
  }
  CHECK(r1.find(targets[1]) == &r1.rows[1]);
  BootstrapConfig zero;
  zero.n_resamples = 0;
  CHECK_THROWS_AS(bootstrap_ci(data, spec, cfg, zero, targets), ValidationError);
}
