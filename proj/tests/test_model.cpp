#include <doctest.h>

#include <cmath>
#include <map>

#include "ivcace/counts.hpp"
#include "ivcace/model.hpp"
#include "ivcace/simulation.hpp"
#include "support.hpp"

using namespace ivcace;

TEST_CASE("cell geometry round trips and orders the last covariate fastest") {
  CovariateSpec s{{"a", "b", "c"}, {3, 2, 2}, {true, false, false}, false};
  const CellGeometry g(s);
  CHECK(g.num_cells() == 12);
  CHECK(g.num_observed_cells() == 3);
  CHECK(g.num_patterns() == 4);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    CHECK(g.cell_of(g.levels_of(c)) == c);
    CHECK(g.cell_of(g.levels_of(c)) == testing::oracle_cell_index(s, g.levels_of(c)));
    CHECK(g.pattern_cell(g.full_mask(), c) == c);
  }
  CHECK(g.levels_of(1) == std::vector<int>{0, 0, 1});
  // Only the first partial covariate observed: pattern cells index (a, b).
  CHECK(g.pattern_size(0b01) == 6);
  CHECK(g.pattern_cell_of(0b01, {2, 1, kMissing}) == g.pattern_cell(0b01, g.cell_of({2, 1, 0})));
  CHECK(g.pattern_size(0) == 3);
  const auto& x = g.design(g.cell_of({2, 1, 0}));
  CHECK(x.size() == 4);
  CHECK(x[0] == 1.0);
  CHECK(x[1] == 2.0);
  CHECK(x[2] == 1.0);
  CHECK(x[3] == 0.0);
}

TEST_CASE("spec validation") {
  CovariateSpec ok{{"a"}, {2}, {false}, true};
  CHECK_NOTHROW(ok.validate());
  CovariateSpec bad_levels{{"a"}, {1}, {false}, false};
  CHECK_THROWS_AS(bad_levels.validate(), ValidationError);
  CovariateSpec bad_order{{"a", "b"}, {2, 2}, {false, true}, false};
  CHECK_THROWS_AS(bad_order.validate(), ValidationError);
  CovariateSpec ragged{{"a", "b"}, {2}, {true}, false};
  CHECK_THROWS_AS(ragged.validate(), ValidationError);
  Record r{{0, 5}, 1, 1, 0};
  CovariateSpec two{{"a", "b"}, {2, 2}, {true, false}, false};
  CHECK_THROWS_AS(validate_record(r, two, 3), ValidationError);
  Record full_missing{{kMissing, 1}, 1, 1, 0};
  CHECK_THROWS_AS(validate_record(full_missing, two, 0), ValidationError);
}

TEST_CASE("cell_joint_prob matches the factor-by-factor oracle and sums to one") {
  Rng rng(11);
  for (int rep = 0; rep < 25; ++rep) {
    const auto spec = testing::random_spec(rng);
    const auto p = testing::random_params(spec, rng);
    const CellGeometry g(spec);
    double total = 0.0;
    double worst = 0.0;
    for (std::uint32_t m = 0; m < g.num_patterns(); ++m) {
      for (std::size_t c = 0; c < g.num_cells(); ++c) {
        for (auto u : kAllClasses) {
          for (int z = 0; z < 2; ++z) {
            for (int y = 0; y < 2; ++y) {
              const double v = cell_joint_prob(p, g, m, c, u, z, y);
              worst = std::max(worst, std::abs(v - testing::oracle_joint(spec, p, m, g.levels_of(c), u, z, y)));
              total += v;
            }
          }
        }
      }
    }
    CHECK(worst < 1e-15);
    CHECK(std::abs(total - 1.0) < 1e-10);
  }
}

TEST_CASE("q-augmented joint sums to one and marginalizes to the base joint when Q is inert") {
  Rng rng(12);
  const auto spec = testing::random_spec(rng);
  const auto p = testing::random_params(spec, rng);
  const CellGeometry g(spec);
  auto sens = SensitivityParams::uniform(0.3, std::log(2.0), std::log(3.0), spec.num_partial());
  auto inert = SensitivityParams::uniform(0.3, 0.0, 0.0, spec.num_partial());
  double total = 0.0;
  double worst = 0.0;
  double worst_inert = 0.0;
  for (std::uint32_t m = 0; m < g.num_patterns(); ++m) {
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      for (auto u : kAllClasses) {
        for (int z = 0; z < 2; ++z) {
          for (int y = 0; y < 2; ++y) {
            double inert_sum = 0.0;
            for (int q = 0; q < 2; ++q) {
              const double v = cell_joint_prob(p, g, m, c, u, z, y, q, sens);
              worst = std::max(worst, std::abs(v - testing::oracle_joint(spec, p, m, g.levels_of(c), u, z, y, q, &sens)));
              total += v;
              inert_sum += cell_joint_prob(p, g, m, c, u, z, y, q, inert);
            }
            worst_inert = std::max(worst_inert, std::abs(inert_sum - cell_joint_prob(p, g, m, c, u, z, y)));
          }
        }
      }
    }
  }
  CHECK(worst < 1e-15);
  CHECK(std::abs(total - 1.0) < 1e-10);
  CHECK(worst_inert < 1e-15);
}

TEST_CASE("forward simulation reproduces the joint observed-stratum probabilities") {
  // Monte Carlo oracle: generate from the parameters and compare empirical
  // stratum frequencies with the summed joint probabilities.
  Rng rng(13);
  CovariateSpec spec{{"f", "m"}, {2, 3}, {true, false}, false};
  const auto p = testing::random_params(spec, rng, 0.6);
  const std::size_t n = 400000;
  const auto data = generate_from_params(spec, p, n, 99).records;
  const auto counts = tabulate_observed(data, spec);
  const auto& g = counts.geometry();
  std::map<std::size_t, double> expected;
  double worst_z = 0.0;
  for (std::uint32_t m = 0; m < g.num_patterns(); ++m) {
    std::vector<double> prob(counts.table(m).size(), 0.0);
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      for (auto u : kAllClasses) {
        for (int z = 0; z < 2; ++z) {
          for (int y = 0; y < 2; ++y) {
            prob[ObservedCounts::index(g.pattern_cell(m, c), treatment_for(u, z), z, y)] +=
                testing::oracle_joint(spec, p, m, g.levels_of(c), u, z, y);
          }
        }
      }
    }
    for (std::size_t i = 0; i < prob.size(); ++i) {
      const double se = std::sqrt(n * prob[i] * (1.0 - prob[i])) + 1e-12;
      worst_z = std::max(worst_z, std::abs(counts.table(m)[i] - n * prob[i]) / se);
    }
  }
  // 96 strata; a 5-sigma bound keeps the false-alarm rate negligible.
  CHECK(worst_z < 5.0);
}

TEST_CASE("exclusion restrictions hold by construction") {
  Rng rng(14);
  const auto spec = testing::random_spec(rng);
  const auto p = testing::random_params(spec, rng);
  const CellGeometry g(spec);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    const auto& x = g.design(c);
    const auto& xo = g.observed_design(g.observed_cell(c));
    for (auto u : {ComplianceClass::AlwaysTaker, ComplianceClass::NeverTaker}) {
      CHECK(prob_outcome(p, u, 0, x) == prob_outcome(p, u, 1, x));
      for (std::size_t j = 0; j < spec.num_partial(); ++j) {
        for (int y = 0; y < 2; ++y) {
          CHECK(prob_response(p, spec, j, u, 0, y, xo) == prob_response(p, spec, j, u, 1, y, xo));
        }
      }
    }
  }
  static_assert(treatment_for(ComplianceClass::NeverTaker, 1) == 0);
  static_assert(treatment_for(ComplianceClass::AlwaysTaker, 0) == 1);
  static_assert(treatment_for(ComplianceClass::Complier, 1) == 1);
  static_assert(treatment_for(ComplianceClass::Complier, 0) == 0);
}

TEST_CASE("cace and its mixture form") {
  auto p = ParamSet::zeros(single_cov_spec());
  const Eigen::VectorXd x = design_vector({0});
  CHECK(cace(p, x) == 0.0);
  // beta_c0 x = beta_c1 x = 0, xi_c1 = log 3, xi_c0 = 0, pi = 0.5 -> 0.125.
  SensitivityParams s;
  s.pi = 0.5;
  s.xi_c1 = std::log(3.0);
  CHECK(cace_with_q(p, s, x) == doctest::Approx(0.125).epsilon(1e-15));
  s.pi = 0.0;
  p.beta_c1[0] = 0.4;
  CHECK(cace_with_q(p, s, x) == cace(p, x));
  // Equal shifts with pi = 1: plain cace with both logits moved.
  s.pi = 1.0;
  s.xi_c0 = s.xi_c1 = 0.7;
  CHECK(cace_with_q(p, s, x) == doctest::Approx(testing::sigmoid(1.1) - testing::sigmoid(0.7)).epsilon(1e-15));
}

TEST_CASE("single-covariate scenario parameters") {
  const auto mcar = scenario_params(Scenario::Mcar);
  CHECK(mcar.w_u[0] == 0.2);
  CHECK(mcar.w_u[2] == 0.375);
  CHECK(mcar.w_u[1] == doctest::Approx(0.425));
  CHECK(mcar.m_u == std::array<double, 3>{0.5, 0.8, 0.25});
  CHECK(mcar.xi_x[1] == 0.4);
  CHECK(mcar.xi_x[0] == 0.6);
  CHECK(mcar.theta(1, ComplianceClass::NeverTaker, 1) == 0.5);
  CHECK(mcar.theta(0, ComplianceClass::NeverTaker, 0) == 0.3);
  CHECK(mcar.theta(1, ComplianceClass::AlwaysTaker, 1) == 0.8);
  CHECK(mcar.theta(1, ComplianceClass::AlwaysTaker, 0) == 0.7);
  CHECK(mcar.theta(1, ComplianceClass::Complier, 1) == 0.7);
  CHECK(mcar.theta(1, ComplianceClass::Complier, 0) == 0.45);
  CHECK(mcar.theta(0, ComplianceClass::Complier, 1) == 0.45);
  CHECK(mcar.theta(0, ComplianceClass::Complier, 0) == 0.3);
  CHECK(mcar.true_cace(1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(mcar.true_cace(0) == doctest::Approx(0.15).epsilon(1e-15));
  for (int y = 0; y < 2; ++y) {
    for (int z = 0; z < 2; ++z) {
      for (auto u : kAllClasses) CHECK(mcar.rho(y, z, u) == 0.88);
    }
  }
  const auto ni = scenario_params(Scenario::Nonignorable);
  CHECK(ni.rho(0, 1, ComplianceClass::AlwaysTaker) == 0.95);
  CHECK(ni.rho(1, 1, ComplianceClass::AlwaysTaker) == 1.0);
  CHECK(ni.rho(1, 1, ComplianceClass::Complier) == 0.8);
  CHECK(ni.rho(1, 0, ComplianceClass::Complier) == 0.97);
  for (auto s : {Scenario::Mcar, Scenario::Mar, Scenario::Nonignorable}) {
    CHECK(scenario_params(s).missing_rate() == doctest::Approx(0.12).epsilon(0.1));
  }
}

TEST_CASE("saturated encoding reproduces every scenario probability") {
  for (auto s : {Scenario::Mcar, Scenario::Mar, Scenario::Nonignorable}) {
    const auto sc = scenario_params(s);
    const auto spec = single_cov_spec();
    const auto p = to_param_set(sc);
    const CellGeometry g(spec);
    for (int x = 0; x < 2; ++x) {
      const auto& xd = g.design(static_cast<std::size_t>(x));
      const auto pu = prob_compliance(p, xd);
      // P(U = u | X = x) by Bayes from W and M.
      double px = 0.0;
      for (auto u : kAllClasses) {
        const auto i = static_cast<std::size_t>(index_of(u));
        px += sc.w_u[i] * (x ? sc.m_u[i] : 1.0 - sc.m_u[i]);
      }
      CHECK(p.w[static_cast<std::size_t>(x)] == doctest::Approx(px).epsilon(1e-12));
      for (auto u : kAllClasses) {
        const auto i = static_cast<std::size_t>(index_of(u));
        CHECK(pu[i] == doctest::Approx(sc.w_u[i] * (x ? sc.m_u[i] : 1.0 - sc.m_u[i]) / px).epsilon(1e-12));
        for (int z = 0; z < 2; ++z) {
          CHECK(prob_outcome(p, u, z, xd) == doctest::Approx(sc.theta(z, u, x)).epsilon(1e-12));
          for (int y = 0; y < 2; ++y) {
            CHECK(prob_response(p, spec, 0, u, z, y, g.observed_design(0)) ==
                  doctest::Approx(sc.rho(y, z, u)).epsilon(1e-12));
          }
        }
      }
      CHECK(prob_iv(p, xd) == doctest::Approx(sc.xi_x[static_cast<std::size_t>(x)]).epsilon(1e-12));
      CHECK(cace(p, xd) == doctest::Approx(sc.true_cace(x)).epsilon(1e-12));
    }
  }
}
