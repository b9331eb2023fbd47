#include <doctest.h>

#include <cmath>

#include "estep_oracle.hpp"
#include "ivcace/sensitivity.hpp"
#include "ivcace/simulation.hpp"
#include "support.hpp"

using namespace ivcace;

TEST_CASE("shifted interval keeps the base half-widths") {
  const auto [lo, hi] = shifted_ci(-0.296, -0.429, -0.137, -0.289);
  CHECK(std::abs(lo - (-0.422)) < 1e-12);
  CHECK(std::abs(hi - (-0.130)) < 1e-12);
  const auto same = shifted_ci(0.2, 0.1, 0.35, 0.2);
  CHECK(same.first == 0.1);
  CHECK(same.second == 0.35);
  const auto sym = shifted_ci(0.0, -1.0, 1.0, 0.5);
  CHECK(sym.first == doctest::Approx(-0.5));
  CHECK(sym.second == doctest::Approx(1.5));
  CHECK_THROWS_AS(shifted_ci(0.5, 0.6, 0.9, 0.0), ValidationError);
  CHECK_THROWS_AS(shifted_ci(0.5, 0.1, 0.4, 0.0), ValidationError);
}

TEST_CASE("E-step with the latent factor equals brute force") {
  Rng rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    const auto spec = testing::random_spec(rng);
    const auto p = testing::random_params(spec, rng);
    const auto sens = SensitivityParams::uniform(rng.uniform(), rng.uniform(-1.5, 1.5),
                                                 rng.uniform(-1.5, 1.5), spec.num_partial());
    const auto counts = tabulate_observed(generate_from_params(spec, p, 70, 300 + rep, &sens).records, spec);
    const auto r = testing::compare_e_step(counts, p, &sens);
    CHECK(r.worst_posterior < 1e-12);
    CHECK(r.worst_conservation < 1e-9);
  }
}

TEST_CASE("EM with the latent factor is monotone") {
  Rng rng(42);
  FitConfig cfg;
  cfg.n_restarts = 1;
  cfg.max_em_iters = 200;
  for (int rep = 0; rep < 20; ++rep) {
    const auto spec = testing::random_spec(rng);
    const auto p = testing::random_params(spec, rng);
    const auto sens = SensitivityParams::uniform(0.3, 1.0, -0.7, spec.num_partial());
    const auto data = generate_from_params(spec, p, 400, 500 + rep).records;
    cfg.init_seed = 900 + rep;
    const auto fit = fit_with_q(data, spec, sens, cfg);
    for (std::size_t t = 1; t < fit.loglik_trace.size(); ++t) {
      const double prev = fit.loglik_trace[t - 1];
      CHECK(fit.loglik_trace[t] >= prev - 1e-10 * std::abs(prev));
    }
  }
}

TEST_CASE("degenerate latent factor reproduces the base fit") {
  const auto data = generate(scenario_params(Scenario::Nonignorable), 3000, 8).records;
  const auto spec = single_cov_spec();
  FitConfig cfg;
  const auto base = fit_em(data, spec, cfg);
  const Cell x0{0}, x1{1};
  for (const auto& sens : {SensitivityParams::uniform(0.0, 1.1, 1.1, 1),
                           SensitivityParams::uniform(0.5, 0.0, 0.0, 1)}) {
    const auto q = fit_with_q(data, spec, sens, cfg);
    CHECK(std::abs(q.loglik() - base.loglik()) < 1e-8 * std::abs(base.loglik()));
    for (const auto& c : {x0, x1}) {
      const auto t = EstimandTarget::cell_cace(c);
      CHECK(std::abs(evaluate_target(q, t) - evaluate_target(base, t)) < 1e-6);
    }
  }
}

TEST_CASE("relabelling Q leaves the likelihood and the effect unchanged") {
  Rng rng(43);
  for (int rep = 0; rep < 10; ++rep) {
    const auto spec = testing::random_spec(rng);
    const auto p = testing::random_params(spec, rng);
    const auto counts = tabulate_observed(generate_from_params(spec, p, 200, 700 + rep).records, spec);
    SensitivityParams s;
    s.pi = rng.uniform(0.05, 0.95);
    s.xi_c0 = rng.uniform(-1, 1);
    s.xi_c1 = rng.uniform(-1, 1);
    s.xi_a = rng.uniform(-1, 1);
    s.xi_n = rng.uniform(-1, 1);
    for (std::size_t j = 0; j < spec.num_partial(); ++j)
      s.kappa.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});

    // Q' = 1 - Q: the old Q = 1 shifts move into the base coefficients.
    auto p2 = p;
    SensitivityParams s2;
    s2.pi = 1.0 - s.pi;
    s2.xi_c0 = -s.xi_c0;
    s2.xi_c1 = -s.xi_c1;
    s2.xi_a = -s.xi_a;
    s2.xi_n = -s.xi_n;
    p2.beta_c0[0] += s.xi_c0;
    p2.beta_c1[0] += s.xi_c1;
    p2.beta_a[0] += s.xi_a;
    p2.beta_n[0] += s.xi_n;
    for (std::size_t j = 0; j < spec.num_partial(); ++j) {
      std::array<double, 3> k{};
      for (int u = 0; u < 3; ++u) {
        k[u] = -s.kappa[j][u];
        p2.response[j].theta[u][0] += s.kappa[j][u];
      }
      s2.kappa.push_back(k);
    }
    const double l1 = observed_loglik(p, counts, &s);
    const double l2 = observed_loglik(p2, counts, &s2);
    CHECK(std::abs(l1 - l2) < 1e-9 * std::abs(l1));
    const CellGeometry g(spec);
    for (std::size_t c = 0; c < g.num_cells(); ++c)
      CHECK(std::abs(cace_with_q(p, s, g.design(c)) - cace_with_q(p2, s2, g.design(c))) < 1e-12);
  }
}

TEST_CASE("grid enumeration") {
  SensitivityGrid grid;
  grid.cells = {{0}};
  const auto pts = grid_points(grid);
  CHECK(pts.size() == 24);
  CHECK(pts.front().pi == 0.1);
  CHECK(pts.back().pi == 0.9);
  for (const auto& p : pts) {
    const double a = std::abs(std::log(p.outcome_odds_ratio));
    const double b = std::abs(std::log(p.response_odds_ratio));
    CHECK(a == doctest::Approx(b));
  }
  grid.pair_by_magnitude = false;
  CHECK(grid_points(grid).size() == 48);
  SensitivityGrid bad;
  CHECK_THROWS_AS(bad.validate(), ValidationError);  // no cells
  bad.cells = {{0}};
  bad.pi_values = {1.5};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.pi_values = {0.5};
  bad.outcome_odds_ratios = {0.0};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("grid rows use the shifted interval and flag sign flips") {
  const auto data = generate(scenario_params(Scenario::Nonignorable), 2000, 12).records;
  const auto spec = single_cov_spec();
  FitConfig cfg;
  cfg.n_restarts = 2;
  const auto base = fit_em(data, spec, cfg);
  SensitivityGrid grid;
  grid.cells = {{0}, {1}};
  grid.pi_values = {0.5};
  grid.outcome_odds_ratios = {3.0, 1.0 / 3.0};
  grid.response_odds_ratios = {3.0};

  for (double half : {0.01, 1.0}) {
    CaceReport br;
    for (const auto& c : grid.cells) {
      const auto t = EstimandTarget::cell_cace(c);
      const double a = evaluate_target(base, t);
      br.rows.push_back({t, a, 0.0, a - half, a + half});
    }
    const auto rep = sensitivity_grid(data, spec, grid, cfg, base, br);
    REQUIRE(rep.rows.size() == 4);
    CHECK(rep.n_failed_points == 0);
    for (const auto& row : rep.rows) {
      REQUIRE(row.ok);
      const auto* b = br.find(EstimandTarget::cell_cace(row.cell));
      const auto [lo, hi] = shifted_ci(b->estimate, b->lower, b->upper, row.estimate);
      CHECK(row.ci_low == lo);
      CHECK(row.ci_high == hi);
      const bool base_excludes = b->lower > 0.0 || b->upper < 0.0;
      CHECK(row.flip == (base_excludes && lo <= 0.0 && hi >= 0.0));
      if (half == 1.0) CHECK_FALSE(row.flip);
    }
  }
}
