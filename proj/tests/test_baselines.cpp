#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ivcace/baselines.hpp"
#include "ivcace/simulation.hpp"

using namespace ivcace;

namespace {

void add_records(Dataset& d, int x, int treated, int n, int events) {
  for (int i = 0; i < n; ++i) d.push_back({{x}, treated, treated, i < events ? 1 : 0});
}

bool same_records(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].x != b[i].x || a[i].z != b[i].z || a[i].d != b[i].d || a[i].y != b[i].y) return false;
  return true;
}

CovariateSpec one_full_binary() { return {{"x"}, {2}, {true}, false}; }

}  // namespace

TEST_CASE("Rubin pooling") {
  const auto one = rubin_pool({0.3}, {0.01});
  CHECK(one.estimate == 0.3);
  CHECK(one.between == 0.0);
  CHECK(one.total == doctest::Approx(0.01));
  const auto three = rubin_pool({1.0, 2.0, 3.0}, {0.1, 0.2, 0.3});
  CHECK(three.estimate == doctest::Approx(2.0));
  CHECK(three.between == doctest::Approx(1.0));
  CHECK(three.within == doctest::Approx(0.2));
  CHECK(three.total == doctest::Approx(0.2 + 4.0 / 3.0));
  CHECK(std::isnan(rubin_pool({1.0, 2.0}).total));
  CHECK_THROWS_AS(rubin_pool({}), ValidationError);
}

TEST_CASE("unadjusted difference") {
  Dataset d;
  add_records(d, 0, 1, 10, 3);
  add_records(d, 0, 0, 10, 1);
  const auto e = unadjusted_difference(d);
  CHECK(e.estimate == doctest::Approx(0.2).epsilon(1e-14));
  const double h = 1.959963984540054 * std::sqrt(0.21 / 10 + 0.09 / 10);
  CHECK(e.lower == doctest::Approx(0.2 - h).epsilon(1e-12));
  CHECK(e.upper == doctest::Approx(0.2 + h).epsilon(1e-12));
  Dataset half;
  add_records(half, 0, 1, 4, 2);
  add_records(half, 0, 0, 4, 2);
  CHECK(unadjusted_difference(half).estimate == 0.0);
  Dataset treated_only;
  add_records(treated_only, 0, 1, 4, 2);
  CHECK_THROWS_AS(unadjusted_difference(treated_only), EstimationError);
}

TEST_CASE("regression standardization on a 2x2x2 table") {
  // Risks: x=0 (0.1, 0.5), x=1 (0.25, 0.75). Both odds ratios are 9, so the
  // main-effects logistic model is exact and the standardized difference is
  // the plug-in average of the risk differences, 0.5*0.4 + 0.5*0.5.
  Dataset d;
  add_records(d, 0, 0, 20, 2);
  add_records(d, 0, 1, 20, 10);
  add_records(d, 1, 0, 20, 5);
  add_records(d, 1, 1, 20, 15);
  const auto e = regression_adjusted(d, one_full_binary(), ImputationConfig{});
  CHECK(e.estimate == doctest::Approx(0.45).epsilon(1e-9));
  CHECK(e.lower < 0.45);
  CHECK(e.upper > 0.45);

  Dataset null_effect;
  add_records(null_effect, 0, 0, 20, 4);
  add_records(null_effect, 0, 1, 20, 4);
  add_records(null_effect, 1, 0, 20, 10);
  add_records(null_effect, 1, 1, 20, 10);
  CHECK(std::abs(regression_adjusted(null_effect, one_full_binary(), ImputationConfig{}).estimate) < 1e-12);
}

TEST_CASE("propensity subclassification") {
  // Stratum A (40%): propensity 0.5, effect 0.1. Stratum B (60%): propensity
  // 2/3, effect 0.3.
  Dataset d;
  add_records(d, 0, 1, 20, 4);
  add_records(d, 0, 0, 20, 2);
  add_records(d, 1, 1, 40, 24);
  add_records(d, 1, 0, 20, 6);
  const auto e = propensity_subclassification(d, one_full_binary(), ImputationConfig{}, 5);
  CHECK(e.estimate == doctest::Approx(0.22).epsilon(1e-12));
  const double var = 0.16 * (0.2 * 0.8 / 20 + 0.1 * 0.9 / 20) + 0.36 * (0.6 * 0.4 / 40 + 0.3 * 0.7 / 20);
  CHECK(e.variance == doctest::Approx(var).epsilon(1e-12));

  const auto one = propensity_subclassification(d, one_full_binary(), ImputationConfig{}, 1);
  const auto raw = unadjusted_difference(d);
  CHECK(one.estimate == raw.estimate);
  CHECK(one.variance == raw.variance);

  // Equal treatment rates in both strata: a single effective subclass.
  Dataset flat;
  add_records(flat, 0, 1, 10, 3);
  add_records(flat, 0, 0, 10, 1);
  add_records(flat, 1, 1, 10, 6);
  add_records(flat, 1, 0, 10, 2);
  CHECK(propensity_subclassification(flat, one_full_binary(), ImputationConfig{}, 5).estimate ==
        unadjusted_difference(flat).estimate);

  Dataset lopsided;
  add_records(lopsided, 0, 1, 10, 3);
  add_records(lopsided, 1, 0, 10, 3);
  CHECK_THROWS_AS(propensity_subclassification(lopsided, one_full_binary(), ImputationConfig{}, 2),
                  EstimationError);
}

TEST_CASE("chained imputation fills only the holes") {
  const auto data = generate(scenario_params(Scenario::Mar), 3000, 4).records;
  const auto spec = single_cov_spec();
  ImputationConfig ic;
  ic.n_imputations = 3;
  ic.n_cycles = 2;
  const auto sets = impute_chained(data, spec, ic);
  REQUIRE(sets.size() == 3);
  for (const auto& s : sets) {
    REQUIRE(s.size() == data.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (data[i].x[0] != kMissing) CHECK(s[i].x[0] == data[i].x[0]);
      CHECK((s[i].x[0] == 0 || s[i].x[0] == 1));
      CHECK(s[i].y == data[i].y);
    }
  }
  CHECK(same_records(impute_chained(data, spec, ic)[2], sets[2]));
  Dataset never{{{kMissing}, 1, 1, 0}, {{kMissing}, 0, 0, 1}};
  CHECK_THROWS_AS(impute_chained(never, spec, ic), ValidationError);
  ImputationConfig bad;
  bad.n_cycles = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("zero missingness: imputation reduces to the plain fit") {
  auto data = generate(scenario_params(Scenario::Mcar), 2000, 6).records;
  data.erase(std::remove_if(data.begin(), data.end(), [](const Record& r) { return r.x[0] == kMissing; }), data.end());
  const auto spec = single_cov_spec();
  const std::vector<EstimandTarget> t{EstimandTarget::cell_cace({1})};
  const auto mi = mar_impute_fit(data, spec, FitConfig{}, ImputationConfig{}, t);
  const auto direct = fit_em(data, spec, FitConfig{});
  CHECK(mi.fits.size() == 1);
  CHECK(mi.pooled[0].estimate == evaluate_target(direct, t[0]));
  CHECK(mi.pooled[0].between == 0.0);
  const auto cc = complete_case_fit(data, spec, FitConfig{});
  CHECK(evaluate_target(cc, t[0]) == evaluate_target(direct, t[0]));
}

TEST_CASE("complete-case fit needs complete records") {
  Dataset d{{{kMissing}, 1, 1, 0}, {{kMissing}, 0, 0, 1}};
  CHECK_THROWS_AS(complete_case_fit(d, single_cov_spec(), FitConfig{}), EstimationError);
}

TEST_CASE("normal critical values") {
  CHECK(normal_critical_value(0.95) == doctest::Approx(1.959963984540054).epsilon(1e-14));
  CHECK(normal_critical_value(0.9) == doctest::Approx(1.6448536269514722).epsilon(1e-14));
  CHECK_THROWS_AS(normal_critical_value(1.0), ValidationError);
}
