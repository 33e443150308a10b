#include <cmath>
#include <limits>

#include <omp.h>

#include "doctest.h"
#include "test_support.hpp"

#include "bayescv/exact_scorer.hpp"
#include "bayescv/mc_scorer.hpp"

using namespace bayescv;
using namespace bayescv::mc;

namespace {

McOptions options(int splits, std::uint64_t seed) {
  McOptions o;
  o.splits = splits;
  o.seed = seed;
  return o;
}

/// Block predictive is -inf whenever row 0 is in the test set.
struct PoisonedModel final : ExactPredictiveModel {
  const ExactPredictiveModel& inner;
  explicit PoisonedModel(const ExactPredictiveModel& m) : inner(m) {}
  int size() const override { return inner.size(); }
  double log_marginal(std::span<const int> s) const override { return inner.log_marginal(s); }
  double log_block_predictive(std::span<const int> train,
                              std::span<const int> test) const override {
    for (int j : test)
      if (j == 0) return -std::numeric_limits<double>::infinity();
    return inner.log_block_predictive(train, test);
  }
};

}  // namespace

TEST_CASE("aggregation rules") {
  CHECK(aggregate({1.0, 2.0, 6.0}, {}) == doctest::Approx(3.0));
  CHECK(aggregate({1.0, 2.0, 100.0}, {AggregationKind::median}) == 2.0);
  CHECK(aggregate({4.0, 1.0, 3.0, 2.0}, {AggregationKind::median}) == 2.5);
  std::vector<double> v(20, 1.0);
  v[0] = -1e6;
  v[19] = 1e6;
  CHECK(aggregate(v, {AggregationKind::trimmed, 0.05}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(aggregate({}, {}), ValidationError);

  CHECK(Aggregation::parse("mean") == Aggregation{});
  CHECK(Aggregation::parse("median").kind == AggregationKind::median);
  const Aggregation t = Aggregation::parse("trimmed(0.1)");
  CHECK(t.kind == AggregationKind::trimmed);
  CHECK(t.trim == doctest::Approx(0.1));
  CHECK(Aggregation::parse("trimmed").name() == "trimmed(0.05)");
  CHECK_THROWS_AS(Aggregation::parse("mode"), ValidationError);
}

TEST_CASE("exact-inner estimator on the two-point scalar example") {
  const auto model = testing::scalar_model({0.0, 0.0});
  const McEstimate e = estimate_ccv_exact_inner(model, 1, options(50, 3));
  CHECK(e.value == doctest::Approx(testing::kPredictiveGiven0).epsilon(1e-13));
  CHECK(e.split_sd < 1e-12);
  CHECK_THROWS_AS(estimate_ccv_exact_inner(model, 2, options(10, 0)), ValidationError);
  CHECK_THROWS_AS(estimate_ccv_exact_inner(model, 1, options(0, 0)), ValidationError);
}

TEST_CASE("exact-inner estimator is unbiased for S_CCV") {
  const auto model = testing::polynomial_model(8, 1, 1.0, 12);
  const double exact = exact::cumulative_score_exact(model, 4).value;
  const McEstimate e = repeat_runs(
      [&](std::uint64_t s) { return estimate_ccv_exact_inner(model, 4, options(2000, s)); }, 10,
      5);
  REQUIRE(e.std_error.has_value());
  CHECK(*e.std_error > 0.0);
  CHECK(std::abs(e.value - exact) < 3.0 * *e.std_error + 1e-12);
}

TEST_CASE("mixed-p estimator targets the cumulative sum") {
  const auto model = testing::polynomial_model(8, 2, 1.0, 13);
  const double exact = exact::cumulative_score_exact(model, 4).value;
  const McEstimate e = repeat_runs(
      [&](std::uint64_t s) { return estimate_ccv_mixed_p(model, 4, options(4000, s)); }, 10, 6);
  CHECK(std::abs(e.value - exact) < 3.0 * *e.std_error);
}

TEST_CASE("subsampled leave-p-out score") {
  const auto model = testing::polynomial_model(9, 1, 1.0, 14);
  const double exact = exact::leave_p_out_score(model, 3);
  const McEstimate e = repeat_runs(
      [&](std::uint64_t s) { return estimate_scv(model, 3, options(2000, s)); }, 10, 7);
  CHECK(std::abs(e.value - exact) < 3.0 * *e.std_error);
}

TEST_CASE("sampled estimator approaches the exact inner term for large B") {
  const auto model = testing::polynomial_model(10, 1, 1.0, 15);
  const McOptions o = options(10, 8);
  const McEstimate exact_inner = estimate_ccv_exact_inner(model, 5, o);
  const McEstimate sampled = estimate_ccv_sampled(model, 5, 20000, o);
  CHECK(sampled.draws == 20000);
  CHECK(std::abs(sampled.value - exact_inner.value) < 0.01);
  CHECK_THROWS_AS(estimate_ccv_sampled(model, 5, 1, o), ValidationError);
}

TEST_CASE("degenerate splits") {
  const auto base = testing::polynomial_model(6, 0, 1.0, 16);
  const PoisonedModel model(base);
  CHECK_THROWS_AS(estimate_ccv_exact_inner(model, 3, options(200, 1)), NumericalError);

  McOptions median = options(200, 1);
  median.aggregation = {AggregationKind::median};
  const McEstimate m = estimate_ccv_exact_inner(model, 1, median);
  CHECK(std::isfinite(m.value));
  CHECK(m.degenerate_splits > 0);

  McOptions floored = options(200, 1);
  floored.floor = -1e6;
  const McEstimate f = estimate_ccv_exact_inner(model, 3, floored);
  CHECK(std::isfinite(f.value));
  CHECK(f.value < -1e4);
}

TEST_CASE("robust aggregation tolerates one huge negative split") {
  const auto model = testing::polynomial_model(10, 1, 1.0, 17);
  McOptions o = options(100, 2);
  const std::function<double(const Split&, std::uint64_t)> inner =
      [&](const Split& s, std::uint64_t seed) {
        const double v = model.log_block_predictive(s.train, s.test);
        return derive_seed(seed, 0) % 100 == 0 ? -1e6 : v;
      };
  o.aggregation = {AggregationKind::median};
  CHECK(estimate_split_average(10, 5, o, inner).value > -100.0);
  o.aggregation = {AggregationKind::trimmed, 0.05};
  CHECK(estimate_split_average(10, 5, o, inner).value > -100.0);
}

TEST_CASE("repeat_runs") {
  const McEstimate constant = repeat_runs(
      [](std::uint64_t) {
        McEstimate e;
        e.value = 1.5;
        return e;
      },
      5, 0);
  CHECK(constant.value == 1.5);
  CHECK(*constant.std_error == 0.0);
  CHECK(constant.per_run.size() == 5);
  CHECK_THROWS_AS(repeat_runs([](std::uint64_t) { return McEstimate{}; }, 1, 0), ValidationError);
}

TEST_CASE("Monte Carlo kernels are deterministic across thread counts") {
  const auto model = testing::polynomial_model(30, 2, 1.0, 18);
  McOptions serial = options(500, 9);
  serial.exec = Exec::serial;
  const double a = estimate_ccv_exact_inner(model, 15, serial).value;
  const double c = estimate_ccv_mixed_p(model, 15, serial).value;
  for (int threads : {1, 2, 4}) {
    omp_set_num_threads(threads);
    const McOptions par = options(500, 9);
    CHECK(estimate_ccv_exact_inner(model, 15, par).value == a);
    CHECK(estimate_ccv_mixed_p(model, 15, par).value == c);
  }
}

TEST_CASE("Monte Carlo prep curve matches the exact curve where enumerable") {
  const auto model = testing::polynomial_model(8, 1, 1.0, 19);
  const exact::PrepCurve exact = exact::prep_curve(model);
  const exact::PrepCurve mc = estimate_prep_curve(model, options(1000, 4));
  REQUIRE(mc.rows.size() == exact.rows.size());
  for (std::size_t i = 0; i < mc.rows.size(); ++i)
    CHECK(std::abs(mc.rows[i].s_cv - exact.rows[i].s_cv) < 1e-10);
}

TEST_CASE("estimate JSON") {
  const auto model = testing::scalar_model({0.0, 0.0});
  const nlohmann::json j = estimate_ccv_exact_inner(model, 1, options(5, 1)).to_json();
  CHECK(j["T"] == 5);
  CHECK(j["aggregation"] == "mean");
  CHECK(j["degenerate_splits"] == 0);
}
