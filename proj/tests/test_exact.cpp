#include <algorithm>
#include <cmath>
#include <sstream>

#include <omp.h>

#include "doctest.h"
#include "test_support.hpp"

#include "bayescv/exact_scorer.hpp"

using namespace bayescv;
using namespace bayescv::exact;

TEST_CASE("leave-p-out scores on the scalar example") {
  const auto model = testing::scalar_model({0.0, 0.0});
  CHECK(leave_p_out_score(model, 1) == doctest::Approx(testing::kPredictiveGiven0).epsilon(1e-13));
  CHECK(leave_p_out_score(model, 2) == doctest::Approx(testing::kPriorPredictiveAt0).epsilon(1e-13));
  const auto single = testing::scalar_model({0.0});
  CHECK(leave_p_out_score(single, 1) == doctest::Approx(testing::kPriorPredictiveAt0).epsilon(1e-13));
  CHECK_THROWS_AS(leave_p_out_score(model, 3), ValidationError);
  CHECK_THROWS_AS(leave_p_out_score(testing::polynomial_model(30, 1, 1.0, 1), 15),
                  EnumerationCapError);
}

TEST_CASE("decomposition of the scalar example") {
  const ScoreDecomposition d = decompose_marginal(testing::scalar_model({0.0, 0.0}));
  CHECK(d.per_p.at(1) == doctest::Approx(testing::kPredictiveGiven0).epsilon(1e-13));
  CHECK(d.per_p.at(2) == doctest::Approx(testing::kPriorPredictiveAt0).epsilon(1e-13));
  CHECK(d.log_marginal == doctest::Approx(testing::kJointAt00).epsilon(1e-13));
  CHECK(std::abs(d.sum_per_p() - d.log_marginal) < 1e-12);

  const ScoreDecomposition one = decompose_marginal(testing::scalar_model({0.0}));
  CHECK(one.per_p.size() == 1);
  CHECK(one.per_p.at(1) == doctest::Approx(testing::kPriorPredictiveAt0).epsilon(1e-13));
  CHECK(one.ccv.empty());
}

TEST_CASE("decomposition identity on polynomial data") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto model = testing::polynomial_model(8, 1, 1.0, seed);
    const ScoreDecomposition d = decompose_marginal(model);
    CHECK(d.max_residual() < 1e-8);
    std::vector<double> direct;
    for (int p = 1; p <= 8; ++p) {
      direct.push_back(leave_p_out_score(model, p));
      CHECK(std::abs(direct.back() - d.per_p.at(p)) < 1e-10);
    }
    CHECK(std::abs(pairwise_sum(direct) - d.log_marginal) < 1e-8);
    for (int P = 1; P < 8; ++P) CHECK(std::abs(d.ccv.at(P) + d.pcv.at(P) - d.log_marginal) < 1e-8);
  }
}

TEST_CASE("preparatory and cumulative scores, both forms") {
  const auto scalar = testing::scalar_model({0.0, 0.0});
  const TwoFormScore pcv = preparatory_score(scalar, 1);
  CHECK(pcv.value == doctest::Approx(testing::kPriorPredictiveAt0).epsilon(1e-13));
  CHECK(pcv.alternate == doctest::Approx(testing::kPriorPredictiveAt0).epsilon(1e-13));
  const TwoFormScore ccv = cumulative_score_exact(scalar, 1);
  CHECK(ccv.value == doctest::Approx(testing::kPredictiveGiven0).epsilon(1e-13));
  CHECK(ccv.alternate == doctest::Approx(testing::kPredictiveGiven0).epsilon(1e-13));

  const auto model8 = testing::polynomial_model(8, 2, 1e4, 21);
  const double lm = model8.log_marginal(testing::all_rows(8));
  for (int P = 1; P < 8; ++P) {
    const TwoFormScore a = preparatory_score(model8, P);
    const TwoFormScore b = cumulative_score_exact(model8, P);
    CHECK(a.residual < 1e-8);
    CHECK(b.residual < 1e-8);
    CHECK(std::abs(a.value + b.value - lm) < 1e-8);
  }
  for (int r = 0; r <= 2; ++r)
    CHECK(cumulative_score_exact(testing::polynomial_model(10, r, 0.1, 40), 5).residual < 1e-8);
  CHECK_THROWS_AS(preparatory_score(model8, 8), ValidationError);
  CHECK_THROWS_AS(cumulative_score_exact(model8, 0), ValidationError);
}

TEST_CASE("a perturbed pointwise predictive breaks the direct identity") {
  struct Shifted final : ExactPredictiveModel {
    const ExactPredictiveModel& inner;
    explicit Shifted(const ExactPredictiveModel& m) : inner(m) {}
    int size() const override { return inner.size(); }
    double log_marginal(std::span<const int> s) const override { return inner.log_marginal(s); }
    double log_block_predictive(std::span<const int> a, std::span<const int> b) const override {
      return inner.log_block_predictive(a, b);
    }
    double sum_pointwise_log_predictive(std::span<const int> a,
                                        std::span<const int> b) const override {
      return inner.sum_pointwise_log_predictive(a, b) + 1e-6;
    }
  };
  const auto model = testing::polynomial_model(6, 1, 1.0, 2);
  const Shifted bad(model);
  double total = 0.0;
  for (int p = 1; p <= 6; ++p) total += leave_p_out_score(bad, p);
  CHECK(std::abs(total - model.log_marginal(testing::all_rows(6))) > 1e-7);
  CHECK(cumulative_score_exact(bad, 3).residual > 1e-7);
}

TEST_CASE("decomposition is invariant to row permutation") {
  conjlinear::SimulationSpec sim;
  sim.n = 9;
  const auto data = conjlinear::simulate_polynomial(sim, 77);
  conjlinear::PolynomialSpec spec;
  spec.degree = 2;
  const conjlinear::ConjugateLinearModel model(data.x, data.y, spec);
  std::vector<int> perm = testing::all_rows(9);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[1], perm[5]);
  std::vector<double> x2;
  Eigen::VectorXd y2(9);
  for (int i = 0; i < 9; ++i) {
    x2.push_back(data.x[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
    y2[i] = data.y[perm[static_cast<std::size_t>(i)]];
  }
  const conjlinear::ConjugateLinearModel permuted(x2, y2, spec);
  const ScoreDecomposition a = decompose_marginal(model);
  const ScoreDecomposition b = decompose_marginal(permuted);
  for (int p = 1; p <= 9; ++p) CHECK(std::abs(a.per_p.at(p) - b.per_p.at(p)) < 1e-8);
}

TEST_CASE("serial and parallel kernels are bit-identical") {
  const auto model = testing::polynomial_model(12, 2, 1.0, 8);
  omp_set_num_threads(4);
  const ScoreDecomposition s = decompose_marginal(model, Exec::serial);
  const ScoreDecomposition p = decompose_marginal(model, Exec::parallel);
  CHECK(s.per_p == p.per_p);
  CHECK(leave_p_out_score(model, 5, Exec::serial) == leave_p_out_score(model, 5, Exec::parallel));
}

TEST_CASE("decomposition refuses large n") {
  CHECK_THROWS_AS(decompose_marginal(testing::polynomial_model(21, 0, 1.0, 1)), EnumerationCapError);
}

TEST_CASE("prep curve shape and output formats") {
  const PrepCurve c10 = prep_curve(testing::polynomial_model(10, 1, 1.0, 4));
  CHECK(c10.rows.size() == 9);
  for (const auto& row : c10.rows) {
    CHECK(std::isfinite(row.s_cv));
    CHECK(std::isfinite(row.s_ccv_normalized));
    CHECK(row.n_minus_p == 10 - row.p);
  }
  const PrepCurve c2 = prep_curve(testing::scalar_model({0.0, 0.0}));
  REQUIRE(c2.rows.size() == 1);
  CHECK(c2.rows[0].p == 1);
  CHECK(c2.rows[0].s_cv == doctest::Approx(testing::kPredictiveGiven0).epsilon(1e-13));
  CHECK(c2.rows[0].s_ccv_normalized == doctest::Approx(2 * testing::kPredictiveGiven0).epsilon(1e-13));

  std::ostringstream csv;
  write_prep_curve_csv(csv, c2);
  CHECK(csv.str() == "p,n_minus_p,s_cv,s_ccv_normalized\n1,1,-1.12167,-2.24334\n");

  const nlohmann::json j = to_json(decompose_marginal(testing::scalar_model({0.0, 0.0})));
  CHECK(j["per_p"].size() == 2);
  CHECK(j["per_p"][0]["p"] == 1);
  CHECK(j["ccv"][0]["P"] == 1);
  CHECK(j["log_marginal"].get<double>() == doctest::Approx(testing::kJointAt00));
}
