#include <cmath>
#include <numbers>

#include <omp.h>

#include "doctest.h"
#include "test_support.hpp"

#include "bayescv/experiments.hpp"
#include "bayescv/general_bayes.hpp"

using namespace bayescv;
using namespace bayescv::gbayes;

namespace {

DiscreteGeneralModel two_point() {
  DiscreteGeneralModel m;
  m.loss.resize(2, 2);
  m.loss << 1.0, 3.0, 2.0, 1.0;
  m.prior = Eigen::Vector2d(0.5, 0.5);
  m.w = 1.0;
  return m;
}

}  // namespace

TEST_CASE("update on the two-point example") {
  const DiscreteGeneralModel m = two_point();
  const int first[] = {0};
  const Eigen::VectorXd post = general_update(m, first);
  CHECK(post[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-14));
  CHECK(post[0] == doctest::Approx(0.731059).epsilon(1e-6));
  CHECK(post.sum() == doctest::Approx(1.0));

  const auto g = ScoringFunction::exp_neg(1.0);
  const double second = log_pred_score(post, m.loss.col(1), g);
  CHECK(second == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(std::abs(second + 2.0) < 1e-4);

  const int order[] = {0, 1};
  const double chain = prequential_score(m, order, g);
  const double oracle = std::log(0.5 * (std::exp(-4.0) + std::exp(-3.0)));
  CHECK(chain == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(std::exp(chain) == doctest::Approx(0.034052).epsilon(1e-4));
  CHECK(batch_score(m, g) == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(coherence_residual(m, g) < 1e-14);
}

TEST_CASE("inverse-shift score depends on the order") {
  const DiscreteGeneralModel m = two_point();
  const auto g = ScoringFunction::inverse_shift();
  const double pi0 = 1.0 / (1.0 + std::exp(-1.0));
  const double forward = std::log(0.5 / 2 + 0.5 / 3) + std::log(pi0 / 4 + (1 - pi0) / 2);
  const double batch = std::log(0.5 / 5 + 0.5 / 4);
  const int order[] = {0, 1};
  CHECK(prequential_score(m, order, g) == doctest::Approx(forward).epsilon(1e-13));
  CHECK(batch_score(m, g) == doctest::Approx(batch).epsilon(1e-13));
  const double residual = coherence_residual(m, g);
  CHECK(residual >= std::abs(forward - batch) - 1e-14);
  CHECK(residual == doctest::Approx(0.532).epsilon(1e-3));

  const WorkedInstance worked = worked_instance();
  CHECK(worked.posterior_first == doctest::Approx(pi0).epsilon(1e-14));
  CHECK(worked.log_second_factor == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(std::abs(worked.lhs - worked.rhs) < 1e-15);
  CHECK(worked.inverse_shift_residual == doctest::Approx(residual));
}

TEST_CASE("single observation is always coherent") {
  DiscreteGeneralModel m;
  m.loss.resize(3, 1);
  m.loss << 0.5, 2.0, 4.0;
  m.prior = Eigen::Vector3d(0.2, 0.3, 0.5);
  for (const auto& g : {ScoringFunction::inverse_shift(), ScoringFunction::power(2.0),
                        ScoringFunction::gaussian(), ScoringFunction::exp_neg(3.0)})
    CHECK(coherence_residual(m, g) == 0.0);
}

TEST_CASE("sequential updating equals batch updating") {
  DiscreteGeneralModel m;
  m.loss.resize(3, 3);
  m.loss << 0.1, 2.0, 0.3, 1.0, 0.2, 4.0, 3.0, 3.0, 0.0;
  m.prior = Eigen::Vector3d(0.5, 0.25, 0.25);
  m.w = 2.0;
  const int all[] = {0, 1, 2};
  const Eigen::VectorXd batch = general_update(m, all);
  DiscreteGeneralModel step = m;
  const int first[] = {0, 2};
  step.prior = general_update(m, first);
  const int rest[] = {1};
  const Eigen::VectorXd seq = general_update(step, rest);
  CHECK((batch - seq).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(general_update(m, {}).isApprox(m.prior));
}

TEST_CASE("grid posterior with log loss reproduces the Bayesian evidence") {
  const int m = 4001;
  DiscreteGeneralModel model;
  model.loss.resize(m, 2);
  model.prior.resize(m);
  const double h = 16.0 / (m - 1);
  for (int k = 0; k < m; ++k) {
    const double theta = -8.0 + h * k;
    model.prior[k] = std::exp(-0.5 * theta * theta) / std::sqrt(2 * std::numbers::pi) * h;
    for (int i = 0; i < 2; ++i)
      model.loss(k, i) = 0.5 * std::log(2 * std::numbers::pi) + 0.5 * theta * theta;
  }
  model.prior /= model.prior.sum();
  const auto g = ScoringFunction::exp_neg(1.0);
  const int order[] = {0, 1};
  CHECK(prequential_score(model, order, g) == doctest::Approx(testing::kJointAt00).epsilon(1e-6));
  CHECK(coherence_residual(model, g) < 1e-12);
}

TEST_CASE("scoring functions") {
  CHECK(ScoringFunction::exp_neg(2.0)(1.5) == doctest::Approx(std::exp(-3.0)));
  CHECK(ScoringFunction::inverse_shift()(3.0) == doctest::Approx(0.25));
  CHECK(ScoringFunction::power(2.0)(1.0) == doctest::Approx(0.25));
  CHECK(ScoringFunction::gaussian()(2.0) == doctest::Approx(std::exp(-4.0)));
  CHECK(ScoringFunction::exp_neg(0.0)(7.0) == 1.0);
  CHECK(ScoringFunction::inverse_shift().name() == "inverse_shift");

  const auto tab = ScoringFunction::tabulated({0.0, 1.0, 2.0}, {1.0, 0.5, 0.25});
  CHECK(tab(0.5) == doctest::Approx(0.75));
  CHECK(tab(1.5) == doctest::Approx(0.375));
  CHECK(tab(10.0) == doctest::Approx(0.25));
  const double grid[] = {0.0, 0.5, 1.0, 5.0};
  CHECK(tab.is_valid_on(grid));
  CHECK_THROWS_AS(ScoringFunction::tabulated({0.5, 1.0}, {1.0, 0.5}), ValidationError);
  CHECK_THROWS_AS(ScoringFunction::tabulated({0.0, 1.0}, {0.5, 1.0}), ValidationError);
  CHECK_THROWS_AS(ScoringFunction::tabulated({0.0, 0.0}, {1.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(ScoringFunction::exp_neg(-1.0), ValidationError);
}

TEST_CASE("model validation and degenerate posteriors") {
  DiscreteGeneralModel m = two_point();
  m.prior = Eigen::Vector2d(0.5, 0.6);
  CHECK_THROWS_AS(m.validate(), ValidationError);
  m = two_point();
  m.loss(0, 0) = -1.0;
  CHECK_THROWS_AS(m.validate(), ValidationError);
  m = two_point();
  m.w = 0.0;
  CHECK_THROWS_AS(m.validate(), ValidationError);
  m = two_point();
  const int bad[] = {0, 0};
  CHECK_THROWS_AS(prequential_score(m, bad, ScoringFunction::exp_neg(1.0)), ValidationError);
  m.w = 1e308;
  m.loss.setConstant(10.0);
  const int first[] = {0};
  CHECK_THROWS_AS(general_update_log(m, first), DegeneratePosteriorError);
}

TEST_CASE("order-invariance verdict on random instances") {
  const OrderInvarianceReport report = verify_order_invariance(60, 3);
  CHECK(report.pass);
  REQUIRE(report.families.size() >= 5);
  for (const auto& f : report.families) {
    CHECK(f.trials == 60);
    if (f.expected_coherent) CHECK(f.coherent == 60);
    else if (!f.trivial) CHECK(f.incoherent >= 57);
  }
  omp_set_num_threads(1);
  const std::string serial = verify_order_invariance(60, 3, Exec::serial).to_json().dump();
  omp_set_num_threads(4);
  CHECK(verify_order_invariance(60, 3).to_json().dump() == serial);
}
