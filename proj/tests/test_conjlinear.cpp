#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "test_support.hpp"

using namespace bayescv;
using namespace bayescv::conjlinear;

namespace {

GaussianBelief unit_prior() { return {Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)}; }
Eigen::MatrixXd ones(Eigen::Index n) { return Eigen::MatrixXd::Ones(n, 1); }

}  // namespace

TEST_CASE("build_design rows") {
  const double x2[] = {2.0};
  CHECK(build_design(x2, 2) == (Eigen::MatrixXd(1, 3) << 1, 2, 4).finished());
  const double x0[] = {0.0};
  CHECK(build_design(x0, 4) == (Eigen::MatrixXd(1, 5) << 1, 0, 0, 0, 0).finished());
  const double xm[] = {-1.0};
  CHECK(build_design(xm, 3) == (Eigen::MatrixXd(1, 4) << 1, -1, 1, -1).finished());
  const double xs[] = {1.5, -0.5};
  CHECK(build_design(xs, 0) == Eigen::MatrixXd::Ones(2, 1));
}

TEST_CASE("scalar conjugate posterior") {
  const GaussianBelief post = posterior_update(unit_prior(), ones(1), Eigen::VectorXd::Zero(1), 1.0);
  CHECK(post.mean[0] == doctest::Approx(0.0));
  CHECK(post.cov(0, 0) == doctest::Approx(0.5).epsilon(1e-14));

  const GaussianBelief same = posterior_update(unit_prior(), Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), 1.0);
  CHECK(same.mean == unit_prior().mean);
  CHECK(same.cov == unit_prior().cov);
}

TEST_CASE("sequential and joint updates agree") {
  const GaussianBelief joint =
      posterior_update(unit_prior(), ones(2), Eigen::Vector2d(1.0, -1.0), 1.0);
  const GaussianBelief first = posterior_update(unit_prior(), ones(1), Eigen::VectorXd::Constant(1, 1.0), 1.0);
  const GaussianBelief second = posterior_update(first, ones(1), Eigen::VectorXd::Constant(1, -1.0), 1.0);
  CHECK(std::abs(joint.mean[0] - second.mean[0]) < 1e-12);
  CHECK(std::abs(joint.cov(0, 0) - second.cov(0, 0)) < 1e-12);

  const auto model = testing::polynomial_model(9, 2, 1e4, 7);
  const Eigen::MatrixXd& X = model.design();
  const Eigen::VectorXd& y = model.response();
  const GaussianBelief all = posterior_update(model.prior(), X, y, 1.0);
  const GaussianBelief a = posterior_update(model.prior(), X.topRows(4), y.head(4), 1.0);
  const GaussianBelief b = posterior_update(a, X.bottomRows(5), y.tail(5), 1.0);
  CHECK((all.mean - b.mean).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((all.cov - b.cov).cwiseAbs().maxCoeff() < 1e-10 * all.cov.cwiseAbs().maxCoeff());
}

TEST_CASE("scalar log marginal and predictive oracles") {
  CHECK(log_marginal(unit_prior(), ones(1), Eigen::VectorXd::Zero(1), 1.0) ==
        doctest::Approx(testing::kPriorPredictiveAt0).epsilon(1e-14));
  CHECK(log_marginal(unit_prior(), ones(2), Eigen::VectorXd::Zero(2), 1.0) ==
        doctest::Approx(testing::kJointAt00).epsilon(1e-14));
  CHECK(log_marginal(unit_prior(), Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), 1.0) == 0.0);

  const GaussianBelief post = posterior_update(unit_prior(), ones(1), Eigen::VectorXd::Zero(1), 1.0);
  const double pred = log_posterior_predictive_block(post, ones(1), Eigen::VectorXd::Zero(1), 1.0);
  CHECK(pred == doctest::Approx(testing::kPredictiveGiven0).epsilon(1e-14));
  CHECK(std::abs(testing::kPriorPredictiveAt0 + pred - testing::kJointAt00) < 1e-14);
  CHECK_THROWS_AS(log_posterior_predictive_block(post, Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), 1.0),
                  ValidationError);
}

TEST_CASE("block predictive equals chained single-point predictives") {
  const auto model = testing::polynomial_model(10, 2, 1.0, 11);
  const Eigen::MatrixXd& X = model.design();
  const Eigen::VectorXd& y = model.response();
  const GaussianBelief post = posterior_update(model.prior(), X.topRows(6), y.head(6), 1.0);
  const double block = log_posterior_predictive_block(post, X.bottomRows(4), y.tail(4), 1.0);
  double chained = 0.0;
  GaussianBelief cur = post;
  for (Eigen::Index i = 6; i < 10; ++i) {
    chained += log_posterior_predictive_block(cur, X.row(i), y.segment(i, 1), 1.0);
    cur = posterior_update(cur, X.row(i), y.segment(i, 1), 1.0);
  }
  CHECK(std::abs(block - chained) < 1e-10);
}

TEST_CASE("telescoped log marginal is permutation invariant") {
  for (int r = 0; r <= 2; ++r) {
    const auto model = testing::polynomial_model(10, r, 1e4, 100 + static_cast<std::uint64_t>(r));
    const double lm = model.log_marginal(testing::all_rows(10));
    Rng rng(static_cast<std::uint64_t>(r));
    IndexSet order = testing::all_rows(10);
    for (int perm = 0; perm < 20; ++perm) {
      std::shuffle(order.begin(), order.end(), rng.engine());
      double total = 0.0;
      GaussianBelief cur = model.prior();
      for (int i : order) {
        const Eigen::MatrixXd row = model.design().row(i);
        const Eigen::VectorXd yi = model.response().segment(i, 1);
        total += log_posterior_predictive_block(cur, row, yi, 1.0);
        cur = posterior_update(cur, row, yi, 1.0);
      }
      CHECK(std::abs(total - lm) < 1e-8);
    }
  }
}

TEST_CASE("parameter-space kernel agrees with the data-space reference") {
  for (double s2 : {0.1, 1.0, 1e4}) {
    for (int r = 0; r <= 3; ++r) {
      const auto model = testing::polynomial_model(12, r, s2, 5);
      const Eigen::MatrixXd& X = model.design();
      const Eigen::VectorXd& y = model.response();
      const IndexSet all = testing::all_rows(12);
      CHECK(std::abs(model.log_marginal(all) - log_marginal(model.prior(), X, y, 1.0)) < 1e-9);

      const IndexSet train{0, 2, 3, 7, 8, 11}, test{1, 4, 5, 6, 9, 10};
      const Eigen::MatrixXd Xtr = model.stats(train).xtx;  // touch stats API
      CHECK(Xtr.rows() == r + 1);
      Eigen::MatrixXd Xa(6, r + 1), Xb(6, r + 1);
      Eigen::VectorXd ya(6), yb(6);
      for (int k = 0; k < 6; ++k) {
        Xa.row(k) = X.row(train[k]);
        ya[k] = y[train[k]];
        Xb.row(k) = X.row(test[k]);
        yb[k] = y[test[k]];
      }
      const GaussianBelief post = posterior_update(model.prior(), Xa, ya, 1.0);
      CHECK(std::abs(model.log_block_predictive(train, test) -
                     log_posterior_predictive_block(post, Xb, yb, 1.0)) < 1e-9);
      double pointwise = 0.0;
      for (int k = 0; k < 6; ++k)
        pointwise += log_posterior_predictive_block(post, Xb.row(k), yb.segment(k, 1), 1.0);
      CHECK(std::abs(model.sum_pointwise_log_predictive(train, test) - pointwise) < 1e-9);

      const GaussianBelief kpost = model.kernel().posterior(model.stats(train));
      CHECK((kpost.mean - post.mean).cwiseAbs().maxCoeff() < 1e-7 * (1.0 + post.mean.cwiseAbs().maxCoeff()));
      CHECK((kpost.cov - post.cov).cwiseAbs().maxCoeff() < 1e-7 * (1.0 + post.cov.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("empty training set gives the prior predictive") {
  const auto model = testing::polynomial_model(6, 1, 1.0, 3);
  const IndexSet test{1, 4};
  CHECK(std::abs(model.log_block_predictive({}, test) - model.log_marginal(test)) < 1e-12);
  CHECK(model.log_marginal({}) == 0.0);
}

TEST_CASE("posterior draws match the conjugate posterior") {
  const auto model = testing::polynomial_model(20, 1, 1.0, 9);
  const IndexSet train{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const Eigen::MatrixXd draws = model.posterior_sample(train, 40000, 1);
  const GaussianBelief post = model.kernel().posterior(model.stats(train));
  const Eigen::VectorXd mean = draws.rowwise().mean();
  const Eigen::MatrixXd centred = draws.colwise() - mean;
  const Eigen::MatrixXd cov = centred * centred.transpose() / (draws.cols() - 1.0);
  for (Eigen::Index k = 0; k < 2; ++k) {
    const double sd = std::sqrt(post.cov(k, k));
    CHECK(std::abs(mean[k] - post.mean[k]) < 5.0 * sd / std::sqrt(40000.0));
    CHECK(std::abs(std::sqrt(cov(k, k)) / sd - 1.0) < 0.03);
  }
  CHECK(model.posterior_sample(train, 5, 2) == model.posterior_sample(train, 5, 2));

  const Eigen::VectorXd theta = Eigen::Vector2d(1.0, 0.5);
  const IndexSet block{3, 12};
  double expected = 0.0;
  for (int j : block) {
    const double mu = model.design().row(j).dot(theta);
    expected += -0.5 * std::log(2 * std::numbers::pi) - 0.5 * std::pow(model.response()[j] - mu, 2);
  }
  CHECK(model.log_likelihood_block(theta, block) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("validation errors") {
  GaussianBelief bad{Eigen::VectorXd::Zero(2), (Eigen::Matrix2d() << 1, 0.5, 0.4, 1).finished()};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  GaussianBelief npd{Eigen::VectorXd::Zero(2), (Eigen::Matrix2d() << 1, 2, 2, 1).finished()};
  CHECK_THROWS_AS(npd.validate(), NumericalError);
  PolynomialSpec spec;
  spec.coef_variance = 0.0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = PolynomialSpec{};
  spec.degree = -1;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  CHECK_THROWS_AS(ConjugateLinearModel(Eigen::MatrixXd::Ones(3, 1), Eigen::VectorXd::Zero(2),
                                       unit_prior(), 1.0),
                  ValidationError);
}

TEST_CASE("degenerate design with r >= n stays well defined") {
  const double x[] = {0.5, 0.5};
  PolynomialSpec spec;
  spec.degree = 3;
  const ConjugateLinearModel model(x, Eigen::Vector2d(1.0, 1.2), spec);
  CHECK(std::isfinite(model.log_marginal(testing::all_rows(2))));
}

TEST_CASE("simulated polynomial data") {
  SimulationSpec sim;
  sim.n = 500;
  const SimulatedData a = simulate_polynomial(sim, 1);
  const SimulatedData b = simulate_polynomial(sim, 1);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(*std::min_element(a.x.begin(), a.x.end()) >= -1.0);
  CHECK(*std::max_element(a.x.begin(), a.x.end()) <= 1.0);
  Eigen::VectorXd resid(500);
  for (int i = 0; i < 500; ++i) resid[i] = a.y[i] - 1.0 - 0.5 * a.x[static_cast<std::size_t>(i)];
  CHECK(std::abs(resid.mean()) < 0.2);
  CHECK(std::abs(resid.squaredNorm() / 500 - 1.0) < 0.2);
}
