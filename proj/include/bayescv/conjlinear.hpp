#pragma once

// Closed-form Gaussian machinery for polynomial regression with known noise
// variance: design matrices, conjugate updates, exact evidences and block
// posterior predictives.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bayescv/core.hpp"
#include "bayescv/model.hpp"

namespace bayescv::conjlinear {

/// Gaussian prior or posterior over regression coefficients.
struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Eigen::Index dim() const { return mean.size(); }
  /// Throws ValidationError on asymmetry or NumericalError when not PD.
  void validate() const;
};

/// Polynomial model y = theta . [1 x ... x^r] + eps, eps ~ N(0, noise_variance).
/// theta_0 ~ N(0, intercept_sd^2), theta_d ~ N(0, coef_variance) for d >= 1.
struct PolynomialSpec {
  int degree = 1;
  double noise_variance = 1.0;
  double intercept_sd = 100.0;
  double coef_variance = 1.0;

  void validate() const;
  GaussianBelief prior() const;
};

/// n x (r+1) matrix with rows [1, x_i, ..., x_i^r].
Eigen::MatrixXd build_design(std::span<const double> x, int degree);

// Data-space routes. Densities go through the Cholesky factor of the
// predictive covariance X C X^T + sigma^2 I.

GaussianBelief posterior_update(const GaussianBelief& prior, const Eigen::MatrixXd& design,
                                const Eigen::VectorXd& y, double noise_variance);

double log_marginal(const GaussianBelief& prior, const Eigen::MatrixXd& design,
                    const Eigen::VectorXd& y, double noise_variance);

double log_posterior_predictive_block(const GaussianBelief& posterior,
                                      const Eigen::MatrixXd& design_test,
                                      const Eigen::VectorXd& y_test, double noise_variance);

/// Log density of N(mean, cov) at x via Cholesky.
double log_mvn_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                       const Eigen::MatrixXd& cov);

/// Running X^T X, X^T y, y^T y over a set of rows.
struct SufficientStats {
  Eigen::MatrixXd xtx;
  Eigen::VectorXd xty;
  double yty = 0.0;
  int count = 0;

  explicit SufficientStats(Eigen::Index dim);
  void add(const Eigen::Ref<const Eigen::RowVectorXd>& row, double y);
};

/// Parameter-space evidence kernel: every density reduces to a Cholesky of a
/// (r+1) x (r+1) posterior precision, independent of the block size.
class EvidenceKernel {
 public:
  EvidenceKernel(const GaussianBelief& prior, double noise_variance);

  /// log p(y_S) for the rows summarised in `stats`.
  double log_evidence(const SufficientStats& stats) const;

  /// log p(test | train) = log p(train, test) - log p(train).
  double log_predictive(const SufficientStats& train, const SufficientStats& test) const;

  /// sum_j log N(y_j; x_j . m, sigma^2 + x_j^T C x_j) with (m, C) the
  /// posterior after `train`; each test row scored independently.
  double sum_pointwise_log_predictive(const SufficientStats& train, const Eigen::MatrixXd& design,
                                      const Eigen::VectorXd& y, std::span<const int> test) const;

  /// Posterior after `stats`.
  GaussianBelief posterior(const SufficientStats& stats) const;

  Eigen::Index dim() const { return prior_mean_.size(); }
  double noise_variance() const { return noise_variance_; }

 private:
  struct Factor {
    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::VectorXd shift;  // prior_precision * prior_mean + X^T y / sigma^2
  };
  Factor factor(const SufficientStats& stats) const;
  double quadratic_and_logdet(const Factor& f) const;

  Eigen::VectorXd prior_mean_;
  Eigen::MatrixXd prior_precision_;
  Eigen::VectorXd prior_shift_;
  double prior_quad_ = 0.0;
  double prior_logdet_precision_ = 0.0;
  double noise_variance_ = 1.0;
};

/// Polynomial regression as an exact and as a sampled model over a fixed dataset.
class ConjugateLinearModel final : public ExactPredictiveModel, public SampledModel {
 public:
  ConjugateLinearModel(Eigen::MatrixXd design, Eigen::VectorXd y, GaussianBelief prior,
                       double noise_variance);
  ConjugateLinearModel(std::span<const double> x, Eigen::VectorXd y, const PolynomialSpec& spec);

  int size() const override { return static_cast<int>(y_.size()); }

  double log_marginal(std::span<const int> subset) const override;
  double log_block_predictive(std::span<const int> train,
                              std::span<const int> test) const override;
  double sum_pointwise_log_predictive(std::span<const int> train,
                                      std::span<const int> test) const override;

  Eigen::MatrixXd posterior_sample(std::span<const int> train, int draws,
                                   std::uint64_t seed) const override;
  double log_likelihood_block(const Eigen::VectorXd& theta,
                              std::span<const int> test) const override;

  SufficientStats stats(std::span<const int> rows) const;
  const Eigen::MatrixXd& design() const { return design_; }
  const Eigen::VectorXd& response() const { return y_; }
  const GaussianBelief& prior() const { return prior_; }
  const EvidenceKernel& kernel() const { return kernel_; }

 private:
  Eigen::MatrixXd design_;
  Eigen::VectorXd y_;
  GaussianBelief prior_;
  EvidenceKernel kernel_;
  SufficientStats full_stats_;
};

/// Data-generating settings for the polynomial regression study.
struct SimulationSpec {
  int n = 100;
  std::vector<double> theta{1.0, 0.5};
  double noise_variance = 1.0;
  double x_low = -1.0;
  double x_high = 1.0;
};

struct SimulatedData {
  std::vector<double> x;
  Eigen::VectorXd y;
};

/// x_i ~ U(x_low, x_high), y_i = theta . [1 x_i ...] + N(0, noise_variance).
SimulatedData simulate_polynomial(const SimulationSpec& spec, std::uint64_t seed);

}  // namespace bayescv::conjlinear
