#pragma once

// Probit regression under a g-prior: maximum likelihood, importance-sampling
// evidence and block predictive estimates, Albert-Chib Gibbs sampling and
// the cumulative cross-validation pipeline.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bayescv/core.hpp"
#include "bayescv/mc_scorer.hpp"

namespace bayescv::probit {

class DegenerateCovariateError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// The likelihood has no finite maximizer.
class SeparationError : public Error {
 public:
  using Error::Error;
};

/// Column means and population SDs (divisor n), reusable on new rows.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd sd;

  /// Throws DegenerateCovariateError for a constant column.
  static Standardizer fit(const Eigen::MatrixXd& raw);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
};

struct ProbitData {
  Eigen::VectorXd y;  // entries in {0,1}
  Eigen::MatrixXd x;  // n x (k+1), first column all 1s
  bool standardized = false;

  int size() const { return static_cast<int>(y.size()); }
  int dim() const { return static_cast<int>(x.cols()); }
  void validate() const;

  /// Prepends the intercept column; standardizes covariates when asked.
  static ProbitData from_covariates(const Eigen::MatrixXd& raw, const Eigen::VectorXd& y,
                                    bool standardize = true);
  /// Selected covariate columns of a binary dataset, in the given order.
  static ProbitData from_dataset(const Dataset& data, std::span<const std::string> columns,
                                 bool standardize = true);

  ProbitData rows(std::span<const int> index) const;
  /// Rows sorted by (y, x) lexicographically; the canonical order used by
  /// estimators that promise invariance to row permutation.
  ProbitData canonical() const;
};

struct GPriorSpec {
  double g = 1.0;
  void validate() const;
};

/// N(0, g (X^T X)^-1) with X^T X from the design it was built on.
class GPrior {
 public:
  GPrior(const ProbitData& full, GPriorSpec spec);

  double log_density(const Eigen::VectorXd& theta) const;
  const Eigen::MatrixXd& cov() const { return cov_; }
  /// (X^T X) / g
  const Eigen::MatrixXd& precision() const { return precision_; }
  double g() const { return g_; }

 private:
  double g_;
  Eigen::MatrixXd cov_, precision_;
  Eigen::LLT<Eigen::MatrixXd> precision_chol_;
  double log_norm_ = 0.0;
};

/// log Phi(x); the Mills-ratio expansion takes over for x < -30.
double log_norm_cdf(double x);

double probit_log_likelihood(const Eigen::VectorXd& theta, const ProbitData& data);
/// Restricted to the given rows, summed in index order.
double probit_log_likelihood(const Eigen::VectorXd& theta, const ProbitData& data,
                             std::span<const int> rows);

struct MleFit {
  Eigen::VectorXd theta;
  Eigen::MatrixXd cov;  // inverse observed information at theta
  int iterations = 0;
  double gradient_norm = 0.0;
};

/// Newton-Raphson with step halving to gradient norm < 1e-8. Throws
/// SeparationError when all responses agree, |theta| > 1e3, or after 100
/// iterations.
MleFit fit_mle(const ProbitData& data);

/// Gaussian importance proposal N(mean, scale * cov).
class Proposal {
 public:
  Proposal(const MleFit& fit, double scale = 1.0);

  /// One draw per column.
  Eigen::MatrixXd sample(int count, std::uint64_t seed) const;
  double log_density(const Eigen::VectorXd& theta) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd lower_;  // Cholesky factor of the scaled covariance
  double log_norm_ = 0.0;
};

struct IsEstimate {
  double value = 0.0;
  double effective_sample_size = 0.0;
  int samples = 0;  // S
  bool low_ess = false;  // ESS < 10
};

inline constexpr double kLowEss = 10.0;

/// log p(y) by importance sampling from N(MLE, MLE covariance). Rows are
/// put in canonical order first, so the result is invariant to row order.
IsEstimate is_log_marginal(const ProbitData& data, GPriorSpec prior, int samples,
                           std::uint64_t seed);

/// Same estimate with an explicit prior and fit, rows taken as given.
IsEstimate is_log_marginal(const ProbitData& data, const GPrior& prior, const MleFit& fit,
                           int samples, std::uint64_t seed);

/// log p(y_test | y_train) = log Z(train + test) - log Z(train), both from
/// the same draws of the proposal N(fit.theta, fit.cov * n / (n - P)),
/// n = total rows, P = |test|. ESS refers to the train-only weights. An
/// empty test block gives 0.
IsEstimate is_log_block_predictive(const ProbitData& data, const GPrior& prior,
                                   const MleFit& fit, std::span<const int> train,
                                   std::span<const int> test, int samples, std::uint64_t seed);

/// Convenience form over separate train and test blocks: the fit is the MLE
/// of their union and the prior is built from the union's design.
IsEstimate is_log_block_predictive(const ProbitData& train, const ProbitData& test,
                                   GPriorSpec prior, int samples, std::uint64_t seed);

/// Standard normal restricted to (lower, inf): inverse CDF in the bulk,
/// Rayleigh rejection for lower > 6.
double truncated_normal_above(double lower, Rng& rng);

/// Albert-Chib data augmentation; returns post-burn-in draws, one per column.
Eigen::MatrixXd gibbs_posterior(const ProbitData& data, const GPrior& prior, int iterations,
                                int burn_in, std::uint64_t seed);

/// Header `iteration,<names...>`; iterations counted from 1 after burn-in.
void write_chain_csv(std::ostream& out, const Eigen::MatrixXd& chain,
                     std::span<const std::string> names);

/// Mean over T random size-P test splits of the importance-sampled block
/// predictive; the prior and proposal centre come from the full data.
mc::McEstimate ccv_probit(const ProbitData& data, GPriorSpec prior, int P, int samples,
                          const mc::McOptions& options);

struct ProbitSimulationSpec {
  int n = 332;
  /// intercept followed by one coefficient per covariate, on the
  /// standardized scale
  std::vector<double> theta{-0.6, 1.0, 0.1, 0.17};
  std::vector<std::string> names{"glu", "bp", "ped"};
};

/// Independent N(0,1) covariates and y ~ Bernoulli(Phi(x^T theta)).
Dataset simulate_probit(const ProbitSimulationSpec& spec, std::uint64_t seed);

}  // namespace bayescv::probit
