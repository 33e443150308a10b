#pragma once

// Capability contracts consumed by the exact and Monte Carlo scorers.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace bayescv {

/// A model with exact (closed-form) block log posterior predictives.
///
/// Implementations must be pure: concurrent calls from several threads are
/// made by the parallel kernels. Index sets are 0-based and sorted.
class ExactPredictiveModel {
 public:
  virtual ~ExactPredictiveModel() = default;

  virtual int size() const = 0;

  /// log p(y_subset); the empty subset has log marginal 0.
  virtual double log_marginal(std::span<const int> subset) const = 0;

  /// log p(y_test | y_train) as a joint block. With an empty training set
  /// this is the prior predictive, i.e. log_marginal(test).
  virtual double log_block_predictive(std::span<const int> train,
                                      std::span<const int> test) const = 0;

  /// sum_j log p(y_j | y_train) over j in test, each point scored
  /// independently given the training set.
  virtual double sum_pointwise_log_predictive(std::span<const int> train,
                                              std::span<const int> test) const {
    double total = 0.0;
    for (int j : test) total += log_block_predictive(train, std::span<const int>(&j, 1));
    return total;
  }
};

/// A model scored through posterior draws.
class SampledModel {
 public:
  virtual ~SampledModel() = default;

  virtual int size() const = 0;

  /// B draws from pi(theta | y_train), one per column. Deterministic in seed.
  virtual Eigen::MatrixXd posterior_sample(std::span<const int> train, int draws,
                                           std::uint64_t seed) const = 0;

  /// log f_theta(y_test), the joint likelihood of the test block.
  virtual double log_likelihood_block(const Eigen::VectorXd& theta,
                                      std::span<const int> test) const = 0;
};

}  // namespace bayescv
