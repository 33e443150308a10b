#include "bayescv/conjlinear.hpp"

#include <cmath>
#include <numbers>

namespace bayescv::conjlinear {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Eigen::LLT<Eigen::MatrixXd> cholesky(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError(std::string("Cholesky failed: ") + what);
  return llt;
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

void check_noise(double noise_variance) {
  if (!(noise_variance > 0.0) || !std::isfinite(noise_variance))
    throw ValidationError("noise variance must be positive and finite");
}

}  // namespace

void GaussianBelief::validate() const {
  if (cov.rows() != mean.size() || cov.cols() != mean.size())
    throw ValidationError("belief covariance shape does not match mean");
  if (!(cov - cov.transpose()).isZero(1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff())))
    throw ValidationError("belief covariance is not symmetric");
  cholesky(cov, "belief covariance is not positive definite");
}

void PolynomialSpec::validate() const {
  if (degree < 0) throw ValidationError("polynomial degree must be nonnegative");
  if (!(noise_variance > 0.0)) throw ValidationError("noise variance must be positive");
  if (!(intercept_sd > 0.0)) throw ValidationError("intercept sd must be positive");
  if (!(coef_variance > 0.0)) throw ValidationError("coefficient variance must be positive");
}

GaussianBelief PolynomialSpec::prior() const {
  validate();
  GaussianBelief belief;
  belief.mean = Eigen::VectorXd::Zero(degree + 1);
  Eigen::VectorXd var = Eigen::VectorXd::Constant(degree + 1, coef_variance);
  var[0] = intercept_sd * intercept_sd;
  belief.cov = var.asDiagonal();
  return belief;
}

Eigen::MatrixXd build_design(std::span<const double> x, int degree) {
  if (degree < 0) throw ValidationError("polynomial degree must be nonnegative");
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd design(n, degree + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    double power = 1.0;
    for (int d = 0; d <= degree; ++d) {
      design(i, d) = power;
      power *= x[static_cast<std::size_t>(i)];
    }
  }
  return design;
}

double log_mvn_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                       const Eigen::MatrixXd& cov) {
  const auto llt = cholesky(cov, "predictive covariance is not positive definite");
  const Eigen::VectorXd z = llt.matrixL().solve(x - mean);
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + log_det(llt) + z.squaredNorm());
}

GaussianBelief posterior_update(const GaussianBelief& prior, const Eigen::MatrixXd& design,
                                const Eigen::VectorXd& y, double noise_variance) {
  check_noise(noise_variance);
  if (design.rows() != y.size()) throw ValidationError("design rows do not match response length");
  if (design.cols() != prior.dim()) throw ValidationError("design columns do not match prior dimension");
  if (y.size() == 0) return prior;
  // Kalman form: gain through the Cholesky of the n x n predictive covariance.
  const Eigen::MatrixXd cross = prior.cov * design.transpose();
  Eigen::MatrixXd predictive = design * cross;
  predictive.diagonal().array() += noise_variance;
  const auto llt = cholesky(predictive, "predictive covariance is not positive definite");
  GaussianBelief post;
  post.mean = prior.mean + cross * llt.solve(y - design * prior.mean);
  post.cov = prior.cov - cross * llt.solve(cross.transpose());
  post.cov = 0.5 * (post.cov + post.cov.transpose());
  return post;
}

double log_marginal(const GaussianBelief& prior, const Eigen::MatrixXd& design,
                    const Eigen::VectorXd& y, double noise_variance) {
  check_noise(noise_variance);
  if (design.rows() != y.size()) throw ValidationError("design rows do not match response length");
  if (y.size() == 0) return 0.0;
  Eigen::MatrixXd cov = design * prior.cov * design.transpose();
  cov.diagonal().array() += noise_variance;
  return log_mvn_density(y, design * prior.mean, cov);
}

double log_posterior_predictive_block(const GaussianBelief& posterior,
                                      const Eigen::MatrixXd& design_test,
                                      const Eigen::VectorXd& y_test, double noise_variance) {
  if (y_test.size() == 0) throw ValidationError("test block must be nonempty");
  return log_marginal(posterior, design_test, y_test, noise_variance);
}

SufficientStats::SufficientStats(Eigen::Index dim)
    : xtx(Eigen::MatrixXd::Zero(dim, dim)), xty(Eigen::VectorXd::Zero(dim)) {}

void SufficientStats::add(const Eigen::Ref<const Eigen::RowVectorXd>& row, double y) {
  xtx.noalias() += row.transpose() * row;
  xty += y * row.transpose();
  yty += y * y;
  ++count;
}

EvidenceKernel::EvidenceKernel(const GaussianBelief& prior, double noise_variance)
    : prior_mean_(prior.mean), noise_variance_(noise_variance) {
  check_noise(noise_variance);
  prior.validate();
  const auto llt = cholesky(prior.cov, "prior covariance is not positive definite");
  prior_precision_ = llt.solve(Eigen::MatrixXd::Identity(prior.dim(), prior.dim()));
  prior_precision_ = 0.5 * (prior_precision_ + prior_precision_.transpose());
  prior_shift_ = llt.solve(prior.mean);
  prior_quad_ = prior.mean.dot(prior_shift_);
  prior_logdet_precision_ = -log_det(llt);
}

EvidenceKernel::Factor EvidenceKernel::factor(const SufficientStats& stats) const {
  return Factor{cholesky(prior_precision_ + stats.xtx / noise_variance_,
                        "posterior precision is not positive definite"),
                prior_shift_ + stats.xty / noise_variance_};
}

// shift^T precision^{-1} shift - log det precision
double EvidenceKernel::quadratic_and_logdet(const Factor& f) const {
  const Eigen::VectorXd z = f.llt.matrixL().solve(f.shift);
  return z.squaredNorm() - log_det(f.llt);
}

double EvidenceKernel::log_evidence(const SufficientStats& stats) const {
  if (stats.count == 0) return 0.0;
  const Factor f = factor(stats);
  return -0.5 * static_cast<double>(stats.count) * (kLog2Pi + std::log(noise_variance_)) -
         0.5 * stats.yty / noise_variance_ - 0.5 * prior_quad_ + 0.5 * prior_logdet_precision_ +
         0.5 * quadratic_and_logdet(f);
}

double EvidenceKernel::log_predictive(const SufficientStats& train,
                                      const SufficientStats& test) const {
  if (test.count == 0) return 0.0;
  if (train.count == 0) return log_evidence(test);
  SufficientStats joint = train;
  joint.xtx += test.xtx;
  joint.xty += test.xty;
  joint.yty += test.yty;
  joint.count += test.count;
  return -0.5 * static_cast<double>(test.count) * (kLog2Pi + std::log(noise_variance_)) -
         0.5 * test.yty / noise_variance_ +
         0.5 * (quadratic_and_logdet(factor(joint)) - quadratic_and_logdet(factor(train)));
}

GaussianBelief EvidenceKernel::posterior(const SufficientStats& stats) const {
  const Factor f = factor(stats);
  GaussianBelief post;
  post.mean = f.llt.solve(f.shift);
  post.cov = f.llt.solve(Eigen::MatrixXd::Identity(dim(), dim()));
  post.cov = 0.5 * (post.cov + post.cov.transpose());
  return post;
}

ConjugateLinearModel::ConjugateLinearModel(Eigen::MatrixXd design, Eigen::VectorXd y,
                                           GaussianBelief prior, double noise_variance)
    : design_(std::move(design)),
      y_(std::move(y)),
      prior_(std::move(prior)),
      kernel_(prior_, noise_variance),
      full_stats_(design_.cols()) {
  if (design_.rows() != y_.size()) throw ValidationError("design rows do not match response length");
  if (design_.cols() != prior_.dim()) throw ValidationError("design columns do not match prior dimension");
  if (y_.size() < 1) throw ValidationError("dataset must contain at least one observation");
  for (Eigen::Index i = 0; i < y_.size(); ++i) full_stats_.add(design_.row(i), y_[i]);
}

ConjugateLinearModel::ConjugateLinearModel(std::span<const double> x, Eigen::VectorXd y,
                                           const PolynomialSpec& spec)
    : ConjugateLinearModel(build_design(x, spec.degree), std::move(y), spec.prior(),
                           spec.noise_variance) {}

SufficientStats ConjugateLinearModel::stats(std::span<const int> rows) const {
  SufficientStats s(design_.cols());
  for (int i : rows) s.add(design_.row(i), y_[i]);
  return s;
}

double ConjugateLinearModel::log_marginal(std::span<const int> subset) const {
  return kernel_.log_evidence(stats(subset));
}

double ConjugateLinearModel::log_block_predictive(std::span<const int> train,
                                                  std::span<const int> test) const {
  if (train.size() + test.size() != static_cast<std::size_t>(size()))
    return kernel_.log_predictive(stats(train), stats(test));
  // A full partition: accumulate the smaller block, subtract it from the total.
  const bool test_smaller = test.size() <= train.size();
  SufficientStats small = stats(test_smaller ? test : train);
  SufficientStats rest = full_stats_;
  rest.xtx -= small.xtx;
  rest.xty -= small.xty;
  rest.yty -= small.yty;
  rest.count -= small.count;
  return test_smaller ? kernel_.log_predictive(rest, small) : kernel_.log_predictive(small, rest);
}

double ConjugateLinearModel::sum_pointwise_log_predictive(std::span<const int> train,
                                                          std::span<const int> test) const {
  if (train.size() + test.size() != static_cast<std::size_t>(size()) || train.size() <= test.size())
    return kernel_.sum_pointwise_log_predictive(stats(train), design_, y_, test);
  SufficientStats rest = full_stats_;
  const SufficientStats held = stats(test);
  rest.xtx -= held.xtx;
  rest.xty -= held.xty;
  rest.yty -= held.yty;
  rest.count -= held.count;
  return kernel_.sum_pointwise_log_predictive(rest, design_, y_, test);
}

double EvidenceKernel::sum_pointwise_log_predictive(const SufficientStats& train,
                                                    const Eigen::MatrixXd& design,
                                                    const Eigen::VectorXd& y,
                                                    std::span<const int> test) const {
  const Factor f = factor(train);
  const Eigen::VectorXd mean = f.llt.solve(f.shift);
  const double s2 = noise_variance_;
  double total = 0.0;
  for (int j : test) {
    const Eigen::VectorXd row = design.row(j).transpose();
    const double var = s2 + f.llt.matrixL().solve(row).squaredNorm();
    const double resid = y[j] - row.dot(mean);
    total += -0.5 * (kLog2Pi + std::log(var) + resid * resid / var);
  }
  return total;
}

Eigen::MatrixXd ConjugateLinearModel::posterior_sample(std::span<const int> train, int draws,
                                                       std::uint64_t seed) const {
  const GaussianBelief post = train.empty() ? prior_ : kernel_.posterior(stats(train));
  const auto llt = cholesky(post.cov, "posterior covariance is not positive definite");
  Rng rng(seed);
  Eigen::MatrixXd out(post.dim(), draws);
  const Eigen::MatrixXd lower = llt.matrixL();
  for (int b = 0; b < draws; ++b) out.col(b) = post.mean + lower * rng.normal_vector(post.dim());
  return out;
}

double ConjugateLinearModel::log_likelihood_block(const Eigen::VectorXd& theta,
                                                  std::span<const int> test) const {
  const double s2 = kernel_.noise_variance();
  double total = 0.0;
  for (int j : test) {
    const double resid = y_[j] - design_.row(j).dot(theta);
    total += resid * resid;
  }
  return -0.5 * (static_cast<double>(test.size()) * (kLog2Pi + std::log(s2)) + total / s2);
}

SimulatedData simulate_polynomial(const SimulationSpec& spec, std::uint64_t seed) {
  if (spec.n < 1) throw ValidationError("simulation size must be at least 1");
  if (!(spec.x_high > spec.x_low)) throw ValidationError("covariate range is empty");
  if (spec.theta.empty()) throw ValidationError("true coefficients must be nonempty");
  Rng rng(seed);
  SimulatedData data;
  data.x.resize(static_cast<std::size_t>(spec.n));
  data.y.resize(spec.n);
  const double sd = std::sqrt(spec.noise_variance);
  for (int i = 0; i < spec.n; ++i) {
    const double x = spec.x_low + (spec.x_high - spec.x_low) * rng.uniform();
    double mean = 0.0, power = 1.0;
    for (double c : spec.theta) {
      mean += c * power;
      power *= x;
    }
    data.x[static_cast<std::size_t>(i)] = x;
    data.y[i] = mean + sd * rng.normal();
  }
  return data;
}

}  // namespace bayescv::conjlinear
