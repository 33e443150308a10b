#include "bayescv/probit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>

#include <boost/math/special_functions/erf.hpp>

#include "bayescv/format.hpp"

namespace bayescv::probit {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double log_norm_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

/// phi(x) / Phi(x), stable in both tails.
double inverse_mills(double x) { return std::exp(log_norm_pdf(x) - log_norm_cdf(x)); }

/// Phi^-1(q) for q in (0,1).
double norm_quantile(double q) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q); }

double row_log_lik(double eta, double y) { return y > 0.5 ? log_norm_cdf(eta) : log_norm_cdf(-eta); }

double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

double log_norm_cdf(double x) {
  if (x < -30.0) {
    // log phi(x) - log(-x) + log(1 - 1/x^2 + 3/x^4 - 15/x^6)
    const double r = 1.0 / (x * x);
    return log_norm_pdf(x) - std::log(-x) + std::log1p(r * (-1.0 + r * (3.0 - 15.0 * r)));
  }
  if (x < 0.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
  return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& raw) {
  if (raw.rows() < 1) throw ValidationError("cannot standardize an empty design");
  Standardizer s;
  s.mean = raw.colwise().mean();
  s.sd.resize(raw.cols());
  for (Eigen::Index c = 0; c < raw.cols(); ++c) {
    const double var = (raw.col(c).array() - s.mean[c]).square().mean();
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(s.mean[c]))))
      throw DegenerateCovariateError("covariate column " + std::to_string(c + 1) +
                                     " is constant and cannot be standardized");
    s.sd[c] = sd;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& raw) const {
  if (raw.cols() != mean.size()) throw ValidationError("standardizer column count mismatch");
  return (raw.rowwise() - mean).array().rowwise() / sd.array();
}

void ProbitData::validate() const {
  if (y.size() < 1) throw ValidationError("probit data must contain at least one row");
  if (x.rows() != y.size()) throw ValidationError("design rows do not match response length");
  if (x.cols() < 1) throw ValidationError("design must contain the intercept column");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 0.0 && y[i] != 1.0)
      throw ValidationError("probit response at row " + std::to_string(i + 1) + " is not 0 or 1");
  if ((x.col(0).array() != 1.0).any())
    throw ValidationError("first design column must be all 1s");
  if (!x.allFinite()) throw ValidationError("design contains non-finite values");
}

ProbitData ProbitData::from_covariates(const Eigen::MatrixXd& raw, const Eigen::VectorXd& y,
                                       bool standardize) {
  if (raw.rows() != y.size()) throw ValidationError("covariate rows do not match response length");
  ProbitData d;
  d.y = y;
  d.x.resize(raw.rows(), raw.cols() + 1);
  d.x.col(0).setOnes();
  if (raw.cols() > 0)
    d.x.rightCols(raw.cols()) = standardize ? Standardizer::fit(raw).apply(raw) : raw;
  d.standardized = standardize;
  d.validate();
  return d;
}

ProbitData ProbitData::from_dataset(const Dataset& data, std::span<const std::string> columns,
                                    bool standardize) {
  if (!data.is_binary()) throw ValidationError("probit response column y must be 0/1");
  Eigen::MatrixXd raw(data.size(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c)
    raw.col(static_cast<Eigen::Index>(c)) = data.covariate(columns[c]);
  return from_covariates(raw, data.y, standardize);
}

ProbitData ProbitData::rows(std::span<const int> index) const {
  ProbitData d;
  d.y.resize(static_cast<Eigen::Index>(index.size()));
  d.x.resize(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    const int i = index[r];
    if (i < 0 || i >= size()) throw ValidationError("row index out of range");
    d.y[static_cast<Eigen::Index>(r)] = y[i];
    d.x.row(static_cast<Eigen::Index>(r)) = x.row(i);
  }
  d.standardized = standardized;
  return d;
}

ProbitData ProbitData::canonical() const {
  IndexSet order(static_cast<std::size_t>(size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (y[a] != y[b]) return y[a] < y[b];
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      if (x(a, c) != x(b, c)) return x(a, c) < x(b, c);
    return false;
  });
  return rows(order);
}

void GPriorSpec::validate() const {
  if (!(g > 0.0) || !std::isfinite(g)) throw ValidationError("g-prior scale g must be positive");
}

GPrior::GPrior(const ProbitData& full, GPriorSpec spec) : g_(spec.g) {
  spec.validate();
  const Eigen::MatrixXd xtx = full.x.transpose() * full.x;
  precision_ = xtx / g_;
  precision_chol_.compute(precision_);
  if (precision_chol_.info() != Eigen::Success)
    throw NumericalError("X^T X is singular; the g-prior is improper");
  cov_ = precision_chol_.solve(Eigen::MatrixXd::Identity(xtx.rows(), xtx.cols()));
  const double d = static_cast<double>(xtx.rows());
  log_norm_ = -0.5 * d * std::log(2.0 * std::numbers::pi) + 0.5 * log_det_from_llt(precision_chol_);
}

double GPrior::log_density(const Eigen::VectorXd& theta) const {
  return log_norm_ - 0.5 * theta.dot(precision_ * theta);
}

double probit_log_likelihood(const Eigen::VectorXd& theta, const ProbitData& data) {
  if (theta.size() != data.dim()) throw ValidationError("theta dimension does not match design");
  const Eigen::VectorXd eta = data.x * theta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) total += row_log_lik(eta[i], data.y[i]);
  return total;
}

double probit_log_likelihood(const Eigen::VectorXd& theta, const ProbitData& data,
                             std::span<const int> rows) {
  if (theta.size() != data.dim()) throw ValidationError("theta dimension does not match design");
  double total = 0.0;
  for (int i : rows) total += row_log_lik(data.x.row(i).dot(theta), data.y[i]);
  return total;
}

MleFit fit_mle(const ProbitData& data) {
  data.validate();
  const double ones = data.y.sum();
  if (ones == 0.0 || ones == static_cast<double>(data.size()))
    throw SeparationError("all responses are equal; the probit MLE does not exist");

  const Eigen::Index d = data.dim();
  MleFit fit;
  fit.theta = Eigen::VectorXd::Zero(d);
  double loglik = probit_log_likelihood(fit.theta, data);

  auto derivatives = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad, Eigen::MatrixXd& info) {
    grad.setZero(d);
    info.setZero(d, d);
    const Eigen::VectorXd eta = data.x * theta;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      // lambda = d/d eta log-lik of row i; -d lambda/d eta = lambda (lambda + eta)
      const double lambda =
          data.y[i] > 0.5 ? inverse_mills(eta[i]) : -inverse_mills(-eta[i]);
      grad += lambda * data.x.row(i).transpose();
      info.selfadjointView<Eigen::Lower>().rankUpdate(data.x.row(i).transpose(),
                                                      lambda * (lambda + eta[i]));
    }
    info = info.selfadjointView<Eigen::Lower>();
  };

  Eigen::VectorXd grad;
  Eigen::MatrixXd info;
  for (int iter = 0; iter < 100; ++iter) {
    derivatives(fit.theta, grad, info);
    fit.gradient_norm = grad.norm();
    fit.iterations = iter;
    if (fit.gradient_norm < 1e-8) break;
    const Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success)
      throw SeparationError("observed information lost positive-definiteness; data may be separated");
    const Eigen::VectorXd step = llt.solve(grad);
    double t = 1.0;
    Eigen::VectorXd next = fit.theta + step;
    double next_ll = probit_log_likelihood(next, data);
    // Changes below rounding of the log likelihood do not count as a decrease.
    const double slack = 1e-12 * (1.0 + std::abs(loglik));
    for (int h = 0; h < 50 && !(next_ll >= loglik - slack); ++h) {
      t *= 0.5;
      next = fit.theta + t * step;
      next_ll = probit_log_likelihood(next, data);
    }
    fit.theta = next;
    loglik = std::max(loglik, next_ll);
    if (fit.theta.norm() > 1e3)
      throw SeparationError("probit MLE diverges (|theta| > 1e3); data appear separated");
    if (iter == 99) throw SeparationError("probit MLE did not converge in 100 iterations");
  }
  // A fit that classifies every row correctly separates the data; the
  // likelihood then keeps increasing along theta and has no maximizer.
  const Eigen::ArrayXd margin = (2.0 * data.y.array() - 1.0) * (data.x * fit.theta).array();
  if ((margin > 0.0).all())
    throw SeparationError("the responses are completely separated by the covariates");
  derivatives(fit.theta, grad, info);
  fit.gradient_norm = grad.norm();
  const Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() != Eigen::Success)
    throw SeparationError("observed information is not positive definite at the MLE");
  fit.cov = llt.solve(Eigen::MatrixXd::Identity(d, d));
  return fit;
}

Proposal::Proposal(const MleFit& fit, double scale) : mean_(fit.theta) {
  if (!(scale > 0.0)) throw ValidationError("proposal scale must be positive");
  const Eigen::LLT<Eigen::MatrixXd> llt(scale * fit.cov);
  if (llt.info() != Eigen::Success) throw NumericalError("proposal covariance is not positive definite");
  lower_ = llt.matrixL();
  const double d = static_cast<double>(mean_.size());
  log_norm_ = -0.5 * d * std::log(2.0 * std::numbers::pi) - lower_.diagonal().array().log().sum();
}

Eigen::MatrixXd Proposal::sample(int count, std::uint64_t seed) const {
  Rng rng(seed);
  Eigen::MatrixXd z(mean_.size(), count);
  for (int s = 0; s < count; ++s) z.col(s) = rng.normal_vector(mean_.size());
  return (lower_ * z).colwise() + mean_;
}

double Proposal::log_density(const Eigen::VectorXd& theta) const {
  const Eigen::VectorXd u =
      lower_.triangularView<Eigen::Lower>().solve(theta - mean_);
  return log_norm_ - 0.5 * u.squaredNorm();
}

namespace {

double effective_sample_size(std::span<const double> log_w) {
  const double top = *std::max_element(log_w.begin(), log_w.end());
  if (!std::isfinite(top)) return 0.0;
  double s1 = 0.0, s2 = 0.0;
  for (double lw : log_w) {
    const double w = std::exp(lw - top);
    s1 += w;
    s2 += w * w;
  }
  return s1 * s1 / s2;
}

IsEstimate make_estimate(double value, std::span<const double> log_w) {
  IsEstimate est;
  est.value = value;
  est.samples = static_cast<int>(log_w.size());
  est.effective_sample_size = effective_sample_size(log_w);
  est.low_ess = est.effective_sample_size < kLowEss;
  return est;
}

void check_samples(int samples) {
  if (samples < 1) throw ValidationError("importance sample count S must be at least 1");
}

}  // namespace

IsEstimate is_log_marginal(const ProbitData& data, const GPrior& prior, const MleFit& fit,
                           int samples, std::uint64_t seed) {
  check_samples(samples);
  const Proposal proposal(fit);
  const Eigen::MatrixXd theta = proposal.sample(samples, seed);
  std::vector<double> log_w(static_cast<std::size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    const Eigen::VectorXd t = theta.col(s);
    log_w[static_cast<std::size_t>(s)] =
        prior.log_density(t) + probit_log_likelihood(t, data) - proposal.log_density(t);
  }
  return make_estimate(log_mean_exp(log_w), log_w);
}

IsEstimate is_log_marginal(const ProbitData& data, GPriorSpec prior, int samples,
                           std::uint64_t seed) {
  const ProbitData canon = data.canonical();
  return is_log_marginal(canon, GPrior(canon, prior), fit_mle(canon), samples, seed);
}

IsEstimate is_log_block_predictive(const ProbitData& data, const GPrior& prior,
                                   const MleFit& fit, std::span<const int> train,
                                   std::span<const int> test, int samples, std::uint64_t seed) {
  check_samples(samples);
  if (test.empty()) {
    IsEstimate est;
    est.samples = samples;
    est.effective_sample_size = samples;
    return est;
  }
  const double n = static_cast<double>(train.size() + test.size());
  const double P = static_cast<double>(test.size());
  const Proposal proposal(fit, n / (n - P));
  const Eigen::MatrixXd theta = proposal.sample(samples, seed);
  std::vector<double> log_w(static_cast<std::size_t>(samples));
  std::vector<double> log_w_joint(static_cast<std::size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    const Eigen::VectorXd t = theta.col(s);
    const double lw = prior.log_density(t) + probit_log_likelihood(t, data, train) -
                      proposal.log_density(t);
    log_w[static_cast<std::size_t>(s)] = lw;
    log_w_joint[static_cast<std::size_t>(s)] = lw + probit_log_likelihood(t, data, test);
  }
  return make_estimate(log_mean_exp(log_w_joint) - log_mean_exp(log_w), log_w);
}

IsEstimate is_log_block_predictive(const ProbitData& train, const ProbitData& test,
                                   GPriorSpec prior, int samples, std::uint64_t seed) {
  if (train.size() < 1) throw ValidationError("training block must be nonempty");
  if (test.size() > 0 && test.dim() != train.dim())
    throw ValidationError("train and test designs differ in width");
  ProbitData all;
  all.y.resize(train.size() + test.size());
  all.x.resize(train.size() + test.size(), train.dim());
  all.y << train.y, test.y;
  all.x << train.x, test.x;
  all.standardized = train.standardized;
  IndexSet tr(static_cast<std::size_t>(train.size())), te(static_cast<std::size_t>(test.size()));
  std::iota(tr.begin(), tr.end(), 0);
  std::iota(te.begin(), te.end(), train.size());
  return is_log_block_predictive(all, GPrior(all, prior), fit_mle(all), tr, te, samples, seed);
}

double truncated_normal_above(double lower, Rng& rng) {
  if (lower > 6.0) {
    for (;;) {
      const double x = std::sqrt(lower * lower - 2.0 * std::log(rng.uniform()));
      if (rng.uniform() * x <= lower) return x;
    }
  }
  // P(Z > lower) = Phi(-lower); draw its complement tail by inversion.
  const double mass = 0.5 * std::erfc(lower / std::numbers::sqrt2);
  return -norm_quantile(mass * rng.uniform());
}

Eigen::MatrixXd gibbs_posterior(const ProbitData& data, const GPrior& prior, int iterations,
                                int burn_in, std::uint64_t seed) {
  data.validate();
  if (iterations < 1 || burn_in < 0 || burn_in >= iterations)
    throw ValidationError("Gibbs needs iterations >= 1 and 0 <= burn_in < iterations");
  const Eigen::Index d = data.dim();
  const Eigen::MatrixXd post_precision = prior.precision() + data.x.transpose() * data.x;
  const Eigen::LLT<Eigen::MatrixXd> llt(post_precision);
  if (llt.info() != Eigen::Success) throw NumericalError("Gibbs posterior precision is singular");
  const Eigen::MatrixXd upper = llt.matrixU();

  Rng rng(seed);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd z(data.size());
  Eigen::MatrixXd chain(d, iterations - burn_in);
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd eta = data.x * theta;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      z[i] = data.y[i] > 0.5 ? eta[i] + truncated_normal_above(-eta[i], rng)
                             : eta[i] - truncated_normal_above(eta[i], rng);
    }
    const Eigen::VectorXd mean = llt.solve(data.x.transpose() * z);
    // U^T U = precision, so U^-1 e has covariance precision^-1.
    theta = mean + upper.triangularView<Eigen::Upper>().solve(rng.normal_vector(d));
    if (it >= burn_in) chain.col(it - burn_in) = theta;
  }
  return chain;
}

void write_chain_csv(std::ostream& out, const Eigen::MatrixXd& chain,
                     std::span<const std::string> names) {
  if (static_cast<Eigen::Index>(names.size()) != chain.rows())
    throw ValidationError("chain column names do not match parameter dimension");
  out << "iteration";
  for (const auto& name : names) out << ',' << name;
  out << '\n';
  for (Eigen::Index s = 0; s < chain.cols(); ++s) {
    out << s + 1;
    for (Eigen::Index k = 0; k < chain.rows(); ++k) out << ',' << format_g(chain(k, s));
    out << '\n';
  }
}

mc::McEstimate ccv_probit(const ProbitData& data, GPriorSpec prior_spec, int P, int samples,
                          const mc::McOptions& options) {
  data.validate();
  check_samples(samples);
  const int n = data.size();
  if (P < 1 || P >= n)
    throw ValidationError("P=" + std::to_string(P) + " outside [1, n-1] for n=" + std::to_string(n));
  const GPrior prior(data, prior_spec);
  const MleFit fit = fit_mle(data);
  mc::McEstimate est = mc::estimate_split_average(
      n, P, options, [&](const Split& split, std::uint64_t seed) {
        return is_log_block_predictive(data, prior, fit, split.train, split.test, samples, seed)
            .value;
      });
  est.draws = samples;
  return est;
}

Dataset simulate_probit(const ProbitSimulationSpec& spec, std::uint64_t seed) {
  const auto k = static_cast<Eigen::Index>(spec.names.size());
  if (spec.n < 2) throw ValidationError("simulated probit data needs n >= 2");
  if (static_cast<Eigen::Index>(spec.theta.size()) != k + 1)
    throw ValidationError("simulation needs one coefficient per covariate plus an intercept");
  Rng rng(seed);
  Dataset out;
  out.y.resize(spec.n);
  Eigen::MatrixXd x(spec.n, k);
  for (int i = 0; i < spec.n; ++i) {
    double eta = spec.theta[0];
    for (Eigen::Index c = 0; c < k; ++c) {
      x(i, c) = rng.normal();
      eta += spec.theta[static_cast<std::size_t>(c) + 1] * x(i, c);
    }
    out.y[i] = rng.uniform() < std::exp(log_norm_cdf(eta)) ? 1.0 : 0.0;
  }
  out.x = std::move(x);
  out.covariate_names = spec.names;
  out.validate();
  return out;
}

}  // namespace bayescv::probit
