#include "bayescv/general_bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bayescv/format.hpp"
#include "bayescv/parallel.hpp"

namespace bayescv::gbayes {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse(const Eigen::VectorXd& v) { return log_sum_exp(std::span<const double>(v.data(), v.size())); }

}  // namespace

void DiscreteGeneralModel::validate() const {
  if (loss.rows() < 1) throw ValidationError("parameter set must be nonempty");
  if (prior.size() != loss.rows()) throw ValidationError("prior length does not match parameter count");
  if (!(w > 0.0) || !std::isfinite(w)) throw ValidationError("loss scale w must be positive");
  if ((prior.array() < 0.0).any() || !prior.allFinite())
    throw ValidationError("prior entries must be nonnegative");
  if (std::abs(prior.sum() - 1.0) > 1e-12) throw ValidationError("prior must sum to 1");
  if (!loss.allFinite() || (loss.array() < 0.0).any())
    throw ValidationError("losses must be finite and nonnegative");
}

ScoringFunction ScoringFunction::exp_neg(double rate) {
  if (!(rate >= 0.0)) throw ValidationError("exp_neg rate must be nonnegative");
  ScoringFunction g;
  g.kind_ = ScoringKind::exp_neg;
  g.param_ = rate;
  return g;
}

ScoringFunction ScoringFunction::inverse_shift() {
  ScoringFunction g;
  g.kind_ = ScoringKind::inverse_shift;
  return g;
}

ScoringFunction ScoringFunction::power(double k) {
  if (!(k > 0.0)) throw ValidationError("power exponent must be positive");
  ScoringFunction g;
  g.kind_ = ScoringKind::power;
  g.param_ = k;
  return g;
}

ScoringFunction ScoringFunction::gaussian() {
  ScoringFunction g;
  g.kind_ = ScoringKind::gaussian;
  return g;
}

ScoringFunction ScoringFunction::tabulated(std::vector<double> grid, std::vector<double> values) {
  if (grid.size() < 2 || grid.size() != values.size())
    throw ValidationError("tabulated scoring function needs >= 2 matching grid/value entries");
  if (grid.front() != 0.0) throw ValidationError("tabulated grid must start at 0");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw ValidationError("tabulated grid must be increasing");
    if (values[i] > values[i - 1]) throw ValidationError("tabulated values must be non-increasing");
  }
  if (values.back() < 0.0) throw ValidationError("tabulated values must be nonnegative");
  ScoringFunction g;
  g.kind_ = ScoringKind::tabulated;
  g.grid_ = std::move(grid);
  g.values_ = std::move(values);
  return g;
}

double ScoringFunction::log_g(double l) const {
  switch (kind_) {
    case ScoringKind::exp_neg:
      return -param_ * l;
    case ScoringKind::inverse_shift:
      return -std::log1p(l);
    case ScoringKind::power:
      return -param_ * std::log1p(l);
    case ScoringKind::gaussian:
      return -l * l;
    case ScoringKind::tabulated: {
      if (l >= grid_.back()) return std::log(values_.back());
      const auto it = std::upper_bound(grid_.begin(), grid_.end(), l);
      const std::size_t hi = static_cast<std::size_t>(it - grid_.begin());
      const std::size_t lo = hi - 1;
      const double t = (l - grid_[lo]) / (grid_[hi] - grid_[lo]);
      return std::log(values_[lo] + t * (values_[hi] - values_[lo]));
    }
  }
  return kNegInf;
}

double ScoringFunction::operator()(double l) const { return std::exp(log_g(l)); }

std::string ScoringFunction::name() const {
  switch (kind_) {
    case ScoringKind::exp_neg:
      return "exp_neg(" + format_exact(param_) + ")";
    case ScoringKind::inverse_shift:
      return "inverse_shift";
    case ScoringKind::power:
      return "power(" + format_exact(param_) + ")";
    case ScoringKind::gaussian:
      return "gaussian";
    case ScoringKind::tabulated:
      return "tabulated";
  }
  return "unknown";
}

bool ScoringFunction::is_valid_on(std::span<const double> grid) const {
  double previous = std::numeric_limits<double>::infinity();
  for (double l : grid) {
    if (l < 0.0) return false;
    const double v = (*this)(l);
    if (!(v >= 0.0) || !std::isfinite(v) || v > previous) return false;
    previous = v;
  }
  return true;
}

Eigen::VectorXd general_update_log(const DiscreteGeneralModel& model,
                                   std::span<const int> observed) {
  Eigen::VectorXd log_post = model.prior.array().log();
  for (int i : observed) {
    if (i < 0 || i >= model.size())
      throw ValidationError("observation index " + std::to_string(i + 1) + " outside 1.." +
                            std::to_string(model.size()));
    log_post -= model.w * model.loss.col(i);
  }
  const double norm = lse(log_post);
  if (!std::isfinite(norm)) throw DegeneratePosteriorError("general Bayesian posterior has no mass");
  log_post.array() -= norm;
  return log_post;
}

Eigen::VectorXd general_update(const DiscreteGeneralModel& model, std::span<const int> observed) {
  return general_update_log(model, observed).array().exp();
}

double log_pred_score_log(const Eigen::VectorXd& log_posterior,
                          const Eigen::VectorXd& new_losses, const ScoringFunction& g) {
  if (log_posterior.size() != new_losses.size())
    throw ValidationError("posterior and loss vectors differ in length");
  Eigen::VectorXd terms(log_posterior.size());
  for (Eigen::Index k = 0; k < terms.size(); ++k) terms[k] = log_posterior[k] + g.log_g(new_losses[k]);
  return lse(terms);
}

double log_pred_score(const Eigen::VectorXd& posterior, const Eigen::VectorXd& new_losses,
                      const ScoringFunction& g) {
  return log_pred_score_log(posterior.array().log(), new_losses, g);
}

double prequential_score(const DiscreteGeneralModel& model, std::span<const int> order,
                         const ScoringFunction& g) {
  std::vector<char> seen(static_cast<std::size_t>(model.size()), 0);
  for (int i : order) {
    if (i < 0 || i >= model.size() || seen[static_cast<std::size_t>(i)])
      throw ValidationError("order must be a permutation of the observations");
    seen[static_cast<std::size_t>(i)] = 1;
  }
  if (static_cast<int>(order.size()) != model.size())
    throw ValidationError("order must be a permutation of the observations");

  Eigen::VectorXd log_post = general_update_log(model, {});
  double total = 0.0;
  for (int i : order) {
    total += log_pred_score_log(log_post, model.loss.col(i), g);
    log_post -= model.w * model.loss.col(i);
    const double norm = lse(log_post);
    if (!std::isfinite(norm)) throw DegeneratePosteriorError("general Bayesian posterior has no mass");
    log_post.array() -= norm;
  }
  return total;
}

double batch_score(const DiscreteGeneralModel& model, const ScoringFunction& g) {
  const Eigen::VectorXd total_loss = model.loss.rowwise().sum();
  return log_pred_score_log(model.prior.array().log(), total_loss, g);
}

double coherence_residual(const DiscreteGeneralModel& model, const ScoringFunction& g,
                          std::uint64_t seed) {
  const int n = model.size();
  IndexSet order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const double base = prequential_score(model, order, g);
  double worst = std::abs(base - batch_score(model, g));
  if (n <= 6) {
    while (std::next_permutation(order.begin(), order.end()))
      worst = std::max(worst, std::abs(prequential_score(model, order, g) - base));
  } else {
    Rng rng(seed);
    for (int s = 0; s < 200; ++s) {
      for (int i = n - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)],
                  order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
      worst = std::max(worst, std::abs(prequential_score(model, order, g) - base));
    }
  }
  return worst;
}

nlohmann::json OrderInvarianceReport::to_json() const {
  nlohmann::json j;
  j["trials"] = trials;
  j["seed"] = seed;
  j["coherent_tolerance"] = coherent_tolerance;
  j["incoherent_threshold"] = incoherent_threshold;
  j["required_incoherent_fraction"] = required_incoherent_fraction;
  j["families"] = nlohmann::json::array();
  for (const auto& f : families) {
    j["families"].push_back({{"family", f.family},
                             {"trials", f.trials},
                             {"expected", f.expected_coherent ? "coherent" : "incoherent"},
                             {"trivial", f.trivial},
                             {"coherent_trials", f.coherent},
                             {"incoherent_trials", f.incoherent},
                             {"residual_min", f.min_residual},
                             {"residual_median", f.median_residual},
                             {"residual_max", f.max_residual},
                             {"verdict", f.pass ? "PASS" : "FAIL"}});
  }
  j["verdict"] = pass ? "PASS" : "FAIL";
  return j;
}

namespace {

DiscreteGeneralModel random_instance(std::uint64_t seed) {
  Rng rng(seed);
  const int m = 2 + static_cast<int>(rng.below(4));
  const int n = 2 + static_cast<int>(rng.below(3));
  constexpr double kScales[] = {0.5, 1.0, 2.0};
  DiscreteGeneralModel model;
  model.w = kScales[rng.below(3)];
  model.loss.resize(m, n);
  for (int k = 0; k < m; ++k)
    for (int i = 0; i < n; ++i) model.loss(k, i) = 5.0 * rng.uniform();
  model.prior.resize(m);
  for (int k = 0; k < m; ++k) model.prior[k] = -std::log(rng.uniform());
  model.prior /= model.prior.sum();
  return model;
}

struct Family {
  std::string label;
  bool expected_coherent;
  bool trivial;
  ScoringFunction (*make)(double w);
};

}  // namespace

OrderInvarianceReport verify_order_invariance(int trials, std::uint64_t seed, Exec exec) {
  if (trials < 1) throw ValidationError("trial count must be at least 1");
  const std::vector<Family> families = {
      {"exp_neg(w)", true, false, [](double w) { return ScoringFunction::exp_neg(w); }},
      {"exp_neg(0)", true, true, [](double) { return ScoringFunction::exp_neg(0.0); }},
      {"exp_neg(2w)", false, false, [](double w) { return ScoringFunction::exp_neg(2.0 * w); }},
      {"inverse_shift", false, false, [](double) { return ScoringFunction::inverse_shift(); }},
      {"power(2)", false, false, [](double) { return ScoringFunction::power(2.0); }},
      {"gaussian", false, false, [](double) { return ScoringFunction::gaussian(); }},
  };

  const std::size_t f_count = families.size();
  std::vector<double> residual(static_cast<std::size_t>(trials) * f_count);
  parallel_for(trials, exec, [&](std::int64_t t) {
    const std::uint64_t trial_seed = derive_seed(seed, static_cast<std::uint64_t>(t));
    DiscreteGeneralModel model = random_instance(trial_seed);
    model.validate();
    for (std::size_t f = 0; f < f_count; ++f)
      residual[static_cast<std::size_t>(t) * f_count + f] =
          coherence_residual(model, families[f].make(model.w), derive_seed(trial_seed, 1));
  });

  OrderInvarianceReport report;
  report.trials = trials;
  report.seed = seed;
  report.pass = true;
  for (std::size_t f = 0; f < f_count; ++f) {
    FamilyReport fr;
    fr.family = families[f].label;
    fr.trials = trials;
    fr.expected_coherent = families[f].expected_coherent;
    fr.trivial = families[f].trivial;
    std::vector<double> r;
    for (int t = 0; t < trials; ++t) r.push_back(residual[static_cast<std::size_t>(t) * f_count + f]);
    for (double v : r) {
      if (v < report.coherent_tolerance) ++fr.coherent;
      if (v > report.incoherent_threshold) ++fr.incoherent;
    }
    std::sort(r.begin(), r.end());
    fr.min_residual = r.front();
    fr.max_residual = r.back();
    fr.median_residual = r[r.size() / 2];
    fr.pass = fr.expected_coherent
                  ? fr.coherent == trials
                  : static_cast<double>(fr.incoherent) >=
                        report.required_incoherent_fraction * static_cast<double>(trials);
    report.pass = report.pass && fr.pass;
    report.families.push_back(fr);
  }
  return report;
}

}  // namespace bayescv::gbayes
