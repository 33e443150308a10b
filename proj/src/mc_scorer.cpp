#include "bayescv/mc_scorer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "bayescv/format.hpp"
#include "bayescv/parallel.hpp"

namespace bayescv::mc {

std::string Aggregation::name() const {
  switch (kind) {
    case AggregationKind::mean:
      return "mean";
    case AggregationKind::median:
      return "median";
    case AggregationKind::trimmed:
      return "trimmed(" + format_exact(trim) + ")";
  }
  return "mean";
}

Aggregation Aggregation::parse(const std::string& text) {
  if (text == "mean") return {AggregationKind::mean, 0.05};
  if (text == "median") return {AggregationKind::median, 0.05};
  if (text == "trimmed") return {AggregationKind::trimmed, 0.05};
  if (text.rfind("trimmed(", 0) == 0 && text.back() == ')') {
    const std::string inner = text.substr(8, text.size() - 9);
    double alpha = 0.0;
    const auto [ptr, ec] = std::from_chars(inner.data(), inner.data() + inner.size(), alpha);
    if (ec == std::errc() && ptr == inner.data() + inner.size() && alpha >= 0.0 && alpha < 0.5)
      return {AggregationKind::trimmed, alpha};
  }
  throw ValidationError("unknown aggregation '" + text +
                        "' (expected mean, median or trimmed(<alpha in [0,0.5)>))");
}

double aggregate(std::vector<double> values, const Aggregation& how) {
  if (values.empty()) throw ValidationError("cannot aggregate an empty sample");
  switch (how.kind) {
    case AggregationKind::mean:
      return pairwise_sum(values) / static_cast<double>(values.size());
    case AggregationKind::median: {
      std::sort(values.begin(), values.end());
      const std::size_t m = values.size() / 2;
      return values.size() % 2 == 1 ? values[m] : 0.5 * (values[m - 1] + values[m]);
    }
    case AggregationKind::trimmed: {
      std::sort(values.begin(), values.end());
      const auto cut = static_cast<std::size_t>(std::floor(how.trim * static_cast<double>(values.size())));
      const std::span<const double> kept(values.data() + cut, values.size() - 2 * cut);
      return pairwise_sum(kept) / static_cast<double>(kept.size());
    }
  }
  return 0.0;
}

nlohmann::json McEstimate::to_json() const {
  nlohmann::json j;
  j["value"] = value;
  j["stderr"] = std_error ? nlohmann::json(*std_error) : nlohmann::json(nullptr);
  j["T"] = splits;
  j["B"] = draws;
  j["R"] = runs;
  j["aggregation"] = aggregation.name();
  j["per_run"] = per_run;
  j["degenerate_splits"] = degenerate_splits;
  j["seed"] = seed;
  return j;
}

namespace {

void check_options(const McOptions& options) {
  if (options.splits < 1) throw ValidationError("split count T must be at least 1");
}

void check_cumulative_size(int n, int P) {
  if (P < 1 || P >= n)
    throw ValidationError("P=" + std::to_string(P) + " outside [1, n-1] for n=" + std::to_string(n));
}

double sample_sd(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = pairwise_sum(values) / static_cast<double>(values.size());
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

McEstimate finish(std::vector<double> values, const McOptions& options) {
  McEstimate est;
  est.splits = options.splits;
  est.aggregation = options.aggregation;
  est.seed = options.seed;
  for (double& v : values) {
    if (!(v > -std::numeric_limits<double>::infinity())) {  // -inf or NaN
      ++est.degenerate_splits;
      v = -std::numeric_limits<double>::infinity();
    }
    if (options.floor) v = std::max(v, *options.floor);
  }
  if (est.degenerate_splits > 0 && !options.floor &&
      options.aggregation.kind == AggregationKind::mean)
    throw NumericalError(std::to_string(est.degenerate_splits) + " of " +
                         std::to_string(values.size()) +
                         " splits gave a -inf inner term; set a floor or use a robust "
                         "aggregation");
  std::vector<double> finite;
  finite.reserve(values.size());
  for (double v : values)
    if (std::isfinite(v)) finite.push_back(v);
  est.split_sd = sample_sd(finite);
  est.value = aggregate(std::move(values), options.aggregation);
  est.per_run = {est.value};
  return est;
}

}  // namespace

McEstimate estimate_split_average(
    int n, int p, const McOptions& options,
    const std::function<double(const Split&, std::uint64_t)>& inner) {
  check_options(options);
  check_split_args(n, p);
  std::vector<double> values(static_cast<std::size_t>(options.splits));
  parallel_for(options.splits, options.exec, [&](std::int64_t t) {
    const std::uint64_t split_seed = derive_seed(options.seed, static_cast<std::uint64_t>(t));
    const Split split = sample_split(n, p, split_seed);
    try {
      values[static_cast<std::size_t>(t)] = inner(split, derive_seed(split_seed, 1));
    } catch (const Error& e) {
      throw Error("split " + std::to_string(t) + ": " + e.what());
    }
  });
  return finish(std::move(values), options);
}

McEstimate estimate_ccv_exact_inner(const ExactPredictiveModel& model, int P,
                                    const McOptions& options) {
  check_cumulative_size(model.size(), P);
  return estimate_split_average(model.size(), P, options,
                                [&](const Split& split, std::uint64_t) {
                                  return model.log_block_predictive(split.train, split.test);
                                });
}

McEstimate estimate_ccv_sampled(const SampledModel& model, int P, int draws,
                                const McOptions& options) {
  check_cumulative_size(model.size(), P);
  if (draws < 2) throw ValidationError("posterior draw count B must be at least 2");
  McEstimate est = estimate_split_average(
      model.size(), P, options, [&](const Split& split, std::uint64_t seed) {
        const Eigen::MatrixXd theta = model.posterior_sample(split.train, draws, seed);
        std::vector<double> loglik(static_cast<std::size_t>(draws));
        for (int b = 0; b < draws; ++b)
          loglik[static_cast<std::size_t>(b)] = model.log_likelihood_block(theta.col(b), split.test);
        return log_mean_exp(loglik);
      });
  est.draws = draws;
  return est;
}

McEstimate estimate_ccv_mixed_p(const ExactPredictiveModel& model, int P,
                                const McOptions& options) {
  const int n = model.size();
  check_cumulative_size(n, P);
  check_options(options);
  std::vector<double> values(static_cast<std::size_t>(options.splits));
  parallel_for(options.splits, options.exec, [&](std::int64_t t) {
    const std::uint64_t task_seed = derive_seed(options.seed, static_cast<std::uint64_t>(t));
    Rng rng(task_seed);
    const int p = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(P)));
    const Split split = sample_split(n, p, derive_seed(task_seed, 1));
    values[static_cast<std::size_t>(t)] =
        static_cast<double>(P) * model.sum_pointwise_log_predictive(split.train, split.test) /
        static_cast<double>(p);
  });
  return finish(std::move(values), options);
}

McEstimate estimate_scv(const ExactPredictiveModel& model, int p, const McOptions& options) {
  return estimate_split_average(model.size(), p, options, [&](const Split& split, std::uint64_t) {
    return model.sum_pointwise_log_predictive(split.train, split.test) / static_cast<double>(p);
  });
}

McEstimate repeat_runs(const std::function<McEstimate(std::uint64_t)>& run, int runs,
                       std::uint64_t master_seed) {
  if (runs < 2) throw ValidationError("a run-level standard error needs R >= 2 runs");
  McEstimate out;
  out.runs = runs;
  out.seed = master_seed;
  for (int r = 0; r < runs; ++r) {
    const McEstimate one = run(derive_seed(master_seed, static_cast<std::uint64_t>(r)));
    if (r == 0) {
      out.splits = one.splits;
      out.draws = one.draws;
      out.aggregation = one.aggregation;
    }
    out.degenerate_splits += one.degenerate_splits;
    out.per_run.push_back(one.value);
  }
  out.value = pairwise_sum(out.per_run) / static_cast<double>(runs);
  out.std_error = sample_sd(out.per_run) / std::sqrt(static_cast<double>(runs));
  out.split_sd = 0.0;
  return out;
}

exact::PrepCurve estimate_prep_curve(const ExactPredictiveModel& model, const McOptions& options) {
  const int n = model.size();
  check_options(options);
  exact::PrepCurve curve;
  curve.n = n;
  curve.subsampled = false;
  for (int p = 1; p < n; ++p) {
    exact::PrepCurveRow row;
    row.p = p;
    row.n_minus_p = n - p;
    if (binomial(n, p) <= static_cast<std::uint64_t>(options.splits)) {
      row.s_cv = exact::leave_p_out_score(model, p, options.exec);
    } else {
      McOptions scv = options;
      scv.seed = derive_seed(options.seed, 2 * static_cast<std::uint64_t>(p));
      const McEstimate est = estimate_scv(model, p, scv);
      row.s_cv = est.value;
      row.s_cv_stderr = est.split_sd / std::sqrt(static_cast<double>(options.splits));
      curve.subsampled = true;
    }
    McOptions ccv = options;
    ccv.seed = derive_seed(options.seed, 2 * static_cast<std::uint64_t>(p) + 1);
    if (binomial(n, p) <= static_cast<std::uint64_t>(options.splits)) {
      row.s_ccv_normalized = exact::average_over_splits(
          n, p, options.exec, kEnumerationCap,
          [&](const Split& split) { return model.log_block_predictive(split.train, split.test); });
    } else {
      const McEstimate est = estimate_ccv_exact_inner(model, p, ccv);
      row.s_ccv_normalized = est.value;
      row.s_ccv_stderr = est.split_sd / std::sqrt(static_cast<double>(options.splits));
      curve.subsampled = true;
    }
    const double scale = static_cast<double>(n) / static_cast<double>(p);
    row.s_ccv_normalized *= scale;
    row.s_ccv_stderr *= scale;
    curve.rows.push_back(row);
  }
  return curve;
}

}  // namespace bayescv::mc
