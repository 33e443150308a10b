#pragma once

// Monte Carlo estimators of cumulative cross-validation scores for datasets
// too large to enumerate, with robust aggregation and run-level errors.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bayescv/core.hpp"
#include "bayescv/exact_scorer.hpp"
#include "bayescv/model.hpp"

namespace bayescv::mc {

enum class AggregationKind { mean, median, trimmed };

struct Aggregation {
  AggregationKind kind = AggregationKind::mean;
  double trim = 0.05;  // per-tail fraction for trimmed

  std::string name() const;  // "mean", "median", "trimmed(0.05)"
  /// Accepts "mean", "median", "trimmed" and "trimmed(<alpha>)".
  static Aggregation parse(const std::string& text);
  bool operator==(const Aggregation&) const = default;
};

/// Mean (pairwise, index order), median, or symmetric trimmed mean.
double aggregate(std::vector<double> values, const Aggregation& how);

struct McOptions {
  int splits = 1000;  // T
  std::uint64_t seed = 0;
  Aggregation aggregation{};
  /// Lower clamp applied to every per-split value; without it a -inf split
  /// fails a mean-aggregated run.
  std::optional<double> floor;
  Exec exec = Exec::parallel;
};

struct McEstimate {
  double value = 0.0;
  /// SD of run values over sqrt(R); present only when R >= 2.
  std::optional<double> std_error;
  int splits = 0;  // T
  int draws = 0;   // B, 0 for exact inner terms
  int runs = 1;    // R
  Aggregation aggregation{};
  std::vector<double> per_run;
  int degenerate_splits = 0;
  std::uint64_t seed = 0;
  double split_sd = 0.0;  // sample SD of finite per-split values (single runs)

  nlohmann::json to_json() const;
};

/// Generic split-averaging kernel: T splits with |test| = p drawn uniformly
/// with replacement; split t uses seed derive_seed(seed, t) and its inner
/// term gets derive_seed(split seed, 1).
McEstimate estimate_split_average(
    int n, int p, const McOptions& options,
    const std::function<double(const Split&, std::uint64_t)>& inner);

/// Aggregate of log p(y_test | y_train) over random size-P test sets;
/// expectation S_CCV(y; P) under mean aggregation.
McEstimate estimate_ccv_exact_inner(const ExactPredictiveModel& model, int P,
                                    const McOptions& options);

/// Posterior-draw estimator: mean over splits of
/// log((1/B) sum_b f_{theta_b}(y_test)), theta_b ~ pi(theta | y_train).
/// Biased for finite B (log of an unbiased mean).
McEstimate estimate_ccv_sampled(const SampledModel& model, int P, int draws,
                                const McOptions& options);

/// p^(t) ~ U{1..P}, a uniform size-p^(t) test set, and the term
/// P * (1/p) sum_j log p(y_j | y_train); expectation sum_{p<=P} S_CV(y; p).
McEstimate estimate_ccv_mixed_p(const ExactPredictiveModel& model, int P,
                                const McOptions& options);

/// Subsampled S_CV(y; p).
McEstimate estimate_scv(const ExactPredictiveModel& model, int p, const McOptions& options);

/// R independent runs with seeds derive_seed(master_seed, r); value is the
/// mean run value and std_error = sd(run values) / sqrt(R).
McEstimate repeat_runs(const std::function<McEstimate(std::uint64_t)>& run, int runs,
                       std::uint64_t master_seed);

/// Prep curve for large n: S_CV(p) exactly when C(n,p) <= options.splits,
/// otherwise from options.splits random splits; S_CCV(P) * n / P from
/// estimate_ccv_exact_inner. p = 1..n-1.
exact::PrepCurve estimate_prep_curve(const ExactPredictiveModel& model, const McOptions& options);

}  // namespace bayescv::mc
