#pragma once

// Exhaustive-enumeration scorer: leave-p-out, cumulative and preparatory
// cross-validation scores and the evidence decomposition, each computed by
// two independent routes where an identity links them.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "json.hpp"

#include "bayescv/core.hpp"
#include "bayescv/model.hpp"

namespace bayescv::exact {

/// Identity tolerance for double precision with n <= 20 accumulations.
inline constexpr double kIdentityTolerance = 1e-8;

/// Largest n for which the 2^n subset evidences are memoized.
inline constexpr int kMaxDecomposeSize = 20;

/// S_CV(y; p): mean over all C(n,p) test sets of the per-point mean of
/// log p(y_j | y_train), each test point scored given the training set only.
double leave_p_out_score(const ExactPredictiveModel& model, int p, Exec exec = Exec::parallel,
                         std::uint64_t cap = kEnumerationCap);

/// S_CV for p = 1..n from memoized subset evidences, with the full-data
/// evidence computed independently. Throws IdentityError when
/// |sum_p S_CV - log p(y)| exceeds kIdentityTolerance.
ScoreDecomposition decompose_marginal(const ExactPredictiveModel& model,
                                      Exec exec = Exec::parallel);

/// A score computed by two routes that an identity says must agree.
struct TwoFormScore {
  double value = 0.0;      // the returned form
  double alternate = 0.0;  // the other form
  double residual = 0.0;   // |value - alternate|
};

/// S_PCV(y; P) as the mean training-set evidence over all C(n,P) splits;
/// alternate is sum_{p=P+1}^{n} S_CV(y; p).
TwoFormScore preparatory_score(const ExactPredictiveModel& model, int P,
                               Exec exec = Exec::parallel, std::uint64_t cap = kEnumerationCap);

/// S_CCV(y; P) as sum_{p=1}^{P} S_CV(y; p); alternate is the mean block
/// predictive log p(y_test | y_train) over all C(n,P) splits.
TwoFormScore cumulative_score_exact(const ExactPredictiveModel& model, int P,
                                    Exec exec = Exec::parallel,
                                    std::uint64_t cap = kEnumerationCap);

struct PrepCurveRow {
  int p = 0;
  int n_minus_p = 0;
  double s_cv = 0.0;
  double s_ccv_normalized = 0.0;  // S_CCV(y; P=p) * n / p
  double s_cv_stderr = 0.0;       // nonzero only for subsampled rows
  double s_ccv_stderr = 0.0;
};

struct PrepCurve {
  int n = 0;
  std::vector<PrepCurveRow> rows;  // p = 1..n-1
  bool subsampled = false;
};

/// Exact curve for p = 1..n-1 (p = n omitted); requires n <= kMaxDecomposeSize.
PrepCurve prep_curve(const ExactPredictiveModel& model, Exec exec = Exec::parallel);

/// CSV with columns p, n_minus_p, s_cv, s_ccv_normalized.
void write_prep_curve_csv(std::ostream& out, const PrepCurve& curve);

nlohmann::json to_json(const ScoreDecomposition& decomposition);

/// Mean over all C(n,p) splits of f(split), reduced in rank order.
template <class F>
double average_over_splits(int n, int p, Exec exec, std::uint64_t cap, F&& f);

}  // namespace bayescv::exact

#include "bayescv/parallel.hpp"

namespace bayescv::exact {

template <class F>
double average_over_splits(int n, int p, Exec exec, std::uint64_t cap, F&& f) {
  check_split_args(n, p);
  const std::uint64_t count = binomial(n, p);
  if (count > cap)
    throw EnumerationCapError("C(" + std::to_string(n) + "," + std::to_string(p) +
                              ") exceeds the enumeration cap of " + std::to_string(cap) +
                              "; use the Monte Carlo scorer instead");
  std::vector<double> values(count);
  parallel_for(static_cast<std::int64_t>(count), exec, [&](std::int64_t t) {
    const Split split =
        split_from_test(n, unrank_combination(n, p, static_cast<std::uint64_t>(t)));
    values[static_cast<std::size_t>(t)] = f(split);
  });
  return pairwise_sum(values) / static_cast<double>(count);
}

}  // namespace bayescv::exact
