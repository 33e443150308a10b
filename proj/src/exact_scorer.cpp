#include "bayescv/exact_scorer.hpp"

#include <bit>
#include <cmath>
#include <ostream>

#include "bayescv/format.hpp"
#include "bayescv/parallel.hpp"

namespace bayescv::exact {

double leave_p_out_score(const ExactPredictiveModel& model, int p, Exec exec, std::uint64_t cap) {
  const int n = model.size();
  return average_over_splits(n, p, exec, cap, [&](const Split& split) {
    return model.sum_pointwise_log_predictive(split.train, split.test) / static_cast<double>(p);
  });
}

namespace {

IndexSet members(std::uint32_t mask) {
  IndexSet out;
  out.reserve(static_cast<std::size_t>(std::popcount(mask)));
  while (mask != 0) {
    out.push_back(std::countr_zero(mask));
    mask &= mask - 1;
  }
  return out;
}

}  // namespace

ScoreDecomposition decompose_marginal(const ExactPredictiveModel& model, Exec exec) {
  const int n = model.size();
  if (n < 1) throw ValidationError("dataset must contain at least one observation");
  if (n > kMaxDecomposeSize)
    throw EnumerationCapError("decomposition needs 2^" + std::to_string(n) +
                              " subset evidences; limit is n <= " +
                              std::to_string(kMaxDecomposeSize) +
                              ", use the Monte Carlo scorer instead");
  const std::uint32_t full = (n == 32) ? ~0u : ((1u << n) - 1u);
  const std::int64_t subsets = std::int64_t{1} << n;

  std::vector<double> evidence(static_cast<std::size_t>(subsets));
  parallel_for(subsets, exec, [&](std::int64_t mask) {
    const IndexSet idx = members(static_cast<std::uint32_t>(mask));
    evidence[static_cast<std::size_t>(mask)] = model.log_marginal(idx);
  });

  // Each training mask contributes the mean single-point predictive of its
  // complement; S_CV(p) averages those over the C(n,p) masks of size n-p.
  std::vector<double> contribution(static_cast<std::size_t>(subsets - 1));
  parallel_for(subsets - 1, exec, [&](std::int64_t m) {
    const auto mask = static_cast<std::uint32_t>(m);
    const int p = n - std::popcount(mask);
    double acc = 0.0;
    for (std::uint32_t rest = full & ~mask; rest != 0; rest &= rest - 1) {
      const std::uint32_t j = rest & (~rest + 1);
      acc += evidence[mask | j] - evidence[mask];
    }
    contribution[static_cast<std::size_t>(m)] = acc / static_cast<double>(p);
  });

  std::vector<std::vector<double>> by_p(static_cast<std::size_t>(n) + 1);
  for (std::int64_t m = 0; m < subsets - 1; ++m)
    by_p[static_cast<std::size_t>(n - std::popcount(static_cast<std::uint32_t>(m)))].push_back(
        contribution[static_cast<std::size_t>(m)]);

  ScoreDecomposition out;
  out.n = n;
  for (int p = 1; p <= n; ++p)
    out.per_p[p] = pairwise_sum(by_p[static_cast<std::size_t>(p)]) /
                   static_cast<double>(binomial(n, p));

  IndexSet all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  out.log_marginal = model.log_marginal(all);

  double running = 0.0;
  for (int P = 1; P < n; ++P) {
    running += out.per_p[P];
    out.ccv[P] = running;
    double rest = 0.0;
    for (int p = P + 1; p <= n; ++p) rest += out.per_p[p];
    out.pcv[P] = rest;
  }

  const double residual = out.max_residual();
  if (!(residual <= kIdentityTolerance))
    throw IdentityError("evidence decomposition residual " + format_g(residual, 3) +
                        " exceeds " + format_g(kIdentityTolerance, 3));
  return out;
}

TwoFormScore preparatory_score(const ExactPredictiveModel& model, int P, Exec exec,
                               std::uint64_t cap) {
  const int n = model.size();
  if (P < 1 || P >= n)
    throw ValidationError("preparatory size P=" + std::to_string(P) + " outside [1, n-1]");
  TwoFormScore score;
  score.value = average_over_splits(n, P, exec, cap, [&](const Split& split) {
    return model.log_marginal(split.train);
  });
  std::vector<double> terms;
  for (int p = P + 1; p <= n; ++p) terms.push_back(leave_p_out_score(model, p, exec, cap));
  score.alternate = pairwise_sum(terms);
  score.residual = std::abs(score.value - score.alternate);
  return score;
}

TwoFormScore cumulative_score_exact(const ExactPredictiveModel& model, int P, Exec exec,
                                    std::uint64_t cap) {
  const int n = model.size();
  if (P < 1 || P >= n)
    throw ValidationError("cumulative size P=" + std::to_string(P) + " outside [1, n-1]");
  TwoFormScore score;
  std::vector<double> terms;
  for (int p = 1; p <= P; ++p) terms.push_back(leave_p_out_score(model, p, exec, cap));
  score.value = pairwise_sum(terms);
  score.alternate = average_over_splits(n, P, exec, cap, [&](const Split& split) {
    return model.log_block_predictive(split.train, split.test);
  });
  score.residual = std::abs(score.value - score.alternate);
  return score;
}

PrepCurve prep_curve(const ExactPredictiveModel& model, Exec exec) {
  const ScoreDecomposition d = decompose_marginal(model, exec);
  PrepCurve curve;
  curve.n = d.n;
  for (int p = 1; p < d.n; ++p) {
    curve.rows.push_back({p, d.n - p, d.per_p.at(p),
                          d.ccv.at(p) * static_cast<double>(d.n) / static_cast<double>(p)});
  }
  return curve;
}

void write_prep_curve_csv(std::ostream& out, const PrepCurve& curve) {
  out << "p,n_minus_p,s_cv,s_ccv_normalized\n";
  for (const auto& row : curve.rows)
    out << row.p << ',' << row.n_minus_p << ',' << format_g(row.s_cv) << ','
        << format_g(row.s_ccv_normalized) << '\n';
}

nlohmann::json to_json(const ScoreDecomposition& d) {
  nlohmann::json j;
  j["n"] = d.n;
  j["log_marginal"] = d.log_marginal;
  j["per_p"] = nlohmann::json::array();
  for (const auto& [p, v] : d.per_p) j["per_p"].push_back({{"p", p}, {"s_cv", v}});
  j["ccv"] = nlohmann::json::array();
  for (const auto& [P, v] : d.ccv) j["ccv"].push_back({{"P", P}, {"s_ccv", v}});
  j["pcv"] = nlohmann::json::array();
  for (const auto& [P, v] : d.pcv) j["pcv"].push_back({{"P", P}, {"s_pcv", v}});
  j["sum_per_p"] = d.sum_per_p();
  j["max_residual"] = d.max_residual();
  return j;
}

}  // namespace bayescv::exact
