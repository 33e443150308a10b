#include "bayescv/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace bayescv {

std::uint64_t binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  // result * (n - k + i) is divisible by i at every step.
  unsigned __int128 result = 1;
  for (int i = 1; i <= k; ++i) {
    result = result * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
    if (result > kMax) return kMax;
  }
  return static_cast<std::uint64_t>(result);
}

void check_split_args(int n, int p) {
  if (n < 1) throw ValidationError("dataset size must be at least 1");
  if (p < 1 || p > n)
    throw ValidationError("test-set size p=" + std::to_string(p) + " outside [1, " +
                          std::to_string(n) + "]");
}

Split split_from_test(int n, IndexSet test) {
  Split split;
  split.test = std::move(test);
  split.train.reserve(static_cast<std::size_t>(n) - split.test.size());
  std::size_t k = 0;
  for (int i = 0; i < n; ++i) {
    if (k < split.test.size() && split.test[k] == i) {
      ++k;
    } else {
      split.train.push_back(i);
    }
  }
  return split;
}

IndexSet unrank_combination(int n, int p, std::uint64_t rank) {
  IndexSet out;
  out.reserve(static_cast<std::size_t>(p));
  int next = 0;
  for (int slot = 0; slot < p; ++slot) {
    // Skip leading elements while the remaining rank exceeds the block of
    // combinations that start with `next`.
    for (;; ++next) {
      const std::uint64_t block = binomial(n - next - 1, p - slot - 1);
      if (rank < block) break;
      rank -= block;
    }
    out.push_back(next);
    ++next;
  }
  return out;
}

std::vector<Split> enumerate_splits(int n, int p, std::uint64_t cap) {
  check_split_args(n, p);
  const std::uint64_t count = binomial(n, p);
  if (count > cap)
    throw EnumerationCapError("C(" + std::to_string(n) + "," + std::to_string(p) +
                              ") exceeds the enumeration cap of " + std::to_string(cap) +
                              "; use the Monte Carlo scorer instead");
  std::vector<Split> splits;
  splits.reserve(count);
  IndexSet test(static_cast<std::size_t>(p));
  std::iota(test.begin(), test.end(), 0);
  for (;;) {
    splits.push_back(split_from_test(n, test));
    int i = p - 1;
    while (i >= 0 && test[i] == n - p + i) --i;
    if (i < 0) break;
    ++test[i];
    for (int j = i + 1; j < p; ++j) test[j] = test[j - 1] + 1;
  }
  return splits;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

Rng::Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

double Rng::uniform() {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() { return normal_(engine_); }

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  for (;;) {
    const std::uint64_t draw = engine_();
    if (draw < limit) return draw % bound;
  }
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index d) {
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z[i] = normal();
  return z;
}

Split sample_split(int n, int p, std::uint64_t seed) {
  check_split_args(n, p);
  Rng rng(seed);
  // Floyd's algorithm: a uniform p-subset in p draws.
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  for (int j = n - p; j < n; ++j) {
    const int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(j) + 1));
    if (chosen[t]) {
      chosen[j] = 1;
    } else {
      chosen[t] = 1;
    }
  }
  Split split;
  split.test.reserve(static_cast<std::size_t>(p));
  split.train.reserve(static_cast<std::size_t>(n - p));
  for (int i = 0; i < n; ++i) (chosen[i] ? split.test : split.train).push_back(i);
  return split;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double top = *std::max_element(values.begin(), values.end());
  if (std::isnan(top)) return top;
  if (std::isinf(top)) return top;
  double acc = 0.0;
  for (double v : values) {
    if (std::isnan(v)) return v;
    acc += std::exp(v - top);
  }
  return top + std::log(acc);
}

double log_mean_exp(std::span<const double> values) {
  if (values.empty()) throw ValidationError("log_mean_exp of an empty sequence");
  const double top = *std::max_element(values.begin(), values.end());
  if (std::isinf(top) || std::isnan(top)) return top;
  double acc = 0.0;
  for (double v : values) {
    if (std::isnan(v)) return v;
    acc += std::exp(v - top);
  }
  return top + std::log(acc / static_cast<double>(values.size()));
}

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kLeaf = 16;
  if (values.size() <= kLeaf) {
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double ScoreDecomposition::sum_per_p() const {
  std::vector<double> values;
  values.reserve(per_p.size());
  for (const auto& [p, v] : per_p) values.push_back(v);
  return pairwise_sum(values);
}

double ScoreDecomposition::max_residual() const {
  double worst = std::abs(sum_per_p() - log_marginal);
  for (const auto& [P, c] : ccv) {
    const auto it = pcv.find(P);
    if (it != pcv.end()) worst = std::max(worst, std::abs(c + it->second - log_marginal));
  }
  return worst;
}

}  // namespace bayescv
