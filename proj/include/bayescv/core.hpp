#pragma once

// Shared data model, split enumeration/sampling, seeding and log-space
// reductions used by every scorer.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bayescv {

/// Internal indices are 0-based; external formats use 1-based indices.
using IndexSet = std::vector<int>;

/// Execution path for kernels that have a serial reference and an OpenMP path.
/// Both paths produce bit-identical results.
enum class Exec { serial, parallel };

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments or malformed input.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Exhaustive enumeration would exceed the configured cap.
class EnumerationCapError : public Error {
 public:
  using Error::Error;
};

/// Cholesky failure or another loss of positive-definiteness.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A verified identity did not hold within tolerance.
class IdentityError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::uint64_t kEnumerationCap = 1'000'000;

/// Binomial coefficient, saturating at UINT64_MAX.
std::uint64_t binomial(int n, int k);

struct Split {
  IndexSet train;
  IndexSet test;
};

/// Builds a split from a sorted test set; train is the sorted complement.
Split split_from_test(int n, IndexSet test);

/// The rank-th p-subset of {0..n-1} in lexicographic order.
IndexSet unrank_combination(int n, int p, std::uint64_t rank);

/// All C(n,p) splits in lexicographic order of the test set.
/// Throws EnumerationCapError when C(n,p) > cap.
std::vector<Split> enumerate_splits(int n, int p, std::uint64_t cap = kEnumerationCap);

/// Uniformly random size-p test set, deterministic in `seed`.
Split sample_split(int n, int p, std::uint64_t seed);

/// Counter-based seed derivation: the seed of task `index` under `master`.
/// Independent of evaluation order, so parallel loops stay reproducible.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Per-task random stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  double uniform();            // (0,1)
  double normal();             // standard normal
  std::uint64_t below(std::uint64_t bound);  // uniform on {0..bound-1}
  Eigen::VectorXd normal_vector(Eigen::Index d);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// log((1/B) sum exp(v_i)), max-shifted. All -inf gives -inf.
double log_mean_exp(std::span<const double> values);
double log_sum_exp(std::span<const double> values);

/// Pairwise (tree) summation in index order; the reduction every kernel uses.
double pairwise_sum(std::span<const double> values);

void check_split_args(int n, int p);

/// Responses plus optional covariates.
struct Dataset {
  Eigen::VectorXd y;
  std::optional<Eigen::MatrixXd> x;
  std::vector<std::string> covariate_names;

  Eigen::Index size() const { return y.size(); }
  bool is_binary() const;
  /// Column of x by name; throws ValidationError when absent.
  Eigen::VectorXd covariate(const std::string& name) const;
  void validate() const;
};

Dataset read_dataset_csv(const std::string& path);
Dataset parse_dataset_csv(const std::string& text);

/// Per-p leave-p-out scores and their cumulative/preparatory sums.
struct ScoreDecomposition {
  int n = 0;
  std::map<int, double> per_p;  // p -> S_CV(y; p)
  double log_marginal = 0.0;
  std::map<int, double> ccv;    // P -> S_CCV(y; P)
  std::map<int, double> pcv;    // P -> S_PCV(y; P)

  double sum_per_p() const;
  /// max(|sum_p per_p - log_marginal|, max_P |ccv + pcv - log_marginal|)
  double max_residual() const;
};

}  // namespace bayescv
