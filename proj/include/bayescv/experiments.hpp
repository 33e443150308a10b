#pragma once

// Experiment configuration and runners behind the command-line tool. Each
// runner is a pure function of its config; writers emit CSV with 6
// significant digits and JSON with full precision.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bayescv/exact_scorer.hpp"
#include "bayescv/general_bayes.hpp"
#include "bayescv/mc_scorer.hpp"

namespace bayescv {

/// A count or scale given either absolutely ("50") or relative to n ("0.9n").
struct Scaled {
  double factor = 0.0;
  bool relative = false;

  static Scaled parse(const std::string& text);
  std::string str() const;
  double value(int n) const { return relative ? factor * n : factor; }
  /// Rounded to the nearest integer.
  int count(int n) const;
  bool operator==(const Scaled&) const = default;
};

enum class Experiment { table1, figure_prep, identity_suite, coherence_suite, probit, score };

std::string to_string(Experiment e);
Experiment parse_experiment(const std::string& text);

enum class CcvEstimator { exact_inner, sampled, mixed_p };

/// Flat key=value configuration; `#` starts a comment. Unknown keys are errors.
struct ExperimentConfig {
  Experiment experiment = Experiment::score;
  std::uint64_t seed = 0;
  std::string out_dir = ".";

  // polynomial regression
  int n = 100;
  std::vector<double> theta{1.0, 0.5};
  double noise_variance = 1.0;
  double x_low = -1.0;
  double x_high = 1.0;
  double intercept_sd = 100.0;
  std::vector<double> coef_variances{0.1, 1.0, 1e4};
  std::vector<int> degrees{0, 1, 2};
  double figure_coef_variance = 1.0;

  // Monte Carlo
  std::vector<Scaled> P{{0.9, true}, {0.5, true}, {0.1, true}};
  int T = 10000;
  int B = 0;  // posterior draws per split; 0 uses exact inner terms
  int R = 10;
  CcvEstimator estimator = CcvEstimator::exact_inner;
  mc::Aggregation aggregation{};
  std::optional<double> floor;

  // verification suites
  int instances = 50;
  int max_n = 10;
  int max_degree = 3;
  bool corrupt = false;
  int trials = 200;

  // probit
  std::string data;
  std::vector<Scaled> g{{1.0, true}, {10.0, true}};
  std::vector<std::vector<std::string>> models{{"glu", "bp", "ped"}, {"glu", "bp"}};
  int S = 1000;
  int gibbs_iterations = 5000;
  int gibbs_burn_in = 1000;
  int synthetic_n = 332;
  std::vector<double> synthetic_theta{-0.6, 1.0, 0.1, 0.2};
  /// Redraw simulated data until the Wald z^2 of the last coefficient of the
  /// first model lies in the middle half of [log(1 + w g_min), log(1 + w g_max)],
  /// w the observed information of that coefficient relative to X^T X.
  bool synthetic_calibrate = true;

  // score
  int degree = 1;
  double coef_variance = 1.0;

  void validate() const;
  bool operator==(const ExperimentConfig&) const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig read_config(const std::filesystem::path& path);
/// Every key in a fixed order, doubles in shortest round-trip form.
std::string serialize_config(const ExperimentConfig& config);

// -- Table 1 ---------------------------------------------------------------

struct Table1Row {
  double coef_variance = 0.0;
  int degree = 0;
  double log_marginal = 0.0;
  std::vector<mc::McEstimate> ccv;  // per P, scaled by n/P
};

struct Table1Result {
  int n = 0;
  std::vector<int> P;
  std::vector<Table1Row> rows;
  double max_stderr = 0.0;

  /// argmax over degree of log p and of each CCV column, for one prior.
  int best_marginal(double coef_variance) const;
  int best_ccv(double coef_variance, std::size_t p_index) const;
};

/// One dataset per master seed shared by every prior setting; split seeds
/// are shared across priors and degrees so comparisons are paired.
Table1Result run_table1(const ExperimentConfig& config);
void write_table1_csv(std::ostream& out, const Table1Result& result);
nlohmann::json to_json(const Table1Result& result);

// -- prep curves -----------------------------------------------------------

struct FigurePrepResult {
  int n = 0;
  double coef_variance = 0.0;
  std::vector<int> degrees;
  std::vector<exact::PrepCurve> curves;  // per degree
};

/// Exact curves when n <= exact::kMaxDecomposeSize, otherwise Monte Carlo
/// with T splits per point.
FigurePrepResult run_figure_prep(const ExperimentConfig& config);
/// Long format: panel,degree,p,n_minus_p,value,stderr.
void write_figure_prep_csv(std::ostream& out, const FigurePrepResult& result);

// -- identity suite --------------------------------------------------------

struct IdentityInstance {
  int n = 0;
  int degree = 0;
  double coef_variance = 0.0;
  double log_marginal = 0.0;
  double residual_memo = 0.0;    // evidence-memo route of the decomposition
  double residual_direct = 0.0;  // |sum_p leave_p_out_score - log p(y)|
  double residual_pcv = 0.0;     // max over P of the two S_PCV forms
  double residual_ccv = 0.0;     // max over P of the two S_CCV forms
  bool pass = false;
};

struct IdentityReport {
  double tolerance = exact::kIdentityTolerance;
  bool corrupted = false;
  std::vector<IdentityInstance> instances;
  double seconds = 0.0;
  bool pass = false;

  nlohmann::json to_json() const;
};

/// Random conjugate instances; the first has n = 1. With `corrupt` the
/// pointwise predictive is perturbed, which the direct route must detect.
IdentityReport run_identity_suite(const ExperimentConfig& config);

// -- coherence suite -------------------------------------------------------

struct WorkedInstance {
  double posterior_first = 0.0;  // pi(theta = 0 | y1)
  double log_second_factor = 0.0;
  double lhs = 0.0;              // exp(S_G) along the chain
  double rhs = 0.0;              // batch form
  double inverse_shift_residual = 0.0;
};

/// Theta = {0,1}, p = 0.5, w = 1, losses l = (1,2) on y1 and h = (3,1) on y2.
gbayes::DiscreteGeneralModel worked_model();
WorkedInstance worked_instance();

struct CoherenceResult {
  gbayes::OrderInvarianceReport report;
  WorkedInstance worked;
  bool pass = false;

  nlohmann::json to_json() const;
};

CoherenceResult run_coherence(const ExperimentConfig& config);

// -- probit ----------------------------------------------------------------

struct ProbitCell {
  double g = 0.0;
  std::vector<std::string> columns;
  double log_marginal = 0.0;
  double log_marginal_ess = 0.0;
  mc::McEstimate ccv;  // scaled by n/P
};

struct ProbitResult {
  int n = 0;
  int P = 0;
  bool synthetic = false;
  int synthetic_attempt = -1;     // data seed index used when calibrating
  double last_wald_z2 = 0.0;      // first model, full data
  std::vector<ProbitCell> cells;  // g-major, then model
  double max_stderr = 0.0;
  /// posterior mean of the last coefficient of the first model, per g
  std::vector<double> gibbs_last_mean;
  std::vector<Eigen::MatrixXd> chains;  // first model, per g

  /// Index of the preferred model under g index `gi`.
  std::size_t best_marginal(std::size_t gi) const;
  std::size_t best_ccv(std::size_t gi) const;
};

/// Reads config.data when set, else simulates data from synthetic_theta
/// (attempt a uses seed derive_seed(seed, 1000 + a), at most 1000 attempts).
ProbitResult run_probit(const ExperimentConfig& config);
void write_probit_csv(std::ostream& out, const ProbitResult& result);
nlohmann::json to_json(const ProbitResult& result);

// -- score -----------------------------------------------------------------

struct ScoreResult {
  int n = 0;
  double log_marginal = 0.0;
  std::optional<ScoreDecomposition> decomposition;  // n <= kMaxDecomposeSize
  std::vector<int> P;
  std::vector<mc::McEstimate> ccv;  // unscaled S_CCV per P

  nlohmann::json to_json() const;
};

/// Polynomial model of config.degree on the CSV in config.data (covariate x).
ScoreResult run_score(const ExperimentConfig& config);

}  // namespace bayescv
