#include "bayescv/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "bayescv/conjlinear.hpp"
#include "bayescv/format.hpp"
#include "bayescv/probit.hpp"

namespace bayescv {

namespace {

IndexSet iota_set(int n) {
  IndexSet all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  return all;
}

int resolve_P(const Scaled& s, int n) {
  const int P = s.count(n);
  if (P < 1 || P >= n)
    throw ValidationError("P=" + s.str() + " resolves to " + std::to_string(P) +
                          ", outside [1, n-1] for n=" + std::to_string(n));
  return P;
}

mc::McOptions mc_options(const ExperimentConfig& c, std::uint64_t seed) {
  mc::McOptions o;
  o.splits = c.T;
  o.seed = seed;
  o.aggregation = c.aggregation;
  o.floor = c.floor;
  return o;
}

/// One or R runs of the configured S_CCV estimator.
mc::McEstimate estimate_ccv(const conjlinear::ConjugateLinearModel& model, int P,
                            const ExperimentConfig& c, std::uint64_t seed) {
  auto one = [&](std::uint64_t s) {
    const mc::McOptions o = mc_options(c, s);
    switch (c.estimator) {
      case CcvEstimator::sampled:
        return mc::estimate_ccv_sampled(model, P, c.B, o);
      case CcvEstimator::mixed_p:
        return mc::estimate_ccv_mixed_p(model, P, o);
      case CcvEstimator::exact_inner:
        break;
    }
    return mc::estimate_ccv_exact_inner(model, P, o);
  };
  if (c.R >= 2) return mc::repeat_runs(one, c.R, seed);
  mc::McEstimate est = one(derive_seed(seed, 0));
  est.std_error = est.split_sd / std::sqrt(static_cast<double>(c.T));
  return est;
}

void scale_estimate(mc::McEstimate& est, double scale) {
  est.value *= scale;
  for (double& v : est.per_run) v *= scale;
  if (est.std_error) *est.std_error *= scale;
  est.split_sd *= scale;
}

conjlinear::SimulatedData simulate(const ExperimentConfig& c) {
  conjlinear::SimulationSpec spec;
  spec.n = c.n;
  spec.theta = c.theta;
  spec.noise_variance = c.noise_variance;
  spec.x_low = c.x_low;
  spec.x_high = c.x_high;
  return conjlinear::simulate_polynomial(spec, derive_seed(c.seed, 0));
}

conjlinear::PolynomialSpec poly(const ExperimentConfig& c, int degree, double s2) {
  conjlinear::PolynomialSpec spec;
  spec.degree = degree;
  spec.noise_variance = c.noise_variance;
  spec.intercept_sd = c.intercept_sd;
  spec.coef_variance = s2;
  return spec;
}

nlohmann::json estimate_json(const mc::McEstimate& est) { return est.to_json(); }

}  // namespace

// -- Table 1 ---------------------------------------------------------------

int Table1Result::best_marginal(double s2) const {
  const Table1Row* best = nullptr;
  for (const auto& row : rows)
    if (row.coef_variance == s2 && (!best || row.log_marginal > best->log_marginal)) best = &row;
  if (!best) throw ValidationError("no rows for coef_variance " + format_g(s2));
  return best->degree;
}

int Table1Result::best_ccv(double s2, std::size_t k) const {
  const Table1Row* best = nullptr;
  for (const auto& row : rows)
    if (row.coef_variance == s2 && (!best || row.ccv.at(k).value > best->ccv.at(k).value))
      best = &row;
  if (!best) throw ValidationError("no rows for coef_variance " + format_g(s2));
  return best->degree;
}

Table1Result run_table1(const ExperimentConfig& c) {
  c.validate();
  const conjlinear::SimulatedData data = simulate(c);
  Table1Result result;
  result.n = c.n;
  for (const auto& p : c.P) result.P.push_back(resolve_P(p, c.n));
  const IndexSet all = iota_set(c.n);
  for (double s2 : c.coef_variances) {
    for (int r : c.degrees) {
      const conjlinear::ConjugateLinearModel model(data.x, data.y, poly(c, r, s2));
      Table1Row row;
      row.coef_variance = s2;
      row.degree = r;
      row.log_marginal = model.log_marginal(all);
      for (std::size_t k = 0; k < result.P.size(); ++k) {
        const int P = result.P[k];
        mc::McEstimate est = estimate_ccv(model, P, c, derive_seed(c.seed, 1 + k));
        scale_estimate(est, static_cast<double>(c.n) / P);
        result.max_stderr = std::max(result.max_stderr, est.std_error.value_or(0.0));
        row.ccv.push_back(std::move(est));
      }
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

void write_table1_csv(std::ostream& out, const Table1Result& result) {
  out << "s2,r,log_marginal";
  for (int P : result.P) out << ",ccv_P" << P;
  out << '\n';
  std::vector<double> col_max(result.P.size(), 0.0);
  for (const auto& row : result.rows) {
    out << format_g(row.coef_variance) << ',' << row.degree << ',' << format_g(row.log_marginal);
    for (std::size_t k = 0; k < row.ccv.size(); ++k) {
      out << ',' << format_g(row.ccv[k].value);
      col_max[k] = std::max(col_max[k], row.ccv[k].std_error.value_or(0.0));
    }
    out << '\n';
  }
  out << "max_stderr,,";
  for (double v : col_max) out << ',' << format_g(v);
  out << '\n';
}

nlohmann::json to_json(const Table1Result& result) {
  nlohmann::json j;
  j["n"] = result.n;
  j["P"] = result.P;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : result.rows) {
    nlohmann::json r{{"s2", row.coef_variance},
                     {"r", row.degree},
                     {"log_marginal", row.log_marginal},
                     {"ccv", nlohmann::json::array()}};
    for (std::size_t k = 0; k < row.ccv.size(); ++k) {
      nlohmann::json e = estimate_json(row.ccv[k]);
      e["P"] = result.P[k];
      r["ccv"].push_back(std::move(e));
    }
    j["rows"].push_back(std::move(r));
  }
  j["max_stderr"] = result.max_stderr;
  return j;
}

// -- prep curves -----------------------------------------------------------

FigurePrepResult run_figure_prep(const ExperimentConfig& c) {
  c.validate();
  if (c.n < 2) throw ValidationError("prep curves need n >= 2");
  const conjlinear::SimulatedData data = simulate(c);
  FigurePrepResult result;
  result.n = c.n;
  result.coef_variance = c.figure_coef_variance;
  result.degrees = c.degrees;
  for (int r : c.degrees) {
    const conjlinear::ConjugateLinearModel model(data.x, data.y,
                                                 poly(c, r, c.figure_coef_variance));
    if (c.n <= exact::kMaxDecomposeSize)
      result.curves.push_back(exact::prep_curve(model));
    else
      result.curves.push_back(mc::estimate_prep_curve(model, mc_options(c, derive_seed(c.seed, 1))));
  }
  return result;
}

void write_figure_prep_csv(std::ostream& out, const FigurePrepResult& result) {
  out << "panel,degree,p,n_minus_p,value,stderr\n";
  for (const char* panel : {"s_cv", "s_ccv_normalized"}) {
    const bool cv = std::string(panel) == "s_cv";
    for (std::size_t d = 0; d < result.degrees.size(); ++d) {
      for (const auto& row : result.curves[d].rows) {
        out << panel << ',' << result.degrees[d] << ',' << row.p << ',' << row.n_minus_p << ','
            << format_g(cv ? row.s_cv : row.s_ccv_normalized) << ','
            << format_g(cv ? row.s_cv_stderr : row.s_ccv_stderr) << '\n';
      }
    }
  }
}

// -- identity suite --------------------------------------------------------

namespace {

/// Shifts every pointwise predictive by a fixed amount; the negative control.
class CorruptedModel final : public ExactPredictiveModel {
 public:
  explicit CorruptedModel(const ExactPredictiveModel& inner) : inner_(inner) {}
  int size() const override { return inner_.size(); }
  double log_marginal(std::span<const int> s) const override { return inner_.log_marginal(s); }
  double log_block_predictive(std::span<const int> train,
                              std::span<const int> test) const override {
    return inner_.log_block_predictive(train, test);
  }
  double sum_pointwise_log_predictive(std::span<const int> train,
                                      std::span<const int> test) const override {
    return inner_.sum_pointwise_log_predictive(train, test) + 1e-3 * static_cast<double>(test.size());
  }

 private:
  const ExactPredictiveModel& inner_;
};

IdentityInstance check_instance(const ExactPredictiveModel& model, Exec exec) {
  IdentityInstance out;
  const int n = model.size();
  out.n = n;
  out.log_marginal = model.log_marginal(iota_set(n));
  try {
    out.residual_memo = exact::decompose_marginal(model, exec).max_residual();
  } catch (const IdentityError&) {
    out.residual_memo = std::numeric_limits<double>::infinity();
  }
  std::vector<double> per_p;
  for (int p = 1; p <= n; ++p) per_p.push_back(exact::leave_p_out_score(model, p, exec));
  out.residual_direct = std::abs(pairwise_sum(per_p) - out.log_marginal);
  for (int P = 1; P < n; ++P) {
    out.residual_pcv = std::max(out.residual_pcv, exact::preparatory_score(model, P, exec).residual);
    out.residual_ccv =
        std::max(out.residual_ccv, exact::cumulative_score_exact(model, P, exec).residual);
  }
  const double tol = exact::kIdentityTolerance;
  out.pass = out.residual_memo < tol && out.residual_direct < tol && out.residual_pcv < tol &&
             out.residual_ccv < tol;
  return out;
}

}  // namespace

nlohmann::json IdentityReport::to_json() const {
  nlohmann::json j;
  j["tolerance"] = tolerance;
  j["corrupted"] = corrupted;
  j["instances"] = nlohmann::json::array();
  double worst = 0.0;
  for (const auto& in : instances) {
    j["instances"].push_back({{"n", in.n},
                              {"r", in.degree},
                              {"s2", in.coef_variance},
                              {"log_marginal", in.log_marginal},
                              {"residual_memo", in.residual_memo},
                              {"residual_direct", in.residual_direct},
                              {"residual_pcv", in.residual_pcv},
                              {"residual_ccv", in.residual_ccv},
                              {"verdict", in.pass ? "PASS" : "FAIL"}});
    worst = std::max({worst, in.residual_memo, in.residual_direct, in.residual_pcv, in.residual_ccv});
  }
  j["max_residual"] = worst;
  j["verdict"] = pass ? "PASS" : "FAIL";
  return j;
}

IdentityReport run_identity_suite(const ExperimentConfig& c) {
  c.validate();
  if (c.max_n > exact::kMaxDecomposeSize)
    throw ValidationError("max_n must not exceed " + std::to_string(exact::kMaxDecomposeSize));
  constexpr double kPriorScales[] = {0.1, 1.0, 1e4};
  const auto start = std::chrono::steady_clock::now();
  IdentityReport report;
  report.corrupted = c.corrupt;
  report.pass = true;
  for (int i = 0; i < c.instances; ++i) {
    Rng rng(derive_seed(c.seed, static_cast<std::uint64_t>(i)));
    const int n = i == 0 ? 1 : 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(c.max_n)));
    const int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.max_degree) + 1));
    const double s2 = kPriorScales[rng.below(3)];
    conjlinear::SimulationSpec sim;
    sim.n = n;
    sim.theta.resize(static_cast<std::size_t>(r) + 1);
    for (double& t : sim.theta) t = rng.normal();
    const conjlinear::SimulatedData data = conjlinear::simulate_polynomial(sim, rng.below(~0ull));
    const conjlinear::ConjugateLinearModel model(data.x, data.y, poly(c, r, s2));
    IdentityInstance inst =
        c.corrupt ? check_instance(CorruptedModel(model), Exec::parallel)
                  : check_instance(model, Exec::parallel);
    inst.degree = r;
    inst.coef_variance = s2;
    report.pass = report.pass && inst.pass;
    report.instances.push_back(inst);
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// -- coherence suite -------------------------------------------------------

gbayes::DiscreteGeneralModel worked_model() {
  gbayes::DiscreteGeneralModel m;
  m.loss.resize(2, 2);
  m.loss << 1.0, 3.0,
            2.0, 1.0;
  m.prior = Eigen::Vector2d(0.5, 0.5);
  m.w = 1.0;
  return m;
}

WorkedInstance worked_instance() {
  const gbayes::DiscreteGeneralModel m = worked_model();
  const auto g = gbayes::ScoringFunction::exp_neg(m.w);
  const int first[] = {0};
  const int order[] = {0, 1};
  WorkedInstance w;
  const Eigen::VectorXd post = gbayes::general_update(m, first);
  w.posterior_first = post[0];
  w.log_second_factor = gbayes::log_pred_score(post, m.loss.col(1), g);
  w.lhs = std::exp(gbayes::prequential_score(m, order, g));
  w.rhs = std::exp(gbayes::batch_score(m, g));
  w.inverse_shift_residual =
      gbayes::coherence_residual(m, gbayes::ScoringFunction::inverse_shift());
  return w;
}

nlohmann::json CoherenceResult::to_json() const {
  nlohmann::json j = report.to_json();
  j["worked_instance"] = {{"posterior_theta0_after_y1", worked.posterior_first},
                          {"log_second_factor", worked.log_second_factor},
                          {"lhs", worked.lhs},
                          {"rhs", worked.rhs},
                          {"lhs_minus_rhs", worked.lhs - worked.rhs},
                          {"inverse_shift_residual", worked.inverse_shift_residual}};
  j["verdict"] = pass ? "PASS" : "FAIL";
  return j;
}

CoherenceResult run_coherence(const ExperimentConfig& c) {
  c.validate();
  CoherenceResult out;
  out.report = gbayes::verify_order_invariance(c.trials, c.seed);
  out.worked = worked_instance();
  out.pass = out.report.pass && std::abs(out.worked.lhs - out.worked.rhs) < 1e-15 &&
             out.worked.inverse_shift_residual > out.report.incoherent_threshold;
  return out;
}

// -- probit ----------------------------------------------------------------

std::size_t ProbitResult::best_marginal(std::size_t gi) const {
  const std::size_t per_g = cells.size() / gibbs_last_mean.size();
  std::size_t best = 0;
  for (std::size_t m = 1; m < per_g; ++m)
    if (cells[gi * per_g + m].log_marginal > cells[gi * per_g + best].log_marginal) best = m;
  return best;
}

std::size_t ProbitResult::best_ccv(std::size_t gi) const {
  const std::size_t per_g = cells.size() / gibbs_last_mean.size();
  std::size_t best = 0;
  for (std::size_t m = 1; m < per_g; ++m)
    if (cells[gi * per_g + m].ccv.value > cells[gi * per_g + best].ccv.value) best = m;
  return best;
}

namespace {

struct Signal {
  double z2 = 0.0;      // Wald statistic of the last coefficient
  double weight = 0.0;  // observed information over (X^T X), same entry
};

Signal last_signal(const Dataset& ds, const std::vector<std::string>& columns) {
  const probit::ProbitData pd = probit::ProbitData::from_dataset(ds, columns);
  const probit::MleFit fit = probit::fit_mle(pd);
  const Eigen::Index k = fit.theta.size() - 1;
  const Eigen::MatrixXd info = fit.cov.inverse();
  return {fit.theta[k] * fit.theta[k] / fit.cov(k, k), info(k, k) / pd.x.col(k).squaredNorm()};
}

}  // namespace

ProbitResult run_probit(const ExperimentConfig& c) {
  c.validate();
  Dataset ds;
  ProbitResult result;
  if (!c.data.empty()) {
    ds = read_dataset_csv(c.data);
  } else {
    probit::ProbitSimulationSpec spec;
    spec.n = c.synthetic_n;
    spec.theta = c.synthetic_theta;
    spec.names = c.models.front();
    result.synthetic = true;
    if (!c.synthetic_calibrate) {
      ds = probit::simulate_probit(spec, derive_seed(c.seed, 0));
    } else {
      double g_min = std::numeric_limits<double>::infinity(), g_max = 0.0;
      for (const auto& g : c.g) {
        g_min = std::min(g_min, g.value(spec.n));
        g_max = std::max(g_max, g.value(spec.n));
      }
      for (int a = 0;; ++a) {
        if (a == 1000)
          throw Error("no simulated dataset within 1000 attempts has the requested signal");
        ds = probit::simulate_probit(spec, derive_seed(c.seed, 1000 + static_cast<std::uint64_t>(a)));
        try {
          // Evidence for the last coefficient sits between the Occam penalties
          // of the two priors, in the middle half of that range.
          const Signal s = last_signal(ds, c.models.front());
          const double lo = std::log1p(g_min * s.weight), hi = std::log1p(g_max * s.weight);
          const double margin = 0.25 * (hi - lo);
          if (s.z2 >= lo + margin && s.z2 <= hi - margin) {
            result.synthetic_attempt = a;
            break;
          }
        } catch (const probit::SeparationError&) {
        }
      }
    }
  }
  const int n = static_cast<int>(ds.size());
  result.n = n;
  result.last_wald_z2 = last_signal(ds, c.models.front()).z2;
  result.P = resolve_P(c.P.front(), n);
  const double scale = static_cast<double>(n) / result.P;

  for (std::size_t gi = 0; gi < c.g.size(); ++gi) {
    const probit::GPriorSpec prior{c.g[gi].value(n)};
    for (std::size_t mi = 0; mi < c.models.size(); ++mi) {
      const probit::ProbitData pd = probit::ProbitData::from_dataset(ds, c.models[mi]);
      ProbitCell cell;
      cell.g = prior.g;
      cell.columns = c.models[mi];
      const probit::IsEstimate lm = probit::is_log_marginal(pd, prior, c.S, derive_seed(c.seed, 1));
      cell.log_marginal = lm.value;
      cell.log_marginal_ess = lm.effective_sample_size;
      auto one = [&](std::uint64_t s) {
        return probit::ccv_probit(pd, prior, result.P, c.S, mc_options(c, s));
      };
      if (c.R >= 2) {
        cell.ccv = mc::repeat_runs(one, c.R, derive_seed(c.seed, 2));
      } else {
        cell.ccv = one(derive_seed(derive_seed(c.seed, 2), 0));
        cell.ccv.std_error = cell.ccv.split_sd / std::sqrt(static_cast<double>(c.T));
      }
      scale_estimate(cell.ccv, scale);
      result.max_stderr = std::max(result.max_stderr, cell.ccv.std_error.value_or(0.0));
      result.cells.push_back(std::move(cell));
    }
    const probit::ProbitData first = probit::ProbitData::from_dataset(ds, c.models.front());
    Eigen::MatrixXd chain = probit::gibbs_posterior(first, probit::GPrior(first, prior),
                                                    c.gibbs_iterations, c.gibbs_burn_in,
                                                    derive_seed(c.seed, 3));
    result.gibbs_last_mean.push_back(chain.row(chain.rows() - 1).mean());
    result.chains.push_back(std::move(chain));
  }
  return result;
}

void write_probit_csv(std::ostream& out, const ProbitResult& result) {
  out << "g,model,log_marginal,ccv_P" << result.P << '\n';
  for (const auto& cell : result.cells) {
    std::string cols;
    for (const auto& name : cell.columns) cols += (cols.empty() ? "" : "+") + name;
    out << format_g(cell.g) << ',' << cols << ',' << format_g(cell.log_marginal) << ','
        << format_g(cell.ccv.value) << '\n';
  }
  out << "max_stderr,,," << format_g(result.max_stderr) << '\n';
}

nlohmann::json to_json(const ProbitResult& result) {
  nlohmann::json j;
  j["n"] = result.n;
  j["P"] = result.P;
  j["synthetic"] = result.synthetic;
  j["synthetic_attempt"] = result.synthetic_attempt;
  j["last_wald_z2"] = result.last_wald_z2;
  j["cells"] = nlohmann::json::array();
  for (const auto& cell : result.cells) {
    nlohmann::json e{{"g", cell.g},
                     {"model", cell.columns},
                     {"log_marginal", cell.log_marginal},
                     {"log_marginal_ess", cell.log_marginal_ess},
                     {"ccv", estimate_json(cell.ccv)}};
    j["cells"].push_back(std::move(e));
  }
  j["max_stderr"] = result.max_stderr;
  j["gibbs_last_coefficient_mean"] = result.gibbs_last_mean;
  return j;
}

// -- score -----------------------------------------------------------------

nlohmann::json ScoreResult::to_json() const {
  nlohmann::json j;
  j["n"] = n;
  j["log_marginal"] = log_marginal;
  j["decomposition"] = decomposition ? exact::to_json(*decomposition) : nlohmann::json(nullptr);
  j["ccv"] = nlohmann::json::array();
  for (std::size_t k = 0; k < P.size(); ++k) {
    nlohmann::json e = estimate_json(ccv[k]);
    e["P"] = P[k];
    j["ccv"].push_back(std::move(e));
  }
  return j;
}

ScoreResult run_score(const ExperimentConfig& c) {
  c.validate();
  if (c.data.empty()) throw ValidationError("score needs a dataset (--data or data = ...)");
  const Dataset ds = read_dataset_csv(c.data);
  const int n = static_cast<int>(ds.size());
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  if (c.degree > 0) {
    const Eigen::VectorXd col = ds.covariate("x");
    x.assign(col.data(), col.data() + col.size());
  }
  const conjlinear::ConjugateLinearModel model(x, ds.y, poly(c, c.degree, c.coef_variance));
  ScoreResult result;
  result.n = n;
  result.log_marginal = model.log_marginal(iota_set(n));
  if (n <= exact::kMaxDecomposeSize) result.decomposition = exact::decompose_marginal(model);
  for (std::size_t k = 0; k < c.P.size(); ++k) {
    const int P = resolve_P(c.P[k], n);
    result.P.push_back(P);
    if (binomial(n, P) <= static_cast<std::uint64_t>(c.T)) {
      mc::McEstimate est;
      est.value = exact::average_over_splits(
          n, P, Exec::parallel, kEnumerationCap,
          [&](const Split& split) { return model.log_block_predictive(split.train, split.test); });
      est.splits = static_cast<int>(binomial(n, P));
      est.std_error = 0.0;
      est.per_run = {est.value};
      est.seed = c.seed;
      result.ccv.push_back(est);
    } else {
      result.ccv.push_back(estimate_ccv(model, P, c, derive_seed(c.seed, 1 + k)));
    }
  }
  return result;
}

}  // namespace bayescv
