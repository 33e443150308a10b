// Command-line experiment runner. Exit codes: 0 success or PASS, 1 failed
// verification or runtime error, 2 usage or configuration error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <omp.h>

#include "CLI11.hpp"

#include "bayescv/experiments.hpp"
#include "bayescv/format.hpp"
#include "bayescv/probit.hpp"

namespace fs = std::filesystem;
using namespace bayescv;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> data;
  std::optional<int> threads;
  bool corrupt = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out-dir", f.out_dir, "output directory");
  cmd->add_option("--data", f.data, "dataset CSV (header row with a y column)");
  cmd->add_option("--threads", f.threads, "OpenMP thread count")->check(CLI::PositiveNumber);
}

ExperimentConfig load(const CommonFlags& f, Experiment experiment) {
  ExperimentConfig c = f.config ? read_config(*f.config) : ExperimentConfig{};
  c.experiment = experiment;
  if (f.seed) c.seed = *f.seed;
  if (f.out_dir) c.out_dir = *f.out_dir;
  if (f.data) c.data = *f.data;
  if (f.corrupt) c.corrupt = true;
  if (f.threads) omp_set_num_threads(*f.threads);
  c.validate();
  return c;
}

fs::path prepare_out(const ExperimentConfig& c, const std::string& stem) {
  const fs::path dir(c.out_dir);
  fs::create_directories(dir);
  std::ofstream(dir / (stem + ".config")) << serialize_config(c);
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const nlohmann::json& j) { open_out(path) << j.dump(2) << '\n'; }

int cmd_score(const ExperimentConfig& c) {
  const ScoreResult r = run_score(c);
  const fs::path dir = prepare_out(c, "score");
  write_json(dir / "score.json", r.to_json());
  std::cout << "log_marginal " << format_g(r.log_marginal) << '\n';
  for (std::size_t k = 0; k < r.P.size(); ++k)
    std::cout << "S_CCV(P=" << r.P[k] << ") " << format_g(r.ccv[k].value) << '\n';
  return 0;
}

int cmd_table1(const ExperimentConfig& c) {
  const Table1Result r = run_table1(c);
  const fs::path dir = prepare_out(c, "table1");
  {
    auto out = open_out(dir / "table1.csv");
    write_table1_csv(out, r);
  }
  write_json(dir / "table1.json", to_json(r));
  write_table1_csv(std::cout, r);
  return 0;
}

int cmd_figure_prep(const ExperimentConfig& c) {
  const FigurePrepResult r = run_figure_prep(c);
  const fs::path dir = prepare_out(c, "figure_prep");
  auto out = open_out(dir / "figure_prep.csv");
  write_figure_prep_csv(out, r);
  std::cout << "wrote " << (dir / "figure_prep.csv").string() << '\n';
  return 0;
}

int cmd_identities(const ExperimentConfig& c) {
  const IdentityReport r = run_identity_suite(c);
  const fs::path dir = prepare_out(c, "identities");
  const nlohmann::json j = r.to_json();
  write_json(dir / "identities.json", j);
  std::cout << "instances " << r.instances.size() << ", max residual "
            << format_g(j["max_residual"].get<double>(), 3) << ": " << (r.pass ? "PASS" : "FAIL")
            << '\n';
  std::cerr << "elapsed " << format_g(r.seconds, 3) << " s\n";
  return r.pass ? 0 : kExitFail;
}

int cmd_coherence(const ExperimentConfig& c) {
  const CoherenceResult r = run_coherence(c);
  const fs::path dir = prepare_out(c, "coherence");
  write_json(dir / "coherence.json", r.to_json());
  for (const auto& f : r.report.families)
    std::cout << f.family << ": coherent " << f.coherent << '/' << f.trials << ", incoherent "
              << f.incoherent << '/' << f.trials << (f.trivial ? " (trivial)" : "") << " -> "
              << (f.pass ? "PASS" : "FAIL") << '\n';
  std::cout << "worked instance lhs " << format_g(r.worked.lhs) << " rhs " << format_g(r.worked.rhs)
            << '\n'
            << (r.pass ? "PASS" : "FAIL") << '\n';
  return r.pass ? 0 : kExitFail;
}

int cmd_probit(const ExperimentConfig& c) {
  const ProbitResult r = run_probit(c);
  const fs::path dir = prepare_out(c, "probit");
  {
    auto out = open_out(dir / "probit.csv");
    write_probit_csv(out, r);
  }
  write_json(dir / "probit.json", to_json(r));
  std::vector<std::string> names{"intercept"};
  for (const auto& col : c.models.front()) names.push_back(col);
  for (std::size_t gi = 0; gi < r.chains.size(); ++gi) {
    auto out = open_out(dir / ("gibbs_chain_g" + std::to_string(gi + 1) + ".csv"));
    probit::write_chain_csv(out, r.chains[gi], names);
  }
  if (r.synthetic) std::cout << "no dataset given; using simulated probit data\n";
  write_probit_csv(std::cout, r);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian evidence and cumulative cross-validation scores"};
  app.require_subcommand(1);

  struct Entry {
    const char* name;
    const char* help;
    Experiment experiment;
    int (*run)(const ExperimentConfig&);
  };
  const Entry entries[] = {
      {"score", "score a dataset under a polynomial model", Experiment::score, cmd_score},
      {"table1", "log evidence and S_CCV across priors and degrees", Experiment::table1, cmd_table1},
      {"figure-prep", "leave-p-out and cumulative score curves", Experiment::figure_prep,
       cmd_figure_prep},
      {"verify-identities", "evidence decomposition identities on random instances",
       Experiment::identity_suite, cmd_identities},
      {"verify-coherence", "order invariance of general Bayesian scores",
       Experiment::coherence_suite, cmd_coherence},
      {"probit", "probit evidence and S_CCV under two g-priors", Experiment::probit, cmd_probit},
  };

  CommonFlags flags;
  std::vector<std::pair<CLI::App*, const Entry*>> commands;
  for (const auto& e : entries) {
    CLI::App* cmd = app.add_subcommand(e.name, e.help);
    add_common(cmd, flags);
    if (e.experiment == Experiment::identity_suite)
      cmd->add_flag("--corrupt", flags.corrupt, "perturb the pointwise scorer (negative control)");
    commands.emplace_back(cmd, &e);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  for (const auto& [cmd, entry] : commands) {
    if (!cmd->parsed()) continue;
    try {
      return entry->run(load(flags, entry->experiment));
    } catch (const ValidationError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitFail;
    }
  }
  return kExitUsage;
}
