#include <cerrno>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "bayescv/experiments.hpp"
#include "bayescv/format.hpp"

namespace bayescv {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
    throw ValidationError("config key '" + key + "': '" + text + "' is not a number");
  return v;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& text) {
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ValidationError("config key '" + key + "': '" + text + "' is not an integer");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ValidationError("config key '" + key + "': expected true or false");
}

std::vector<double> parse_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_double(key, item));
  return out;
}

std::vector<int> parse_ints(const std::string& key, const std::string& text) {
  std::vector<int> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_int<int>(key, item));
  return out;
}

std::vector<Scaled> parse_scaled(const std::string& key, const std::string& text) {
  std::vector<Scaled> out;
  for (const auto& item : split(text, ',')) {
    try {
      out.push_back(Scaled::parse(item));
    } catch (const ValidationError& e) {
      throw ValidationError("config key '" + key + "': " + e.what());
    }
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& values, F&& fmt, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += sep;
    out += fmt(values[i]);
  }
  return out;
}

std::string to_string(CcvEstimator e) {
  switch (e) {
    case CcvEstimator::exact_inner:
      return "exact_inner";
    case CcvEstimator::sampled:
      return "sampled";
    case CcvEstimator::mixed_p:
      return "mixed_p";
  }
  return "exact_inner";
}

CcvEstimator parse_estimator(const std::string& text) {
  if (text == "exact_inner") return CcvEstimator::exact_inner;
  if (text == "sampled") return CcvEstimator::sampled;
  if (text == "mixed_p") return CcvEstimator::mixed_p;
  throw ValidationError("unknown estimator '" + text + "' (exact_inner, sampled, mixed_p)");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"experiment", [](auto& c, auto&, auto& v) { c.experiment = parse_experiment(v); }},
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = parse_int<std::uint64_t>(k, v); }},
      {"out_dir", [](auto& c, auto&, auto& v) { c.out_dir = v; }},
      {"n", [](auto& c, auto& k, auto& v) { c.n = parse_int<int>(k, v); }},
      {"theta", [](auto& c, auto& k, auto& v) { c.theta = parse_doubles(k, v); }},
      {"noise_variance", [](auto& c, auto& k, auto& v) { c.noise_variance = parse_double(k, v); }},
      {"x_low", [](auto& c, auto& k, auto& v) { c.x_low = parse_double(k, v); }},
      {"x_high", [](auto& c, auto& k, auto& v) { c.x_high = parse_double(k, v); }},
      {"intercept_sd", [](auto& c, auto& k, auto& v) { c.intercept_sd = parse_double(k, v); }},
      {"coef_variances", [](auto& c, auto& k, auto& v) { c.coef_variances = parse_doubles(k, v); }},
      {"degrees", [](auto& c, auto& k, auto& v) { c.degrees = parse_ints(k, v); }},
      {"figure_coef_variance",
       [](auto& c, auto& k, auto& v) { c.figure_coef_variance = parse_double(k, v); }},
      {"P", [](auto& c, auto& k, auto& v) { c.P = parse_scaled(k, v); }},
      {"T", [](auto& c, auto& k, auto& v) { c.T = parse_int<int>(k, v); }},
      {"B", [](auto& c, auto& k, auto& v) { c.B = parse_int<int>(k, v); }},
      {"R", [](auto& c, auto& k, auto& v) { c.R = parse_int<int>(k, v); }},
      {"estimator", [](auto& c, auto&, auto& v) { c.estimator = parse_estimator(v); }},
      {"aggregation", [](auto& c, auto&, auto& v) { c.aggregation = mc::Aggregation::parse(v); }},
      {"floor",
       [](auto& c, auto& k, auto& v) {
         if (v == "none")
           c.floor.reset();
         else
           c.floor = parse_double(k, v);
       }},
      {"instances", [](auto& c, auto& k, auto& v) { c.instances = parse_int<int>(k, v); }},
      {"max_n", [](auto& c, auto& k, auto& v) { c.max_n = parse_int<int>(k, v); }},
      {"max_degree", [](auto& c, auto& k, auto& v) { c.max_degree = parse_int<int>(k, v); }},
      {"corrupt", [](auto& c, auto& k, auto& v) { c.corrupt = parse_bool(k, v); }},
      {"trials", [](auto& c, auto& k, auto& v) { c.trials = parse_int<int>(k, v); }},
      {"data", [](auto& c, auto&, auto& v) { c.data = v; }},
      {"g", [](auto& c, auto& k, auto& v) { c.g = parse_scaled(k, v); }},
      {"models",
       [](auto& c, auto& k, auto& v) {
         c.models.clear();
         for (const auto& m : split(v, ';')) {
           auto cols = split(m, ',');
           for (const auto& col : cols)
             if (col.empty()) throw ValidationError("config key '" + k + "': empty column name");
           c.models.push_back(std::move(cols));
         }
       }},
      {"S", [](auto& c, auto& k, auto& v) { c.S = parse_int<int>(k, v); }},
      {"gibbs_iterations", [](auto& c, auto& k, auto& v) { c.gibbs_iterations = parse_int<int>(k, v); }},
      {"gibbs_burn_in", [](auto& c, auto& k, auto& v) { c.gibbs_burn_in = parse_int<int>(k, v); }},
      {"synthetic_n", [](auto& c, auto& k, auto& v) { c.synthetic_n = parse_int<int>(k, v); }},
      {"synthetic_theta",
       [](auto& c, auto& k, auto& v) { c.synthetic_theta = parse_doubles(k, v); }},
      {"synthetic_calibrate",
       [](auto& c, auto& k, auto& v) { c.synthetic_calibrate = parse_bool(k, v); }},
      {"degree", [](auto& c, auto& k, auto& v) { c.degree = parse_int<int>(k, v); }},
      {"coef_variance", [](auto& c, auto& k, auto& v) { c.coef_variance = parse_double(k, v); }},
  };
  return table;
}

}  // namespace

Scaled Scaled::parse(const std::string& raw) {
  const std::string text = trim(raw);
  if (text.empty()) throw ValidationError("empty count");
  Scaled s;
  std::string number = text;
  if (text.back() == 'n') {
    s.relative = true;
    number = text.substr(0, text.size() - 1);
    if (number.empty()) number = "1";
  }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), v);
  if (ec != std::errc() || ptr != number.data() + number.size() || !(v > 0.0) || !std::isfinite(v))
    throw ValidationError("'" + text + "' is not a positive value or multiple of n");
  s.factor = v;
  return s;
}

std::string Scaled::str() const { return format_exact(factor) + (relative ? "n" : ""); }

int Scaled::count(int n) const { return static_cast<int>(std::lround(value(n))); }

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::table1:
      return "table1";
    case Experiment::figure_prep:
      return "figure_prep";
    case Experiment::identity_suite:
      return "identity_suite";
    case Experiment::coherence_suite:
      return "coherence_suite";
    case Experiment::probit:
      return "probit";
    case Experiment::score:
      return "score";
  }
  return "score";
}

Experiment parse_experiment(const std::string& text) {
  for (Experiment e : {Experiment::table1, Experiment::figure_prep, Experiment::identity_suite,
                       Experiment::coherence_suite, Experiment::probit, Experiment::score})
    if (to_string(e) == text) return e;
  throw ValidationError("unknown experiment '" + text + "'");
}

void ExperimentConfig::validate() const {
  auto positive = [](const char* name, double v) {
    if (!(v > 0.0)) throw ValidationError(std::string(name) + " must be positive");
  };
  positive("n", n);
  positive("T", T);
  positive("R", R);
  positive("S", S);
  positive("instances", instances);
  positive("max_n", max_n);
  positive("trials", trials);
  positive("noise_variance", noise_variance);
  positive("intercept_sd", intercept_sd);
  positive("figure_coef_variance", figure_coef_variance);
  positive("coef_variance", coef_variance);
  positive("synthetic_n", synthetic_n);
  positive("gibbs_iterations", gibbs_iterations);
  if (B < 0) throw ValidationError("B must be nonnegative");
  if (estimator == CcvEstimator::sampled && B < 2)
    throw ValidationError("the sampled estimator needs B >= 2");
  if (gibbs_burn_in < 0 || gibbs_burn_in >= gibbs_iterations)
    throw ValidationError("gibbs_burn_in must lie in [0, gibbs_iterations)");
  if (!(x_high > x_low)) throw ValidationError("x_high must exceed x_low");
  if (max_degree < 0 || degree < 0) throw ValidationError("degrees must be nonnegative");
  if (theta.empty()) throw ValidationError("theta must be nonempty");
  if (coef_variances.empty() || degrees.empty() || P.empty() || g.empty() || models.empty())
    throw ValidationError("list-valued settings must be nonempty");
  for (double s2 : coef_variances) positive("coef_variances entry", s2);
  for (int r : degrees)
    if (r < 0) throw ValidationError("degrees must be nonnegative");
  if (experiment == Experiment::table1) {
    for (const auto& p : P) {
      const int count = p.count(n);
      if (count < 1 || count >= n)
        throw ValidationError("P entry " + p.str() + " resolves to " + std::to_string(count) +
                              ", outside [1, n-1]");
    }
  }
  if (synthetic_theta.size() < 1) throw ValidationError("synthetic_theta must be nonempty");
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  return serialize_config(*this) == serialize_config(o);
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end())
      throw ValidationError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second)
      throw ValidationError("config line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    try {
      it->second(config, key, value);
    } catch (const ValidationError& e) {
      throw ValidationError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

ExperimentConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  const auto num = [](double v) { return format_exact(v); };
  const auto integer = [](int v) { return std::to_string(v); };
  const auto scaled = [](const Scaled& s) { return s.str(); };
  std::ostringstream out;
  out << "experiment = " << to_string(c.experiment) << '\n'
      << "seed = " << c.seed << '\n'
      << "out_dir = " << c.out_dir << '\n'
      << "n = " << c.n << '\n'
      << "theta = " << join(c.theta, num) << '\n'
      << "noise_variance = " << num(c.noise_variance) << '\n'
      << "x_low = " << num(c.x_low) << '\n'
      << "x_high = " << num(c.x_high) << '\n'
      << "intercept_sd = " << num(c.intercept_sd) << '\n'
      << "coef_variances = " << join(c.coef_variances, num) << '\n'
      << "degrees = " << join(c.degrees, integer) << '\n'
      << "figure_coef_variance = " << num(c.figure_coef_variance) << '\n'
      << "P = " << join(c.P, scaled) << '\n'
      << "T = " << c.T << '\n'
      << "B = " << c.B << '\n'
      << "R = " << c.R << '\n'
      << "estimator = " << to_string(c.estimator) << '\n'
      << "aggregation = " << c.aggregation.name() << '\n'
      << "floor = " << (c.floor ? num(*c.floor) : std::string("none")) << '\n'
      << "instances = " << c.instances << '\n'
      << "max_n = " << c.max_n << '\n'
      << "max_degree = " << c.max_degree << '\n'
      << "corrupt = " << (c.corrupt ? "true" : "false") << '\n'
      << "trials = " << c.trials << '\n'
      << "data = " << c.data << '\n'
      << "g = " << join(c.g, scaled) << '\n'
      << "models = "
      << join(c.models, [](const std::vector<std::string>& m) {
           return join(m, [](const std::string& s) { return s; });
         }, ";")
      << '\n'
      << "S = " << c.S << '\n'
      << "gibbs_iterations = " << c.gibbs_iterations << '\n'
      << "gibbs_burn_in = " << c.gibbs_burn_in << '\n'
      << "synthetic_n = " << c.synthetic_n << '\n'
      << "synthetic_theta = " << join(c.synthetic_theta, num) << '\n'
      << "synthetic_calibrate = " << (c.synthetic_calibrate ? "true" : "false") << '\n'
      << "degree = " << c.degree << '\n'
      << "coef_variance = " << num(c.coef_variance) << '\n';
  return out.str();
}

}  // namespace bayescv
