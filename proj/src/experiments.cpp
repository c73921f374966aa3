#include "pdqn/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "pdqn/quasi_newton.hpp"
#include "pdqn/svg.hpp"
#include "pdqn/trace_io.hpp"

namespace pdqn {

namespace fs = std::filesystem;

namespace {

std::string join_problems(const std::vector<std::string>& p) {
  std::string msg = "invalid experiment config:";
  for (const auto& s : p) msg += "\n  - " + s;
  return msg;
}

/// Reads typed fields from one JSON object, collecting every problem.
class Fields {
 public:
  Fields(const nlohmann::json& j, std::string where, std::vector<std::string>& errors)
      : j_(j), where_(std::move(where)), errors_(errors) {
    if (!j_.is_object()) error("must be an object");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.is_object() && j_.contains(key);
  }

  void integer(const char* key, int& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (v.is_number_integer())
      out = v.get<int>();
    else if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>())
      out = static_cast<int>(v.get<double>());
    else
      error(std::string(key) + " must be an integer");
  }

  void unsigned64(const char* key, std::uint64_t& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0))
      out = v.get<std::uint64_t>();
    else
      error(std::string(key) + " must be a non-negative integer");
  }

  void number(const char* key, double& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (v.is_number())
      out = v.get<double>();
    else
      error(std::string(key) + " must be a number");
  }

  void boolean(const char* key, bool& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (v.is_boolean())
      out = v.get<bool>();
    else if (v.is_string() && (v == "on" || v == "off"))
      out = v == "on";
    else
      error(std::string(key) + " must be a boolean");
  }

  void string(const char* key, std::string& out) {
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (v.is_string())
      out = v.get<std::string>();
    else
      error(std::string(key) + " must be a string");
  }

  void ignore(const char* key) { seen_.insert(key); }

  void error(const std::string& msg) { errors_.push_back(where_ + ": " + msg); }

  /// Reports keys that were never asked for.
  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) error("unknown key '" + key + "'");
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

void parse_problem(const nlohmann::json& j, ProblemSpec& p, std::vector<std::string>& errors) {
  Fields f(j, "problem", errors);
  f.string("family", p.family);
  f.integer("n", p.n);
  f.integer("p", p.p);
  f.integer("eta", p.eta);
  f.integer("q", p.q);
  f.number("mean", p.mean);
  f.number("std_pos", p.std_pos);
  f.number("std_neg", p.std_neg);
  f.number("reg_weight", p.reg_weight);
  f.unsigned64("seed", p.seed);
  f.finish();
  if (p.family != "quadratic" && p.family != "logistic")
    f.error("family must be 'quadratic' or 'logistic', got '" + p.family + "'");
  if (p.n < 2) f.error("n must be >= 2");
  if (p.family == "quadratic" && p.p < 2) f.error("p must be >= 2 for the quadratic family");
  if (p.p < 1) f.error("p must be >= 1");
  if (p.eta < 0) f.error("eta must be >= 0");
  if (p.family == "logistic") {
    if (p.q < 1) f.error("q must be >= 1");
    if (!(p.std_pos > 0.0) || !(p.std_neg > 0.0)) f.error("std_pos and std_neg must be positive");
    if (!(p.reg_weight > 0.0)) f.error("reg_weight must be positive");
  }
}

void parse_topology(const nlohmann::json& j, TopologySpec& t, std::vector<std::string>& errors) {
  Fields f(j, "topology", errors);
  f.integer("d", t.d);
  f.string("file", t.file);
  if (f.has("edges")) {
    t.explicit_graph = j;
    f.ignore("n");
    f.ignore("weights");
    f.ignore("symmetric");
  }
  f.finish();
  if (!t.file.empty() && !t.explicit_graph.is_null()) f.error("give either 'file' or inline 'edges', not both");
}

std::vector<double> parse_grid(const nlohmann::json& g, const std::string& where, std::vector<std::string>& errors) {
  std::vector<double> out;
  if (g.is_array()) {
    for (const auto& v : g) {
      if (!v.is_number() || !(v.get<double>() > 0.0) || !std::isfinite(v.get<double>())) {
        errors.push_back(where + ": grid entries must be positive finite numbers");
        return {};
      }
      out.push_back(v.get<double>());
    }
    if (out.empty()) errors.push_back(where + ": grid is empty");
    return out;
  }
  if (g.is_object()) {
    Fields f(g, where + ".grid", errors);
    int lo = -6, hi = 6;
    f.integer("lo", lo);
    f.integer("hi", hi);
    f.finish();
    if (lo > hi) {
      f.error("lo must not exceed hi");
      return {};
    }
    return power_of_two_grid(lo, hi);
  }
  errors.push_back(where + ": grid must be an array or {\"lo\", \"hi\"}");
  return {};
}

AlgorithmSpec parse_algorithm(const nlohmann::json& j, std::size_t index, std::vector<std::string>& errors) {
  const std::string where = "algorithms[" + std::to_string(index) + "]";
  AlgorithmSpec a;
  if (!j.is_object()) {
    errors.push_back(where + ": must be an object");
    return a;
  }
  nlohmann::json core = j;
  if (core.contains("label")) {
    if (core["label"].is_string() && !core["label"].get<std::string>().empty())
      a.label = core["label"].get<std::string>();
    else
      errors.push_back(where + ": label must be a non-empty string");
    core.erase("label");
  }
  if (core.contains("tune")) {
    const auto& t = core["tune"];
    std::string variant = core.value("variant", std::string("pdqn"));
    if (t.is_boolean()) {
      if (t.get<bool>()) {
        try {
          a.tune_field = tuned_field(variant_from_name(variant));
        } catch (const std::exception&) {
        }
      }
    } else if (t.is_string()) {
      a.tune_field = t.get<std::string>();
      if (a.tune_field != "alpha" && a.tune_field != "eps_d" && a.tune_field != "primal_step")
        errors.push_back(where + ": tune must be true, false, 'alpha', 'eps_d' or 'primal_step'");
    } else {
      errors.push_back(where + ": tune must be a boolean or a field name");
    }
    core.erase("tune");
  }
  if (core.contains("grid")) {
    a.grid = parse_grid(core["grid"], where, errors);
    core.erase("grid");
  }
  try {
    a.config = config_from_json(core);
  } catch (const std::exception& e) {
    errors.push_back(where + ": " + e.what());
    return a;
  }
  for (const auto& v : a.config.violations()) errors.push_back(where + ": " + v);
  if (a.label.empty()) a.label = variant_name(a.config.variant);
  return a;
}

void parse_sweep(const nlohmann::json& j, SweepSpec& s, std::vector<std::string>& errors) {
  Fields f(j, "sweep", errors);
  f.string("axis", s.axis);
  if (f.has("values")) {
    const auto& v = j.at("values");
    if (!v.is_array())
      f.error("values must be an array");
    else
      for (const auto& x : v) {
        if (!x.is_number()) {
          f.error("values must be numbers");
          break;
        }
        s.values.push_back(x.get<double>());
      }
  }
  f.integer("count", s.count);
  f.unsigned64("first_seed", s.first_seed);
  f.integer("bins", s.bins);
  f.boolean("tune_per_seed", s.tune_per_seed);
  f.finish();
  if (s.axis == "seeds") {
    if (s.count < 1) f.error("seeds sweep needs count >= 1");
    if (s.bins < 1) f.error("bins must be >= 1");
  } else if (s.axis == "eta" || s.axis == "K" || s.axis == "alpha") {
    if (s.values.empty()) f.error("axis '" + s.axis + "' needs a non-empty values list");
    for (double v : s.values) {
      if (!std::isfinite(v)) f.error("values must be finite");
      if ((s.axis == "eta" || s.axis == "K") && (v < 0.0 || std::floor(v) != v))
        f.error(s.axis + " values must be non-negative integers");
      if (s.axis == "alpha" && !(v > 0.0)) f.error("alpha values must be positive");
    }
  } else {
    f.error("axis must be one of eta, K, alpha, seeds (got '" + s.axis + "')");
  }
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char ch : s) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.') ? ch : '_';
  return out.empty() ? "unnamed" : out;
}

std::string csv_cell(const std::string& s) {
  std::string out;
  for (char ch : s) out += (ch == ',' || ch == '\n' || ch == '\r') ? ';' : ch;
  return out;
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string resolve(const ExperimentConfig& c, const std::string& path) {
  fs::path p(path);
  if (p.is_relative() && !c.base_dir.empty()) p = fs::path(c.base_dir) / p;
  return p.string();
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  Fields f(j, "config", errors);
  if (f.has("problem")) parse_problem(j.at("problem"), c.problem, errors);
  if (f.has("topology")) parse_topology(j.at("topology"), c.topology, errors);
  if (f.has("algorithms")) {
    const auto& a = j.at("algorithms");
    if (!a.is_array()) {
      f.error("algorithms must be an array");
    } else {
      for (std::size_t k = 0; k < a.size(); ++k) c.algorithms.push_back(parse_algorithm(a[k], k, errors));
    }
  }
  if (j.is_object() && c.algorithms.empty()) f.error("algorithm list is empty");
  f.integer("iterations", c.iterations);
  if (f.has("thresholds")) {
    const auto& t = j.at("thresholds");
    c.thresholds.clear();
    if (!t.is_array() || t.empty()) f.error("thresholds must be a non-empty array");
    else
      for (const auto& x : t) {
        if (!x.is_number() || !(x.get<double>() > 0.0)) {
          f.error("thresholds must be positive numbers");
          break;
        }
        c.thresholds.push_back(x.get<double>());
      }
  }
  f.boolean("diagnostics", c.diagnostics);
  if (f.has("diagnostic_params")) {
    Fields d(j.at("diagnostic_params"), "diagnostic_params", errors);
    d.number("beta", c.diagnostic_params.beta);
    d.number("phi", c.diagnostic_params.phi);
    d.number("zeta", c.diagnostic_params.zeta);
    d.finish();
    if (!(c.diagnostic_params.beta > 1.0) || !(c.diagnostic_params.phi > 1.0) || !(c.diagnostic_params.zeta > 0.0))
      d.error("need beta > 1, phi > 1, zeta > 0");
  }
  f.boolean("parallel", c.parallel);
  int threads = static_cast<int>(c.threads);
  f.integer("threads", threads);
  if (threads < 1) f.error("threads must be >= 1");
  c.threads = static_cast<unsigned>(std::max(1, threads));
  f.integer("probe_iterations", c.probe_iterations);
  f.string("output", c.output);
  if (f.has("sweep")) {
    SweepSpec s;
    parse_sweep(j.at("sweep"), s, errors);
    c.sweep = s;
  }
  f.finish();

  if (c.iterations < 1) errors.push_back("config: iterations must be >= 1");
  if (c.probe_iterations < 4) errors.push_back("config: probe_iterations must be >= 4");
  if (c.problem.family == "logistic")
    for (const auto& a : c.algorithms)
      if (a.config.variant == Variant::da)
        errors.push_back("algorithm '" + a.label +
                         "': dual ascent needs a closed-form local minimizer, unavailable for logistic problems");
  if (c.diagnostics && static_cast<long long>(c.problem.n) * c.problem.p > 200)
    errors.push_back("config: diagnostics need n * p <= 200");
  if (c.sweep && c.sweep->axis == "seeds") {
    if (c.problem.family != "quadratic") errors.push_back("sweep: the seeds axis is defined for quadratic problems");
    if (!c.topology.file.empty() || !c.topology.explicit_graph.is_null())
      errors.push_back("sweep: the seeds axis uses the d-regular cycle topology");
  }
  if (c.sweep && c.sweep->axis == "eta" && c.problem.family != "quadratic")
    errors.push_back("sweep: the eta axis is defined for quadratic problems");

  std::map<std::string, int> uses;
  for (auto& a : c.algorithms) {
    int k = ++uses[a.label];
    if (k > 1) a.label += "-" + std::to_string(k);
  }
  if (!errors.empty()) throw ConfigError(errors);
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config '" + path + "'"});
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError({"config '" + path + "' is not valid JSON: " + std::string(e.what())});
  }
  ExperimentConfig c = parse_experiment_config(j);
  c.base_dir = fs::path(path).parent_path().string();
  return c;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::json problem = {{"family", c.problem.family}, {"n", c.problem.n}, {"p", c.problem.p}, {"seed", c.problem.seed}};
  if (c.problem.family == "quadratic") {
    problem["eta"] = c.problem.eta;
  } else {
    problem["q"] = c.problem.q;
    problem["mean"] = c.problem.mean;
    problem["std_pos"] = c.problem.std_pos;
    problem["std_neg"] = c.problem.std_neg;
    problem["reg_weight"] = c.problem.reg_weight;
  }
  nlohmann::json topology;
  if (!c.topology.explicit_graph.is_null())
    topology = c.topology.explicit_graph;
  else if (!c.topology.file.empty())
    topology = {{"file", c.topology.file}};
  else
    topology = {{"d", c.topology.d}};
  nlohmann::json algorithms = nlohmann::json::array();
  for (const auto& a : c.algorithms) {
    nlohmann::json e = config_to_json(a.config);
    e["label"] = a.label;
    e["tune"] = a.tune_field.empty() ? nlohmann::json(false) : nlohmann::json(a.tune_field);
    e["grid"] = a.grid;
    algorithms.push_back(e);
  }
  nlohmann::json out = {{"problem", problem},
                        {"topology", topology},
                        {"algorithms", algorithms},
                        {"iterations", c.iterations},
                        {"thresholds", c.thresholds},
                        {"diagnostics", c.diagnostics},
                        {"diagnostic_params",
                         {{"beta", c.diagnostic_params.beta},
                          {"phi", c.diagnostic_params.phi},
                          {"zeta", c.diagnostic_params.zeta}}},
                        {"parallel", c.parallel},
                        {"threads", c.threads},
                        {"probe_iterations", c.probe_iterations},
                        {"output", c.output}};
  if (c.sweep) {
    const SweepSpec& s = *c.sweep;
    if (s.axis == "seeds")
      out["sweep"] = {{"axis", s.axis},
                      {"count", s.count},
                      {"first_seed", s.first_seed},
                      {"bins", s.bins},
                      {"tune_per_seed", s.tune_per_seed}};
    else
      out["sweep"] = {{"axis", s.axis}, {"values", s.values}};
  }
  return out;
}

Setup build_setup(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  const ProblemSpec& ps = c.problem;
  std::optional<Problem> problem;
  try {
    if (ps.family == "quadratic")
      problem = generate_quadratic(ps.n, ps.p, ps.eta, ps.seed);
    else
      problem = generate_logistic(ps.n, ps.p, ps.q, ps.mean, ps.std_pos, ps.std_neg, ps.reg_weight, ps.seed);
  } catch (const std::exception& e) {
    errors.push_back(std::string("problem: ") + e.what());
  }

  std::optional<WeightMatrix> W;
  try {
    if (!c.topology.explicit_graph.is_null()) {
      W = weights_from_json(c.topology.explicit_graph);
    } else if (!c.topology.file.empty()) {
      const std::string path = resolve(c, c.topology.file);
      std::ifstream in(path);
      if (!in) throw std::runtime_error("cannot open weight file '" + path + "'");
      W = weights_from_json(nlohmann::json::parse(in));
    } else {
      W = metropolis_weights(build_d_regular_cycle(ps.n, c.topology.d));
    }
  } catch (const std::exception& e) {
    errors.push_back(std::string("topology: ") + e.what());
  }
  if (W) {
    if (W->size() != ps.n)
      errors.push_back("topology: has " + std::to_string(W->size()) + " nodes but the problem has " +
                       std::to_string(ps.n));
    if (!W->topology().connected()) errors.push_back("topology: graph is not connected");
    try {
      validate_weight_matrix(*W);
    } catch (const std::exception& e) {
      errors.push_back(std::string("weight matrix: ") + e.what());
    }
  }
  if (!errors.empty()) throw ConfigError(errors);
  ReferenceSolution ref = centralized_solution(*problem);
  return Setup{std::move(*problem), std::move(*W), std::move(ref)};
}

std::pair<std::optional<ConvergenceTrace>, SummaryRow> run_algorithm(const ExperimentConfig& c, const Setup& setup,
                                                                     const AlgorithmSpec& a) {
  SummaryRow row;
  row.label = a.label;
  row.variant = variant_name(a.config.variant);
  row.thresholds = c.thresholds;
  AlgorithmConfig cfg = a.config;
  if (!a.tune_field.empty()) {
    try {
      TuneResult t =
          tune_stepsize(cfg, setup.problem, setup.W, setup.reference.x_star, a.grid, c.probe_iterations, a.tune_field);
      cfg = t.config;
      row.tuned_field = t.field;
      row.tuned_value = t.value;
    } catch (const TuningFailed& e) {
      row.status = std::string("refused: ") + e.what();
      row.final_error = std::numeric_limits<double>::quiet_NaN();
      row.iterations.assign(c.thresholds.size(), std::nullopt);
      row.exchanges.assign(c.thresholds.size(), std::nullopt);
      return {std::nullopt, row};
    }
  }
  RunOptions o;
  o.iterations = c.iterations;
  o.parallel = c.parallel;
  o.threads = c.threads;
  o.diagnostics = c.diagnostics && cfg.variant == Variant::pdqn;
  o.params = c.diagnostic_params;
  o.seed = c.problem.seed;
  ConvergenceTrace trace = run(setup.problem, setup.W, cfg, setup.reference, o);
  for (double thr : c.thresholds) {
    row.iterations.push_back(trace.iterations_to(thr));
    row.exchanges.push_back(trace.exchanges_to(thr));
  }
  row.final_error = trace.final_error();
  row.aborted = trace.aborted;
  if (trace.aborted) row.status = "aborted: " + trace.abort_reason;
  return {std::move(trace), row};
}

std::string summary_csv(const std::vector<SummaryRow>& rows, const std::string& axis) {
  std::ostringstream s;
  const std::vector<double> thr = rows.empty() ? std::vector<double>{} : rows.front().thresholds;
  if (!axis.empty()) s << axis << ",";
  s << "label,variant,status,final_error,tuned_field,tuned_value,aborted";
  for (double t : thr) s << ",iterations_to_" << fmt_g(t);
  for (double t : thr) s << ",exchanges_to_" << fmt_g(t);
  s << "\n";
  for (const auto& r : rows) {
    if (!axis.empty()) s << r.cell << ",";
    s << csv_cell(r.label) << "," << r.variant << "," << csv_cell(r.status) << "," << format_double(r.final_error) << ","
      << r.tuned_field << "," << (r.tuned_field.empty() ? "" : format_double(r.tuned_value)) << ","
      << (r.aborted ? 1 : 0);
    for (std::size_t k = 0; k < thr.size(); ++k)
      s << "," << (k < r.iterations.size() && r.iterations[k] ? std::to_string(*r.iterations[k]) : "");
    for (std::size_t k = 0; k < thr.size(); ++k)
      s << "," << (k < r.exchanges.size() && r.exchanges[k] ? std::to_string(*r.exchanges[k]) : "");
    s << "\n";
  }
  return s.str();
}

std::string summary_csv(const std::vector<SummaryRow>& rows) { return summary_csv(rows, ""); }

RunOutcome cmd_run(const ExperimentConfig& c, const std::string& out_dir) {
  if (c.algorithms.empty()) throw ConfigError({"config: algorithm list is empty"});
  const Setup setup = build_setup(c);
  RunOutcome out;
  for (const auto& a : c.algorithms) {
    auto [trace, row] = run_algorithm(c, setup, a);
    out.labels.push_back(a.label);
    out.summary.push_back(row);
    if (trace) {
      const std::string path = path_in(out_dir, "trace_" + sanitize(a.label) + ".csv");
      write_trace_file(*trace, path);
      out.files.push_back(path);
      out.traces.push_back(std::move(*trace));
    } else {
      out.traces.emplace_back();
    }
  }
  const std::string summary = path_in(out_dir, "summary.csv");
  write_text_file(summary, summary_csv(out.summary));
  out.files.push_back(summary);
  const std::string cfg = path_in(out_dir, "config.json");
  write_text_file(cfg, experiment_config_to_json(c).dump(2) + "\n");
  out.files.push_back(cfg);
  return out;
}

std::string compare_csv(const std::vector<std::string>& labels, const std::vector<ConvergenceTrace>& traces) {
  std::ostringstream s;
  s << "label,iteration,exchanges,error\n";
  for (std::size_t k = 0; k < labels.size() && k < traces.size(); ++k)
    for (const auto& r : traces[k].rows)
      s << csv_cell(labels[k]) << "," << r.iteration << "," << r.exchanges << "," << format_double(r.error) << "\n";
  return s.str();
}

std::string compare_svg_from_csv(const std::string& csv, bool by_exchanges) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "label,iteration,exchanges,error")
    throw std::runtime_error("not a comparison CSV");
  std::vector<Series> series;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != 4) throw std::runtime_error("malformed comparison row '" + line + "'");
    auto it = index.find(f[0]);
    if (it == index.end()) {
      it = index.emplace(f[0], series.size()).first;
      series.push_back(Series{f[0], {}, {}});
    }
    Series& s = series[it->second];
    s.x.push_back(std::stod(by_exchanges ? f[2] : f[1]));
    s.y.push_back(f[3] == "nan" ? std::numeric_limits<double>::quiet_NaN()
                  : f[3] == "inf" ? std::numeric_limits<double>::infinity()
                                  : std::stod(f[3]));
  }
  ChartOptions o;
  o.title = by_exchanges ? "Relative error vs information exchanges" : "Relative error vs iterations";
  o.x_label = by_exchanges ? "exchanges per node" : "iteration";
  o.y_label = "relative error";
  return line_chart_svg(series, o);
}

RunOutcome cmd_compare(const ExperimentConfig& c, const std::string& out_dir) {
  if (c.algorithms.size() < 2) throw ConfigError({"compare needs at least two algorithms"});
  RunOutcome out = cmd_run(c, out_dir);
  std::vector<std::string> labels;
  std::vector<ConvergenceTrace> traces;
  for (std::size_t k = 0; k < out.labels.size(); ++k)
    if (!out.traces[k].rows.empty()) {
      labels.push_back(out.labels[k]);
      traces.push_back(out.traces[k]);
    }
  const std::string csv = compare_csv(labels, traces);
  const std::string csv_path = path_in(out_dir, "compare.csv");
  write_text_file(csv_path, csv);
  const std::string it_path = path_in(out_dir, "compare_iterations.svg");
  write_text_file(it_path, compare_svg_from_csv(csv, false));
  const std::string ex_path = path_in(out_dir, "compare_exchanges.svg");
  write_text_file(ex_path, compare_svg_from_csv(csv, true));
  out.files.insert(out.files.end(), {csv_path, it_path, ex_path});
  return out;
}

// ---------------------------------------------------------------- validate

bool ValidationReport::passed() const {
  for (const auto& r : results)
    if (!r.informational && !r.passed) return false;
  return true;
}

std::string ValidationReport::text() const {
  std::ostringstream s;
  for (const auto& r : results) {
    s << (r.informational ? "INFO" : r.passed ? "PASS" : "FAIL") << "  " << r.name << "  margin=" << fmt_g(r.margin);
    if (r.iteration >= 0) s << "  iteration=" << r.iteration;
    if (!r.detail.empty()) s << "  " << r.detail;
    s << "\n";
  }
  s << (passed() ? "all invariants hold" : "invariant failures present") << "\n";
  return s.str();
}

namespace {

InvariantResult bounded(const std::string& name, double value, double limit, const std::string& what) {
  InvariantResult r;
  r.name = name;
  r.margin = limit - value;
  r.passed = value <= limit;
  r.detail = what + "=" + fmt_g(value) + " limit=" + fmt_g(limit);
  return r;
}

Matrix random_spd(std::mt19937_64& rng, int dim, double lo, double hi) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix Q = Matrix::NullaryExpr(dim, dim, [&]() { return g(rng); });
  Eigen::HouseholderQR<Matrix> qr(Q);
  Matrix O = qr.householderQ();
  Vector ev(dim);
  for (int k = 0; k < dim; ++k) ev(k) = u(rng);
  Matrix S = O * ev.asDiagonal() * O.transpose();
  return 0.5 * (S + S.transpose());
}

Matrix dense_laplacian(const WeightMatrix& W, int p) {
  const int n = W.size();
  Matrix L = Matrix::Identity(n, n) - W.dense();
  Matrix out = Matrix::Zero(n * p, n * p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (L(i, j) != 0.0) out.block(i * p, j * p, p, p) = L(i, j) * Matrix::Identity(p, p);
  return out;
}

double rel(const Vector& a, const Vector& b) {
  const double den = std::max(b.norm(), std::numeric_limits<double>::min());
  return (a - b).norm() / den;
}

}  // namespace

double oracle_neumann_exact(const WeightMatrix& W, int p, int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = W.size();
  const double alpha = 0.5;
  double worst = 0.0;
  Matrix L = dense_laplacian(W, p);
  for (int t = 0; t < trials; ++t) {
    std::vector<Matrix> B;
    for (int i = 0; i < n; ++i) B.push_back(random_spd(rng, p, 1.0, 3.0));
    StackedVector x(n, p);
    for (Eigen::Index k = 0; k < x.flat().size(); ++k) x.flat()(k) = g(rng);
    Matrix G = alpha * L;
    for (int i = 0; i < n; ++i) G.block(i * p, i * p, p, p) += B[static_cast<std::size_t>(i)];
    Vector dense = -G.llt().solve(x.flat());
    StackedVector d = neumann_descent(x, B, W, alpha, 40);
    worst = std::max(worst, rel(d.flat(), dense));
  }
  return worst;
}

double oracle_dual_direction(const WeightMatrix& W, int p, double gamma, double Gamma, int trials,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = W.size();
  const Topology& t = W.topology();
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    std::vector<Matrix> C;
    for (int i = 0; i < n; ++i) C.push_back(random_spd(rng, t.neighborhood_size(i) * p, gamma, gamma + 4.0));
    StackedVector h(n, p);
    for (Eigen::Index q = 0; q < h.flat().size(); ++q) h.flat()(q) = g(rng);
    Vector dense = assemble_global_dual_inverse(C, Gamma, t, p) * h.flat();
    StackedVector dist = dual_direction(C, h, Gamma, t);
    worst = std::max(worst, rel(dist.flat(), dense));
  }
  return worst;
}

double oracle_laplacian(const WeightMatrix& W, int p, int trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = W.size();
  Matrix L = dense_laplacian(W, p);
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    StackedVector x(n, p);
    for (Eigen::Index q = 0; q < x.flat().size(); ++q) x.flat()(q) = g(rng);
    worst = std::max(worst, rel(apply_laplacian(W, x).flat(), L * x.flat()));
  }
  return worst;
}

double fixed_point_step(const Setup& setup, const AlgorithmConfig& cfg) {
  Engine engine(setup.problem, setup.W, cfg);
  auto states = saddle_states(setup.problem, setup.W, cfg, setup.reference.x_star);
  engine.step(states);
  double worst = 0.0;
  for (const auto& s : states) worst = std::max(worst, s.last_step);
  return worst;
}

ValidationReport cmd_validate(const ExperimentConfig& c) {
  const Setup setup = build_setup(c);
  ValidationReport rep;
  const int n = setup.problem.nodes();
  const int p = setup.problem.dim();
  const bool dense_ok = static_cast<long long>(n) * p <= 200;

  {
    WeightDiagnostics wd = validate_weight_matrix(setup.W);
    InvariantResult r;
    r.name = "weights.valid";
    r.passed = true;
    r.detail = "delta=" + fmt_g(wd.delta) + " Delta=" + fmt_g(wd.Delta) +
               " second_eigenvalue_modulus=" + fmt_g(wd.second_eigenvalue_modulus);
    rep.results.push_back(r);
  }

  if (dense_ok) {
    const std::uint64_t seed = c.problem.seed;
    double gamma = 0.1, Gamma = 0.1;
    for (const auto& a : c.algorithms)
      if (a.config.variant == Variant::pdqn) {
        gamma = a.config.gamma;
        Gamma = a.config.Gamma;
        break;
      }
    rep.results.push_back(bounded("oracle.laplacian", oracle_laplacian(setup.W, p, 20, seed), 1e-12, "max_rel"));
    rep.results.push_back(
        bounded("oracle.neumann_K40", oracle_neumann_exact(setup.W, p, 10, seed + 1), 1e-8, "max_rel"));
    rep.results.push_back(bounded("oracle.dual_direction", oracle_dual_direction(setup.W, p, gamma, Gamma, 10, seed + 2),
                                  1e-10, "max_rel"));
  } else {
    InvariantResult r;
    r.name = "oracle.*";
    r.informational = true;
    r.detail = "skipped: dense oracles need n * p <= 200";
    rep.results.push_back(r);
  }

  const int short_T = std::min(c.iterations, 25);
  for (const auto& a : c.algorithms) {
    const std::string tag = a.label;
    // Ledger exactness.
    {
      Engine engine(setup.problem, setup.W, a.config);
      auto states = initial_states(setup.problem, setup.W, a.config);
      InvariantResult r;
      r.name = "ledger." + tag;
      r.passed = true;
      const int expected = rounds_per_iteration(a.config);
      try {
        for (int t = 0; t < short_T; ++t) engine.step(states);
      } catch (const NonFiniteState& e) {
        r.detail = std::string("(run aborted: ") + e.what() + ") ";
      }
      const auto& per = engine.ledger().rounds_per_iteration();
      for (std::size_t t = 0; t < per.size(); ++t)
        if (per[t] != expected) {
          r.passed = false;
          r.iteration = static_cast<int>(t) + 1;
          break;
        }
      if (engine.ledger().total_rounds() != static_cast<long long>(per.size()) * expected) r.passed = false;
      r.detail += "rounds/iteration=" + std::to_string(expected) + " iterations=" + std::to_string(per.size()) +
                  " total=" + std::to_string(engine.ledger().total_rounds());
      rep.results.push_back(r);
    }
    // Fixed point at the saddle.
    if (setup.problem.is_quadratic()) {
      if (a.config.variant == Variant::dgd) {
        InvariantResult r;
        r.name = "fixed_point." + tag;
        r.informational = true;
        r.detail = "not applicable: constant-step DGD is inexact, (x*, y*) is not its fixed point; step=" +
                   fmt_g(fixed_point_step(setup, a.config));
        rep.results.push_back(r);
      } else {
        rep.results.push_back(bounded("fixed_point." + tag, fixed_point_step(setup, a.config), 1e-12, "max_step"));
      }
    }
    // Parallel determinism.
    {
      RunOptions o;
      o.iterations = short_T;
      ConvergenceTrace serial = run(setup.problem, setup.W, a.config, setup.reference, o);
      o.parallel = true;
      o.threads = std::max(2u, c.threads);
      ConvergenceTrace parallel = run(setup.problem, setup.W, a.config, setup.reference, o);
      InvariantResult r;
      r.name = "determinism." + tag;
      r.passed = trace_to_csv(serial) == trace_to_csv(parallel);
      r.detail = r.passed ? "serial and parallel CSVs identical" : "serial and parallel CSVs differ";
      rep.results.push_back(r);
    }
  }

  // Error metric against an independent recomputation.
  {
    const AlgorithmConfig& cfg = c.algorithms.front().config;
    Engine engine(setup.problem, setup.W, cfg);
    auto states = initial_states(setup.problem, setup.W, cfg);
    double worst = 0.0;
    try {
      for (int t = 0; t < short_T; ++t) {
        engine.step(states);
        const double a = relative_error(gather_x(states), setup.reference.x_star);
        const double b = error_from_states(states, setup.reference.x_star);
        worst = std::max(worst, std::abs(a - b) / std::max(b, std::numeric_limits<double>::min()));
      }
    } catch (const NonFiniteState&) {
    }
    rep.results.push_back(bounded("error_metric", worst, 1e-14, "max_rel_diff"));
  }

  // PD-QN curvature invariants over a full run.
  const AlgorithmSpec* pd = nullptr;
  for (const auto& a : c.algorithms)
    if (a.config.variant == Variant::pdqn) {
      pd = &a;
      break;
    }
  if (!pd) {
    InvariantResult r;
    r.name = "pdqn.*";
    r.informational = true;
    r.detail = "skipped: no pdqn algorithm in the config";
    rep.results.push_back(r);
    return rep;
  }
  ExperimentConfig cd = c;
  cd.diagnostics = dense_ok;
  auto [trace, row] = run_algorithm(cd, setup, *pd);
  if (!trace) {
    InvariantResult r;
    r.name = "pdqn.run";
    r.passed = false;
    r.detail = row.status;
    rep.results.push_back(r);
    return rep;
  }
  {
    InvariantResult r = bounded("secant.primal", trace->audit.max_primal_secant, 1e-10, "max_rel_residual");
    r.detail += " accepted=" + std::to_string(trace->audit.primal_accepted) +
                " skipped=" + std::to_string(trace->audit.primal_skipped);
    rep.results.push_back(r);
    InvariantResult d = bounded("secant.dual", trace->audit.max_dual_secant, 1e-10, "max_rel_residual");
    d.detail += " accepted=" + std::to_string(trace->audit.dual_accepted) +
                " skipped=" + std::to_string(trace->audit.dual_skipped);
    rep.results.push_back(d);
  }
  if (trace->aborted) {
    InvariantResult r;
    r.name = "pdqn.run";
    r.informational = true;
    r.detail = "run aborted: " + trace->abort_reason;
    rep.results.push_back(r);
  }
  if (dense_ok) {
    InvariantResult l1{"primal_inverse.bounds", true, false, std::numeric_limits<double>::infinity(), -1, ""};
    InvariantResult l2{"dual_inverse.bounds", true, false, std::numeric_limits<double>::infinity(), -1, ""};
    int kappa_pos = 0, rows = 0, nu_bad = 0;
    for (const auto& rw : trace->rows) {
      if (!rw.diagnostics) continue;
      const DiagnosticRecord& d = *rw.diagnostics;
      ++rows;
      const double m1 = std::min(d.g_inv_min - d.primal_bound_lower, d.primal_bound_upper - d.g_inv_max);
      const double m2 = std::min(d.h_inv_min - d.dual_bound_lower, d.dual_bound_upper - d.h_inv_max);
      l1.margin = std::min(l1.margin, m1);
      l2.margin = std::min(l2.margin, m2);
      if (!d.primal_bounds_hold(1e-9) && l1.passed) {
        l1.passed = false;
        l1.iteration = rw.iteration;
      }
      if (!d.dual_bounds_hold(1e-9) && l2.passed) {
        l2.passed = false;
        l2.iteration = rw.iteration;
      }
      if (d.kappa > 0.0) ++kappa_pos;
      if (!d.nu_defined) ++nu_bad;
    }
    l1.detail = "iterations checked=" + std::to_string(rows) + " slack=1e-9";
    l2.detail = l1.detail;
    rep.results.push_back(l1);
    rep.results.push_back(l2);
    InvariantResult k;
    k.name = "contraction.kappa";
    k.informational = true;
    k.detail = "kappa > 0 on " + std::to_string(kappa_pos) + "/" + std::to_string(rows) +
               " iterations (sufficient condition only); nu ill-defined on " + std::to_string(nu_bad);
    rep.results.push_back(k);
  }
  return rep;
}

// ---------------------------------------------------------------- rate fit

RateFit fit_linear_rate(const std::vector<double>& errors, double upper, double lower) {
  RateFit f;
  int first = -1, last = -1;
  for (std::size_t t = 0; t < errors.size(); ++t) {
    if (first < 0 && errors[t] < upper) first = static_cast<int>(t);
    if (first >= 0 && errors[t] < lower) {
      last = static_cast<int>(t);
      break;
    }
  }
  if (first < 0) {
    f.reason = "no fit: error never drops below " + fmt_g(upper);
    return f;
  }
  if (last < 0) {
    f.reason = "no fit: error never drops below " + fmt_g(lower) + " (insufficient decades)";
    return f;
  }
  if (!(errors[static_cast<std::size_t>(last)] > 0.0)) --last;
  if (last - first + 1 < 3) {
    f.reason = "no fit: window [" + std::to_string(first) + ", " + std::to_string(last) + "] has fewer than 3 points";
    return f;
  }
  double st = 0, sy = 0, stt = 0, sty = 0;
  const double m = last - first + 1;
  for (int t = first; t <= last; ++t) {
    const double y = std::log(errors[static_cast<std::size_t>(t)]);
    st += t;
    sy += y;
    stt += static_cast<double>(t) * t;
    sty += t * y;
  }
  const double slope = (m * sty - st * sy) / (m * stt - st * st);
  const double intercept = (sy - slope * st) / m;
  double ss_res = 0, ss_tot = 0;
  const double mean = sy / m;
  for (int t = first; t <= last; ++t) {
    const double y = std::log(errors[static_cast<std::size_t>(t)]);
    const double e = y - (intercept + slope * t);
    ss_res += e * e;
    ss_tot += (y - mean) * (y - mean);
  }
  f.fitted = true;
  f.slope = slope;
  f.intercept = intercept;
  f.rate = std::exp(slope);
  f.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  f.first = first;
  f.last = last;
  return f;
}

RateFit fit_linear_rate(const ConvergenceTrace& trace, double upper, double lower) {
  std::vector<double> e;
  for (const auto& r : trace.rows) e.push_back(r.error);
  return fit_linear_rate(e, upper, lower);
}

RateFit cmd_rate_fit(const std::string& trace_path) { return fit_linear_rate(read_trace_file(trace_path)); }

// ---------------------------------------------------------------- sweeps

std::string sweep_svg_from_csv(const std::string& csv, bool by_exchanges) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty sweep CSV");
  const auto head = split_csv(line);
  if (head.size() < 2 || head[1] != "label") throw std::runtime_error("not a sweep CSV");
  const std::string prefix = by_exchanges ? "exchanges_to_" : "iterations_to_";
  std::size_t col = head.size();
  for (std::size_t k = 0; k < head.size(); ++k)
    if (head[k].rfind(prefix, 0) == 0) {
      col = k;
      break;
    }
  if (col == head.size()) throw std::runtime_error("sweep CSV has no " + prefix + " column");
  std::vector<Series> series;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != head.size()) throw std::runtime_error("malformed sweep row '" + line + "'");
    auto it = index.find(f[1]);
    if (it == index.end()) {
      it = index.emplace(f[1], series.size()).first;
      series.push_back(Series{f[1], {}, {}});
    }
    Series& s = series[it->second];
    s.x.push_back(std::stod(f[0]));
    s.y.push_back(f[col].empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[col]));
  }
  ChartOptions o;
  o.title = (by_exchanges ? "Exchanges" : "Iterations") + std::string(" to ") + head[col].substr(prefix.size()) +
            " across " + head[0];
  o.x_label = head[0];
  o.y_label = by_exchanges ? "exchanges per node" : "iterations";
  return line_chart_svg(series, o);
}

std::string seeds_csv(const SeedSweepResult& r, const std::vector<std::string>& labels) {
  std::ostringstream s;
  s << "label,seed,iterations,exchanges,tuned_value\n";
  for (std::size_t v = 0; v < r.variants.size(); ++v)
    for (const auto& o : r.variants[v].outcomes)
      s << csv_cell(labels[v]) << "," << o.seed << "," << (o.iterations ? std::to_string(*o.iterations) : "") << ","
        << (o.exchanges ? std::to_string(*o.exchanges) : "") << "," << format_double(o.tuned_value) << "\n";
  return s.str();
}

std::string seeds_histogram_svg_from_csv(const std::string& csv, int bins) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "label,seed,iterations,exchanges,tuned_value")
    throw std::runtime_error("not a seeds CSV");
  std::vector<std::string> order;
  std::map<std::string, VariantSweep> by_label;
  double hi = 0.0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv(line);
    if (f.size() != 5) throw std::runtime_error("malformed seeds row '" + line + "'");
    if (!by_label.count(f[0])) order.push_back(f[0]);
    SeedOutcome o;
    o.seed = std::stoull(f[1]);
    if (!f[3].empty()) {
      o.exchanges = std::stoll(f[3]);
      hi = std::max(hi, static_cast<double>(*o.exchanges));
    }
    by_label[f[0]].outcomes.push_back(o);
  }
  std::vector<LabeledHistogram> hists;
  for (const auto& l : order) hists.push_back({l, exchange_histogram(by_label[l], 0.0, hi > 0 ? hi * 1.05 : 1.0, bins)});
  ChartOptions o;
  o.title = "Exchanges to threshold over seeds";
  o.x_label = "exchanges per node";
  o.y_label = "trials";
  o.log_y = false;
  return histogram_svg(hists, o);
}

SweepOutcome cmd_sweep(const ExperimentConfig& c, const std::string& out_dir) {
  if (!c.sweep) throw ConfigError({"config has no sweep section"});
  const SweepSpec& sw = *c.sweep;
  SweepOutcome out;
  if (sw.axis == "seeds") {
    SeedSweepSpec spec;
    spec.n = c.problem.n;
    spec.p = c.problem.p;
    spec.d = c.topology.d;
    spec.eta = c.problem.eta;
    spec.first_seed = sw.first_seed;
    spec.threshold = c.thresholds.front();
    spec.budget = c.iterations;
    spec.tune_per_seed = sw.tune_per_seed;
    std::vector<std::string> labels;
    ExperimentConfig first = c;
    first.problem.seed = sw.first_seed;
    const Setup setup = build_setup(first);
    for (const auto& a : c.algorithms) {
      AlgorithmConfig cfg = a.config;
      if (!a.tune_field.empty() && !sw.tune_per_seed) {
        try {
          cfg = tune_stepsize(cfg, setup.problem, setup.W, setup.reference.x_star, a.grid, c.probe_iterations,
                              a.tune_field)
                    .config;
        } catch (const TuningFailed& e) {
          SummaryRow row;
          row.label = a.label;
          row.variant = variant_name(a.config.variant);
          row.thresholds = c.thresholds;
          row.status = std::string("refused: ") + e.what();
          out.rows.push_back(row);
          continue;
        }
      }
      spec.variants.push_back(cfg);
      labels.push_back(a.label);
    }
    if (spec.variants.empty()) return out;
    out.seeds = sweep_seeds(spec, sw.count);
    const std::string csv = seeds_csv(*out.seeds, labels);
    const std::string csv_path = path_in(out_dir, "seeds.csv");
    write_text_file(csv_path, csv);
    std::ostringstream med;
    med << "label,median_exchanges,censored,trials\n";
    for (std::size_t v = 0; v < labels.size(); ++v)
      med << csv_cell(labels[v]) << "," << format_double(out.seeds->variants[v].median_exchanges()) << ","
          << out.seeds->variants[v].censored() << "," << out.seeds->variants[v].outcomes.size() << "\n";
    const std::string med_path = path_in(out_dir, "seeds_summary.csv");
    write_text_file(med_path, med.str());
    const std::string svg_path = path_in(out_dir, "seeds_histogram.svg");
    write_text_file(svg_path, seeds_histogram_svg_from_csv(csv, sw.bins));
    out.files = {csv_path, med_path, svg_path};
    return out;
  }

  for (double v : sw.values) {
    ExperimentConfig cell = c;
    cell.sweep.reset();
    const std::string tag = fmt_g(v);
    if (sw.axis == "eta") cell.problem.eta = static_cast<int>(v);
    for (auto& a : cell.algorithms) {
      if (sw.axis == "K") a.config.K = static_cast<int>(v);
      if (sw.axis == "alpha") a.config.alpha = v;
    }
    std::optional<Setup> setup;
    std::string failure;
    try {
      setup = build_setup(cell);
    } catch (const std::exception& e) {
      failure = e.what();
    }
    for (const auto& a : cell.algorithms) {
      SummaryRow row;
      if (setup) {
        try {
          auto [trace, r] = run_algorithm(cell, *setup, a);
          row = r;
          if (trace) {
            const std::string path =
                path_in(path_in(out_dir, "cells"), sw.axis + "_" + sanitize(tag) + "_" + sanitize(a.label) + ".csv");
            write_trace_file(*trace, path);
            out.files.push_back(path);
          }
        } catch (const std::exception& e) {
          row.label = a.label;
          row.variant = variant_name(a.config.variant);
          row.thresholds = c.thresholds;
          row.status = std::string("failed: ") + e.what();
        }
      } else {
        row.label = a.label;
        row.variant = variant_name(a.config.variant);
        row.thresholds = c.thresholds;
        row.status = "failed: " + failure;
      }
      row.cell = tag;
      out.rows.push_back(row);
    }
  }
  const std::string csv = summary_csv(out.rows, sw.axis);
  const std::string csv_path = path_in(out_dir, "sweep.csv");
  write_text_file(csv_path, csv);
  const std::string it_path = path_in(out_dir, "sweep_iterations.svg");
  write_text_file(it_path, sweep_svg_from_csv(csv, false));
  const std::string ex_path = path_in(out_dir, "sweep_exchanges.svg");
  write_text_file(ex_path, sweep_svg_from_csv(csv, true));
  out.files.insert(out.files.end(), {csv_path, it_path, ex_path});
  return out;
}

}  // namespace pdqn
