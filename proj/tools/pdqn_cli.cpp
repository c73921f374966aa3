#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pdqn/experiments.hpp"
#include "pdqn/trace_io.hpp"

namespace {

// Exit codes.
constexpr int kOk = 0;
constexpr int kBadInput = 1;
constexpr int kInvariantFailure = 2;

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> iters;
  std::vector<double> thresholds;
  std::string diagnostics;
  bool parallel = false;
  std::optional<unsigned> threads;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("-c,--config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("-o,--out", o.out, "output directory (default: the config's \"output\")");
  sub->add_option("--seed", o.seed, "problem seed");
  sub->add_option("--iters", o.iters, "iterations per run")->check(CLI::PositiveNumber);
  sub->add_option("--threshold", o.thresholds, "error threshold(s) for the summary")->check(CLI::PositiveNumber);
  sub->add_option("--diagnostics", o.diagnostics, "per-iteration curvature diagnostics")
      ->check(CLI::IsMember({"on", "off"}));
  sub->add_flag("--parallel", o.parallel, "run node work on a thread pool");
  sub->add_option("--threads", o.threads, "thread pool size")->check(CLI::PositiveNumber);
}

pdqn::ExperimentConfig load(const Overrides& o) {
  pdqn::ExperimentConfig c = pdqn::load_experiment_config(o.config);
  if (o.seed) c.problem.seed = *o.seed;
  if (o.iters) c.iterations = *o.iters;
  if (!o.thresholds.empty()) c.thresholds = o.thresholds;
  if (!o.diagnostics.empty()) c.diagnostics = o.diagnostics == "on";
  if (o.parallel) c.parallel = true;
  if (o.threads) c.threads = *o.threads;
  if (c.diagnostics && static_cast<long long>(c.problem.n) * c.problem.p > 200)
    throw pdqn::ConfigError({"diagnostics need n * p <= 200"});
  return c;
}

std::string out_dir(const Overrides& o, const pdqn::ExperimentConfig& c) { return o.out.empty() ? c.output : o.out; }

void print_summary(const std::vector<pdqn::SummaryRow>& rows) {
  for (const auto& r : rows) {
    std::printf("%-16s %-6s final_error=%-12.4e", r.label.c_str(), r.variant.c_str(), r.final_error);
    for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
      std::printf("  to %g: ", r.thresholds[k]);
      if (k < r.iterations.size() && r.iterations[k])
        std::printf("%d it / %lld ex", *r.iterations[k], *r.exchanges[k]);
      else
        std::printf("not reached");
    }
    if (!r.tuned_field.empty()) std::printf("  %s=%g", r.tuned_field.c_str(), r.tuned_value);
    if (r.status != "ok") std::printf("  [%s]", r.status.c_str());
    std::printf("\n");
  }
}

void print_files(const std::vector<std::string>& files) {
  for (const auto& f : files) std::printf("wrote %s\n", f.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized primal-dual quasi-Newton experiments"};
  app.require_subcommand(1);

  Overrides run_o, cmp_o, val_o, sw_o;
  auto* run = app.add_subcommand("run", "run each configured algorithm");
  add_common(run, run_o);
  auto* cmp = app.add_subcommand("compare", "run and plot the algorithms against each other");
  add_common(cmp, cmp_o);
  auto* val = app.add_subcommand("validate", "check the invariant suite");
  add_common(val, val_o);
  auto* sw = app.add_subcommand("sweep", "run the configured sweep");
  add_common(sw, sw_o);
  std::string trace_path;
  double upper = 1e-1, lower = 1e-8;
  auto* fit = app.add_subcommand("rate-fit", "fit a linear rate to a saved trace");
  fit->add_option("trace", trace_path, "trace CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--upper", upper, "window starts at the first error below this");
  fit->add_option("--lower", lower, "window ends at the first error below this");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadInput;
  }

  try {
    if (*run) {
      auto c = load(run_o);
      auto out = pdqn::cmd_run(c, out_dir(run_o, c));
      print_summary(out.summary);
      print_files(out.files);
    } else if (*cmp) {
      auto c = load(cmp_o);
      auto out = pdqn::cmd_compare(c, out_dir(cmp_o, c));
      print_summary(out.summary);
      print_files(out.files);
    } else if (*val) {
      auto c = load(val_o);
      auto rep = pdqn::cmd_validate(c);
      std::cout << rep.text();
      return rep.passed() ? kOk : kInvariantFailure;
    } else if (*sw) {
      auto c = load(sw_o);
      auto out = pdqn::cmd_sweep(c, out_dir(sw_o, c));
      print_summary(out.rows);
      if (out.seeds)
        for (const auto& v : out.seeds->variants)
          std::printf("%-6s median exchanges=%g censored=%d/%zu\n", pdqn::variant_name(v.config.variant).c_str(),
                      v.median_exchanges(), v.censored(), v.outcomes.size());
      print_files(out.files);
    } else if (*fit) {
      auto f = pdqn::fit_linear_rate(pdqn::read_trace_file(trace_path), upper, lower);
      if (!f.fitted) {
        std::printf("%s\n", f.reason.c_str());
        return kOk;
      }
      std::printf("rate=%.6f slope=%.6f intercept=%.6f r2=%.6f window=[%d, %d]\n", f.rate, f.slope, f.intercept,
                  f.r_squared, f.first, f.last);
    }
  } catch (const pdqn::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadInput;
  }
  return kOk;
}
