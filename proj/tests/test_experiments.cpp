#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pdqn/experiments.hpp"
#include "pdqn/trace_io.hpp"

using namespace pdqn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("pdqn_test_" + name);
  fs::remove_all(p);
  return p;
}

nlohmann::json base_config() {
  return {{"problem", {{"family", "quadratic"}, {"n", 20}, {"p", 5}, {"eta", 0}, {"seed", 1}}},
          {"topology", {{"d", 4}}},
          {"algorithms",
           {{{"variant", "pdqn"}, {"K", 2}, {"alpha", 2}, {"eps_d", 0.5}},
            {{"variant", "esom"}, {"K", 2}, {"alpha", 2}, {"eps_d", 2}}}},
          {"iterations", 60},
          {"thresholds", {1e-5, 1e-8}}};
}

std::vector<std::string> problems_of(const nlohmann::json& j) {
  try {
    parse_experiment_config(j);
  } catch (const ConfigError& e) {
    return e.problems();
  }
  return {};
}

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
  for (const auto& s : v)
    if (s.find(needle) != std::string::npos) return true;
  return false;
}

std::vector<std::vector<std::string>> rows_of(const std::string& csv) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        f.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    f.push_back(cur);
    out.push_back(f);
  }
  return out;
}

}  // namespace

TEST(ConfigParse, DefaultsAndLabels) {
  nlohmann::json j = base_config();
  j["algorithms"].push_back({{"variant", "pdqn"}, {"K", 1}});
  ExperimentConfig c = parse_experiment_config(j);
  ASSERT_EQ(c.algorithms.size(), 3u);
  EXPECT_EQ(c.algorithms[0].label, "pdqn");
  EXPECT_EQ(c.algorithms[2].label, "pdqn-2");
  EXPECT_EQ(c.algorithms[0].config.K, 2);
  EXPECT_TRUE(c.algorithms[0].tune_field.empty());
}

TEST(ConfigParse, TuneAndGridForms) {
  nlohmann::json j = base_config();
  j["algorithms"][0]["tune"] = true;
  j["algorithms"][0]["grid"] = {{"lo", -2}, {"hi", 1}};
  j["algorithms"][1]["tune"] = "alpha";
  j["algorithms"][1]["grid"] = {0.5, 1.0};
  ExperimentConfig c = parse_experiment_config(j);
  EXPECT_EQ(c.algorithms[0].tune_field, "eps_d");
  EXPECT_EQ(c.algorithms[0].grid, (std::vector<double>{0.25, 0.5, 1.0, 2.0}));
  EXPECT_EQ(c.algorithms[1].tune_field, "alpha");
  EXPECT_EQ(c.algorithms[1].grid, (std::vector<double>{0.5, 1.0}));
}

TEST(ConfigParse, AllProblemsListedBeforeRefusal) {
  nlohmann::json j = base_config();
  j["algorithms"][0]["Gamma"] = 1.5;
  j["algorithms"][1]["alpha"] = -1;
  j["iterations"] = 0;
  j["colour"] = "blue";
  j["problem"]["family"] = "cubic";
  auto p = problems_of(j);
  EXPECT_GE(p.size(), 5u);
  EXPECT_TRUE(mentions(p, "Gamma"));
  EXPECT_TRUE(mentions(p, "alpha"));
  EXPECT_TRUE(mentions(p, "iterations"));
  EXPECT_TRUE(mentions(p, "colour"));
  EXPECT_TRUE(mentions(p, "family"));
}

TEST(ConfigParse, EmptyAlgorithmListRefused) {
  nlohmann::json j = base_config();
  j["algorithms"] = nlohmann::json::array();
  EXPECT_TRUE(mentions(problems_of(j), "empty"));
  j.erase("algorithms");
  EXPECT_TRUE(mentions(problems_of(j), "empty"));
}

TEST(ConfigParse, DualAscentOnLogisticRefused) {
  nlohmann::json j = base_config();
  j["problem"] = {{"family", "logistic"}, {"n", 20}, {"p", 4}};
  j["algorithms"] = {{{"variant", "da"}}};
  EXPECT_TRUE(mentions(problems_of(j), "dual ascent"));
}

TEST(ConfigParse, SweepValidation) {
  nlohmann::json j = base_config();
  j["sweep"] = {{"axis", "K"}, {"values", nlohmann::json::array()}};
  EXPECT_TRUE(mentions(problems_of(j), "non-empty"));
  j["sweep"] = {{"axis", "K"}, {"values", {1.5}}};
  EXPECT_TRUE(mentions(problems_of(j), "integers"));
  j["sweep"] = {{"axis", "n"}, {"values", {1}}};
  EXPECT_TRUE(mentions(problems_of(j), "axis"));
}

TEST(ConfigParse, JsonRoundTrip) {
  nlohmann::json j = base_config();
  j["algorithms"][0]["tune"] = true;
  j["sweep"] = {{"axis", "eta"}, {"values", {0, 1}}};
  ExperimentConfig c = parse_experiment_config(j);
  ExperimentConfig back = parse_experiment_config(experiment_config_to_json(c));
  EXPECT_EQ(experiment_config_to_json(back), experiment_config_to_json(c));
}

TEST(BuildSetup, AsymmetricWeightsReported) {
  nlohmann::json j = base_config();
  j["problem"]["n"] = 3;
  j["topology"] = {{"n", 3},
                   {"edges", {{0, 1}, {1, 2}}},
                   {"weights", {{0, 1, 0.5}, {1, 0, 0.25}, {1, 2, 0.25}}},
                   {"symmetric", false}};
  ExperimentConfig c = parse_experiment_config(j);
  try {
    build_setup(c);
    FAIL() << "expected refusal";
  } catch (const ConfigError& e) {
    EXPECT_TRUE(mentions(e.problems(), "weight matrix"));
  }
}

TEST(BuildSetup, NodeCountMismatchReported) {
  nlohmann::json j = base_config();
  j["topology"] = {{"n", 4}, {"edges", {{0, 1}, {1, 2}, {2, 3}, {3, 0}}}};
  ExperimentConfig c = parse_experiment_config(j);
  try {
    build_setup(c);
    FAIL() << "expected refusal";
  } catch (const ConfigError& e) {
    EXPECT_TRUE(mentions(e.problems(), "4 nodes"));
  }
}

TEST(BuildSetup, WeightFileResolvedAgainstConfigDir) {
  fs::path dir = scratch("weightfile");
  fs::create_directories(dir);
  {
    std::ofstream w(dir / "w.json");
    w << weights_to_json(metropolis_weights(build_d_regular_cycle(20, 4))).dump();
    nlohmann::json j = base_config();
    j["topology"] = {{"file", "w.json"}};
    std::ofstream c(dir / "c.json");
    c << j.dump();
  }
  ExperimentConfig c = load_experiment_config((dir / "c.json").string());
  pdqn::Setup s = build_setup(c);
  EXPECT_EQ(s.W.dense(), metropolis_weights(build_d_regular_cycle(20, 4)).dense());
}

TEST(CmdRun, WritesReparseableFilesAndIsRepeatable) {
  ExperimentConfig c = parse_experiment_config(base_config());
  fs::path a = scratch("run_a"), b = scratch("run_b");
  RunOutcome ra = cmd_run(c, a.string());
  cmd_run(c, b.string());
  for (const char* f : {"trace_pdqn.csv", "trace_esom.csv", "summary.csv", "config.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;

  ConvergenceTrace t = read_trace_file((a / "trace_pdqn.csv").string());
  EXPECT_EQ(t.rows.size(), 61u);
  auto rows = rows_of(slurp(a / "summary.csv"));
  ASSERT_EQ(rows.size(), 3u);
  const auto& head = rows[0];
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(head.begin(), head.end(), name) - head.begin());
  };
  // summary thresholds recomputed from the saved trace
  EXPECT_EQ(rows[1][col("label")], "pdqn");
  EXPECT_EQ(rows[1][col("iterations_to_1e-05")], std::to_string(*t.iterations_to(1e-5)));
  EXPECT_EQ(rows[1][col("exchanges_to_1e-08")], std::to_string(*t.exchanges_to(1e-8)));
  EXPECT_EQ(ra.summary[0].iterations[0], t.iterations_to(1e-5));
}

TEST(CmdRun, TuningFailureRecordedNotFatal) {
  nlohmann::json j = base_config();
  j["algorithms"] = {{{"variant", "dgd"}, {"tune", true}, {"grid", {1e4}}},
                     {{"variant", "extra"}, {"primal_step", 0.5}}};
  ExperimentConfig c = parse_experiment_config(j);
  c.probe_iterations = 40;
  RunOutcome r = cmd_run(c, scratch("tunefail").string());
  EXPECT_NE(r.summary[0].status.find("refused"), std::string::npos);
  EXPECT_TRUE(r.traces[0].rows.empty());
  EXPECT_EQ(r.summary[1].status, "ok");
}

TEST(CmdCompare, SvgRegeneratesFromCsv) {
  ExperimentConfig c = parse_experiment_config(base_config());
  fs::path dir = scratch("compare");
  cmd_compare(c, dir.string());
  const std::string csv = slurp(dir / "compare.csv");
  EXPECT_EQ(compare_svg_from_csv(csv, false), slurp(dir / "compare_iterations.svg"));
  EXPECT_EQ(compare_svg_from_csv(csv, true), slurp(dir / "compare_exchanges.svg"));
  auto rows = rows_of(csv);
  EXPECT_EQ(rows.size(), 1u + 2u * 61u);
}

TEST(CmdCompare, SingleVariantRefused) {
  nlohmann::json j = base_config();
  j["algorithms"] = {{{"variant", "pdqn"}}};
  ExperimentConfig c = parse_experiment_config(j);
  EXPECT_THROW(cmd_compare(c, scratch("single").string()), ConfigError);
}

TEST(CmdValidate, SmallConfigPasses) {
  nlohmann::json j = base_config();
  j["problem"]["n"] = 6;
  j["problem"]["p"] = 4;
  j["topology"]["d"] = 2;
  j["algorithms"].push_back({{"variant", "da"}, {"eps_d", 0.5}});
  j["algorithms"].push_back({{"variant", "dgd"}, {"primal_step", 0.1}});
  j["iterations"] = 80;
  ValidationReport r = cmd_validate(parse_experiment_config(j));
  EXPECT_TRUE(r.passed()) << r.text();
  int informational = 0;
  for (const auto& x : r.results) informational += x.informational;
  EXPECT_GE(informational, 1);
  EXPECT_NE(r.text().find("primal_inverse.bounds"), std::string::npos);
}

TEST(RateFit, GeometricSequence) {
  std::vector<double> e;
  for (int t = 0; t < 300; ++t) e.push_back(std::pow(0.9, t));
  RateFit f = fit_linear_rate(e);
  ASSERT_TRUE(f.fitted);
  EXPECT_NEAR(f.rate, 0.9, 1e-12);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  EXPECT_EQ(f.first, 22);   // 0.9^22 < 0.1 <= 0.9^21
  EXPECT_EQ(f.last, 175);   // 0.9^175 < 1e-8 <= 0.9^174
}

TEST(RateFit, PlateauIsNoFit) {
  std::vector<double> e;
  for (int t = 0; t < 300; ++t) e.push_back(0.05 + std::pow(0.5, t));
  RateFit f = fit_linear_rate(e);
  EXPECT_FALSE(f.fitted);
  EXPECT_NE(f.reason.find("no fit"), std::string::npos);
  EXPECT_FALSE(fit_linear_rate(std::vector<double>{1.0, 0.5}).fitted);
}

TEST(RateFit, DgdTraceIsNoFit) {
  nlohmann::json j = base_config();
  j["algorithms"] = {{{"variant", "dgd"}, {"primal_step", 0.5}}};
  j["iterations"] = 300;
  ExperimentConfig c = parse_experiment_config(j);
  fs::path dir = scratch("dgd");
  cmd_run(c, dir.string());
  EXPECT_FALSE(cmd_rate_fit((dir / "trace_dgd.csv").string()).fitted);
}

TEST(CmdSweep, KAxisRowsAndSvgFromCsv) {
  nlohmann::json j = base_config();
  j["sweep"] = {{"axis", "K"}, {"values", {0, 1, 2}}};
  ExperimentConfig c = parse_experiment_config(j);
  fs::path dir = scratch("ksweep");
  SweepOutcome o = cmd_sweep(c, dir.string());
  EXPECT_EQ(o.rows.size(), 6u);
  const std::string csv = slurp(dir / "sweep.csv");
  EXPECT_EQ(rows_of(csv)[0][0], "K");
  EXPECT_EQ(sweep_svg_from_csv(csv, false), slurp(dir / "sweep_iterations.svg"));
  EXPECT_EQ(sweep_svg_from_csv(csv, true), slurp(dir / "sweep_exchanges.svg"));
  // more series terms cost more rounds per iteration
  ConvergenceTrace k0 = read_trace_file((dir / "cells" / "K_0_pdqn.csv").string());
  ConvergenceTrace k2 = read_trace_file((dir / "cells" / "K_2_pdqn.csv").string());
  EXPECT_EQ(k0.rows[1].exchanges, 5);
  EXPECT_EQ(k2.rows[1].exchanges, 7);
}

TEST(CmdSweep, FailingCellDoesNotStopSweep) {
  nlohmann::json j = base_config();
  j["algorithms"] = {{{"variant", "dgd"}, {"tune", true}, {"grid", {1e4}}}};
  j["sweep"] = {{"axis", "eta"}, {"values", {0, 1}}};
  ExperimentConfig c = parse_experiment_config(j);
  c.probe_iterations = 40;
  SweepOutcome o = cmd_sweep(c, scratch("failcell").string());
  ASSERT_EQ(o.rows.size(), 2u);
  for (const auto& r : o.rows) EXPECT_NE(r.status.find("refused"), std::string::npos);
}

TEST(CmdSweep, SeedsHistogramFromCsv) {
  nlohmann::json j = base_config();
  j["thresholds"] = {1e-5};
  j["sweep"] = {{"axis", "seeds"}, {"count", 5}, {"bins", 4}};
  ExperimentConfig c = parse_experiment_config(j);
  fs::path dir = scratch("seeds");
  SweepOutcome o = cmd_sweep(c, dir.string());
  ASSERT_TRUE(o.seeds.has_value());
  EXPECT_EQ(o.seeds->variants.size(), 2u);
  const std::string csv = slurp(dir / "seeds.csv");
  EXPECT_EQ(rows_of(csv).size(), 1u + 2u * 5u);
  EXPECT_EQ(seeds_histogram_svg_from_csv(csv, 4), slurp(dir / "seeds_histogram.svg"));
}
