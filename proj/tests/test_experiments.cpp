#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "spikesnr/experiments.hpp"
#include "spikesnr/io.hpp"

using namespace spikesnr;
using namespace spikesnr::experiments;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("spikesnr_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

} // namespace

TEST(EmitPlotData, WritesCsvAndSidecar) {
  const auto dir = scratch("emit");
  io::Series s{"demo", "two columns", {{"x", "ms"}, {"y", ""}}, {{1, 2.5}, {2, 0.125}}};
  const auto path = io::emit_plot_data(s, dir);
  EXPECT_EQ(slurp(path), "x,y\r\n1,2.5\r\n2,0.125\r\n");
  const auto meta = nlohmann::json::parse(slurp(dir / "demo.json"));
  EXPECT_EQ(meta["schema_version"], io::kSchemaVersion);
  EXPECT_EQ(meta["rows"], 2);
  EXPECT_EQ(meta["columns"][0]["unit"], "ms");
}

TEST(EmitPlotData, EmptySeriesRejected) {
  io::Series s{"empty", "", {{"x", ""}}, {}};
  EXPECT_THROW(io::emit_plot_data(s, scratch("empty")), Error);
}

TEST(WeightsCsv, RoundTrip) {
  const auto dir = scratch("weights");
  const std::vector<double> w{0.0, 1.0, 0.25, 0.7};
  io::write_weights_csv(dir / "w.csv", w);
  EXPECT_EQ(io::read_weights_csv(dir / "w.csv", 4), w);
  EXPECT_THROW(io::read_weights_csv(dir / "w.csv", 3), IoError);
}

TEST(RunExperiment, UnknownName) {
  ExperimentSpec s;
  s.name = "fig99";
  s.output_dir = scratch("unknown");
  EXPECT_THROW(run_experiment(s), Error);
}

TEST(RunExperiment, UnwritableOutputDirectory) {
  const auto dir = scratch("unwritable");
  std::ofstream(dir / "file") << "x";
  ExperimentSpec s;
  s.name = "table1-theory";
  s.output_dir = dir / "file";
  EXPECT_THROW(run_experiment(s), IoError);
}

TEST(RunExperiment, Table1TheoryLayoutAndChecks) {
  ExperimentSpec s;
  s.name = "table1-theory";
  s.seed = 3;
  s.output_dir = scratch("t1");
  const auto r = run_experiment(s);
  EXPECT_EQ(r.directory, s.output_dir / "table1-theory_3_desk");
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.checks.size(), 4u);
  const auto summary = nlohmann::json::parse(slurp(r.directory / "summary.json"));
  EXPECT_EQ(summary["schema_version"], io::kSchemaVersion);
  EXPECT_EQ(summary["results"].size(), 4u);
  EXPECT_TRUE(fs::exists(r.directory / "table1_theory.csv"));
  EXPECT_TRUE(fs::exists(r.directory / "table1_theory.json"));
}

TEST(RunExperiment, OverridesChangeTheProblem) {
  ExperimentSpec s;
  s.name = "table1-theory";
  s.output_dir = scratch("override");
  s.overrides = {{"P", 3}, {"f_hz", 5}};
  const auto r = run_experiment(s);
  EXPECT_TRUE(r.checks.empty());
  EXPECT_EQ(r.summary["results"][0]["P"], 3);
  EXPECT_EQ(r.summary["parameters"]["f_hz"], 5.0);
}

TEST(RunExperiment, Fig5Columns) {
  ExperimentSpec s;
  s.name = "fig5-psweep";
  s.output_dir = scratch("fig5");
  const auto r = run_experiment(s);
  EXPECT_TRUE(r.passed());
  const auto csv = slurp(r.directory / "fig5_psweep.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\r')), "P,tau_opt,dt_opt,snr_opt,m_opt");
}

TEST(RunExperiment, Fig4ThreeMaps) {
  ExperimentSpec s;
  s.name = "fig4-maps";
  s.output_dir = scratch("fig4");
  const auto r = run_experiment(s);
  EXPECT_TRUE(r.passed());
  for (const char* n : {"fig4_dt_over_tau", "fig4_tau_opt", "fig4_snr_opt"}) {
    EXPECT_TRUE(fs::exists(r.directory / (std::string(n) + ".csv")));
    EXPECT_TRUE(fs::exists(r.directory / (std::string(n) + ".json")));
  }
}

TEST(RunExperiment, ByteIdenticalReruns) {
  ExperimentSpec s;
  s.name = "fig2-averaging";
  s.seed = 9;
  s.workers = 2;
  s.overrides = {{"P", 2}};
  s.output_dir = scratch("rerun_a");
  const auto a = run_experiment(s);
  s.output_dir = scratch("rerun_b");
  s.workers = 1;
  const auto b = run_experiment(s);
  for (const auto& entry : fs::directory_iterator(a.directory)) {
    if (entry.path().extension() != ".csv") continue;
    EXPECT_EQ(slurp(entry.path()), slurp(b.directory / entry.path().filename())) << entry.path();
  }
}

TEST(RunExperiment, DeskScaleDeclaresReducedCounts) {
  ExperimentSpec s;
  s.name = "fig2-averaging";
  s.output_dir = scratch("scale");
  const auto r = run_experiment(s);
  EXPECT_TRUE(r.summary.contains("scale_note"));
  EXPECT_EQ(r.summary["scale"], "desk");
}

TEST(RunExperiment, StdpNeedsParametersOutsideTable) {
  ExperimentSpec s;
  s.name = "table1-stdp";
  s.output_dir = scratch("stdp");
  s.overrides = {{"P", 7}};
  EXPECT_THROW(run_experiment(s), ConstraintViolation);
}
