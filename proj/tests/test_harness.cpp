#include "featspeed/harness/experiments.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace featspeed;
using namespace featspeed::harness;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("featspeed_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs an experiment twice with different worker counts and compares bytes.
void expect_worker_independent(ExperimentConfig cfg) {
  const auto d1 = temp_dir(cfg.experiment + "_w1"), d3 = temp_dir(cfg.experiment + "_w3");
  cfg.out = d1.string();
  cfg.workers = 1;
  const RunResult r1 = run(cfg);
  cfg.out = d3.string();
  cfg.workers = 3;
  const RunResult r3 = run(cfg);
  ASSERT_EQ(r1.files.size(), r3.files.size());
  ASSERT_FALSE(r1.files.empty());
  for (std::size_t i = 0; i < r1.files.size(); ++i) {
    EXPECT_EQ(r1.files[i].filename(), r3.files[i].filename());
    EXPECT_EQ(strip_timestamp(slurp(r1.files[i])), strip_timestamp(slurp(r3.files[i]))) << r1.files[i];
  }
}

}  // namespace

TEST(Config, JsonRoundTripIsLossless) {
  ExperimentConfig c;
  c.experiment = "fig1b";
  c.m = 64;
  c.L = 12;
  c.grid_L = {4, 8, 16};
  c.grid_beta = {0.5, 2.0};
  c.dt = 0.125;
  c.setting = Setting::Sparse;
  c.seed = 18446744073709551615ULL;
  c.svg = true;
  const ExperimentConfig back = parse_config(dump_config(c));
  EXPECT_EQ(dump_config(back), dump_config(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_FALSE(back.d.has_value());
  EXPECT_EQ(*back.m, 64u);
}

TEST(Config, HashIgnoresExecutionOnlyFields) {
  ExperimentConfig a;
  a.experiment = "fig2a";
  ExperimentConfig b = a;
  b.workers = 8;
  b.out = "elsewhere";
  b.svg = true;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seeds = 7;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, InvalidInputsAreRejected) {
  EXPECT_THROW(parse_config("{\"experiment\": \"fig1a\", \"bogus\": 1}"), std::invalid_argument);
  EXPECT_THROW(parse_config("not json"), std::invalid_argument);
  EXPECT_THROW(parse_config("{\"seeds\": \"five\"}"), std::invalid_argument);
  ExperimentConfig c;
  c.experiment = "fig9";
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.experiment = "fig1a";
  c.seeds = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.seeds = 1;
  c.grid_L = {1};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(load_config("/nonexistent/config.json"), std::invalid_argument);
}

TEST(Csv, NumbersRoundTrip) {
  for (double x : {0.1, -1e-300, 12345.678, 1.0 / 3.0}) EXPECT_EQ(parse_number(format_number(x)), x);
  EXPECT_EQ(format_number(NAN), "nan");
  EXPECT_EQ(format_number(-INFINITY), "-inf");
  EXPECT_TRUE(std::isnan(parse_number("nan")));
  EXPECT_THROW(parse_number("1.5x"), std::invalid_argument);
}

TEST(Csv, WriteParseRoundTripWithQuoting) {
  CsvTable t({"a", "b"});
  t.add_meta("experiment", "x");
  t.add_meta(std::string(kTimestampKey), "2020-01-01T00:00:00Z");
  t.add_row({"1", "has,comma"});
  t.add_row({"2", "has \"quote\""});
  EXPECT_THROW(t.add_row({"1"}), std::invalid_argument);
  const ParsedCsv p = parse_csv(t.str());
  ASSERT_EQ(p.rows.size(), 2u);
  EXPECT_EQ(p.rows[0][1], "has,comma");
  EXPECT_EQ(p.rows[1][1], "has \"quote\"");
  EXPECT_EQ(p.meta.size(), 2u);
  EXPECT_EQ(strip_timestamp(t.str()).find("generated_at"), std::string::npos);
  EXPECT_THROW(p.column("c"), std::invalid_argument);
  EXPECT_THROW(parse_csv("a,b\n1\n"), std::invalid_argument);
}

TEST(Svg, DeterministicAndRejectsEmptyData) {
  CsvTable t({"L", "cos", "family"});
  t.add_row({"8", "0.3", "A"});
  t.add_row({"16", "0.2", "A"});
  t.add_row({"8", "0.5", "B"});
  const ParsedCsv p = parse_csv(t.str());
  const PlotSpec spec{"L", "cos", "family", true, true, ""};
  const std::string s1 = render_svg(p, spec), s2 = render_svg(p, spec);
  EXPECT_EQ(s1, s2);
  EXPECT_NE(s1.find("<polyline"), std::string::npos);
  EXPECT_NE(s1.find(">A<"), std::string::npos);
  EXPECT_NE(s1.find(">B<"), std::string::npos);
  EXPECT_THROW(render_svg(parse_csv("L,cos\n"), {"L", "cos", "", false, false, ""}), std::invalid_argument);
  EXPECT_THROW(render_svg(p, {"L", "missing", "", false, false, ""}), std::invalid_argument);

  const auto dir = temp_dir("svg");
  t.write(dir / "a.csv");
  emit_plot(dir / "a.csv", spec, dir / "a.svg");
  emit_plot(dir / "a.csv", spec, dir / "b.svg");
  EXPECT_EQ(slurp(dir / "a.svg"), slurp(dir / "b.svg"));
}

TEST(Harness, RunRejectsBadIdAndUnwritableDir) {
  ExperimentConfig c;
  c.experiment = "nope";
  EXPECT_THROW(run(c), std::invalid_argument);
  const auto dir = temp_dir("unwritable");
  std::ofstream(dir / "file") << "x";
  c.experiment = "identity_suite";
  c.out = (dir / "file").string();
  EXPECT_THROW(run(c), std::runtime_error);
}

TEST(Harness, IdentitySuitePassesAndIsDeterministic) {
  ExperimentConfig c;
  c.experiment = "identity_suite";
  c.out = temp_dir("identity").string();
  const RunResult r = run(c);
  EXPECT_TRUE(r.ok());
  const ParsedCsv p = read_csv(r.files.at(0));
  EXPECT_GE(p.rows.size(), 50u);
  for (const char* col : {"arch", "scheme", "d", "m", "k", "L", "seed", "dt"}) EXPECT_NO_THROW(p.column(col));
  bool has_hash = false;
  for (const auto& [k, v] : p.meta) has_hash = has_hash || k == "config_hash";
  EXPECT_TRUE(has_hash);
  expect_worker_independent(c);
}

TEST(Harness, Fig1bWritesFittedExponentAndIsDeterministic) {
  ExperimentConfig c;
  c.experiment = "fig1b";
  c.m = 32;
  c.grid_L = {4, 8, 16};
  c.grid_beta = {1.0};
  c.seeds = 2;
  c.svg = true;
  expect_worker_independent(c);
  c.out = temp_dir("fig1b").string();
  const RunResult r = run(c);
  const ParsedCsv p = read_csv(r.files.at(0));
  const std::size_t col = p.column("fit_exponent");
  EXPECT_TRUE(std::isfinite(parse_number(p.rows.at(0)[col])));
  EXPECT_EQ(r.files.size(), 2u);  // CSV and SVG
}

TEST(Harness, SmallRunsOfEveryPipeline) {
  for (const char* id : {"fig1a", "fig1c", "fig2a", "fig2b", "invariance_suite"}) {
    ExperimentConfig c;
    c.experiment = id;
    c.seeds = 2;
    c.m = 16;
    c.L = 6;
    c.grid_L = {4, 6, 8};
    c.grid_m = {8, 16, 32};
    c.grid_c = {0.5, 1.0, 2.0};
    c.out = temp_dir(id).string();
    const RunResult r = run(c);
    EXPECT_FALSE(r.files.empty()) << id;
    EXPECT_TRUE(r.ok()) << id;
    for (const auto& f : r.files) EXPECT_FALSE(read_csv(f).rows.empty()) << f;
  }
}

TEST(Harness, AuditWritesSummaryWithExpectations) {
  ExperimentConfig c;
  c.experiment = "table1_audit";
  c.seeds = 1;
  c.m = 32;
  c.L = 4;
  c.grid_L = {4, 6, 8};
  c.grid_m = {16, 32, 64};
  c.out = temp_dir("audit").string();
  const RunResult r = run(c);
  ASSERT_EQ(r.files.size(), 2u);
  const ParsedCsv s = read_csv(r.files[1]);
  EXPECT_EQ(s.rows.size(), 3u * 2u * 7u);
  EXPECT_NO_THROW(s.column("matches"));
}
