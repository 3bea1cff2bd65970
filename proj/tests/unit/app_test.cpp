#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfpm/app.hpp"
#include "mfpm/verify.hpp"

using namespace mfpm;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = MFPM_SOURCE_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mfpm_app_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + MFPM_CLI + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& command, const app::Options& o) {
  std::ostringstream out, err;
  return app::run(command, o, out, err);
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli("bogus"), 2);
  EXPECT_EQ(cli("plan --config /nonexistent.json"), 2);
  EXPECT_EQ(cli("--help"), 0);
}

TEST(Cli, PlanExitCodes) {
  const fs::path dir = scratch("plan");
  EXPECT_EQ(cli("plan --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "plan.json"));
  EXPECT_EQ(cli("plan --scene no-such-scene --out " + dir.string()), 2);

  const fs::path over = dir / "over.json";
  std::ofstream(over) << R"({"sample_count": 20})";
  EXPECT_EQ(cli("plan --config " + over.string() + " --out " + dir.string()), 1);
  const fs::path empty = dir / "empty.json";
  std::ofstream(empty) << "";
  EXPECT_EQ(cli("plan --config " + empty.string() + " --out " + dir.string()), 2);
}

TEST(Cli, ScheduleWritesChartAndFailsBelowFlickerThreshold) {
  const fs::path dir = scratch("schedule");
  EXPECT_EQ(cli("schedule --out " + dir.string()), 0);
  for (const char* f : {"chart.csv", "chart.json", "waveform.csv", "plan.json"})
    EXPECT_TRUE(fs::exists(dir / "schedule" / f)) << f;
  const fs::path slow = dir / "slow.json";
  std::ofstream(slow) << R"({"frequency_hz": 30})";
  EXPECT_EQ(cli("schedule --config " + slow.string() + " --out " + (dir / "slow").string()), 1);
}

TEST(Cli, VerifyAndFaults) {
  EXPECT_EQ(cli("verify"), 0);
  EXPECT_EQ(cli("verify --fault no-lead"), 1);
  EXPECT_EQ(cli("verify --fault nonsense"), 2);
}

TEST(Verify, AllChecksPass) {
  const auto results = verify::run(0);
  EXPECT_EQ(results.size(), 21u);
  for (const auto& r : results) EXPECT_TRUE(r.passed) << r.module << '.' << r.name << ": " << r.detail;
}

TEST(Verify, EachFaultBreaksOnlyItsCheck) {
  for (const auto& f : verify::fault_modes()) {
    const auto results = verify::run(0, f.name);
    for (const auto& r : results) {
      const bool target = r.module + "." + r.name == f.breaks;
      EXPECT_EQ(r.passed, !target) << f.name << " -> " << r.module << '.' << r.name;
    }
  }
  EXPECT_THROW(verify::run(0, "nonsense"), ArgumentError);
}

TEST(App, RenderLayout) {
  const fs::path dir = scratch("render");
  app::Options o;
  o.scene = "slanted-checker";
  o.out = dir;
  ASSERT_EQ(run("render", o), 0);
  const auto m = report::read_json(dir / "render" / "manifest.json");
  EXPECT_EQ(m["poses"].size(), 1u);
  EXPECT_TRUE(fs::exists(dir / "render" / "illumination.pgm"));
  for (const char* eye : {"left", "right"})
    for (int k = 0; k < 6; ++k) EXPECT_TRUE(fs::exists(dir / "render" / eye / report::slice_file(k)));
}

TEST(App, ConfigRelativeOutput) {
  const fs::path dir = scratch("relative");
  std::ofstream(dir / "c.json") << R"({"out": "result"})";
  app::Options o;
  o.config = dir / "c.json";
  EXPECT_EQ(app::effective_config(o).out, dir / "result");
  o.out = "elsewhere";
  EXPECT_EQ(app::effective_config(o).out, fs::path("elsewhere"));
}

TEST(App, SimulateFromSavedOutputMatchesInProcess) {
  const fs::path a = scratch("inproc"), b = scratch("from"), c = scratch("reload");
  app::Options o;
  o.scene = "slanted-checker";
  o.accommodations = {0.52};
  o.out = a;
  ASSERT_EQ(run("simulate", o), 0);
  o.out = b;
  ASSERT_EQ(run("render", o), 0);
  ASSERT_EQ(run("schedule", o), 0);
  o.out = c;
  o.from = b;
  ASSERT_EQ(run("simulate", o), 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a / "simulate")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(c / rel)) << rel;
    ++files;
  }
  EXPECT_GE(files, 5u);
}

TEST(App, SimulateFromRejectsMismatchedPlan) {
  const fs::path b = scratch("mismatch");
  app::Options o;
  o.scene = "slanted-checker";
  o.out = b;
  ASSERT_EQ(run("render", o), 0);
  ASSERT_EQ(run("schedule", o), 0);
  o.scene = "bunnies";
  o.from = b;
  o.out = b / "again";
  EXPECT_EQ(run("simulate", o), 2);
}

TEST(App, FocusReportContents) {
  const fs::path dir = scratch("focus");
  app::Options o;
  o.out = dir;
  ASSERT_EQ(run("simulate", o), 0);
  const auto r = report::read_json(dir / "simulate" / "focus_report.json");
  EXPECT_EQ(r["scene"], "bunnies");
  EXPECT_EQ(r["accommodations_m"].size(), 3u);
  const auto& left = r["poses"][0]["eyes"]["left"];
  EXPECT_EQ(left["crosstalk"].get<double>(), 0.0);
  EXPECT_TRUE(fs::exists(dir / "simulate" / "left_acc_0353mm.pgm"));
  EXPECT_TRUE(fs::exists(dir / "simulate" / "left_acc_0353mm.json"));
  std::vector<std::string> sharpest;
  for (const auto& s : r["sharpest_object"])
    if (s["eye"] == "left") sharpest.push_back(s["object"]);
  EXPECT_EQ(sharpest, (std::vector<std::string>{"bunny-near", "bunny-mid", "bunny-far"}));
}
