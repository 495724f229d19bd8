#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "dataset.hpp"
#include "pipeline.hpp"
#include "report.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI with `args`, capturing stdout; stderr is discarded.
Run cli(const std::string& args) {
  const std::string cmd = std::string(TRIPDIFF_CLI) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

const std::string kPair = "--s married --sprime single --comparison notyet";

}  // namespace

TEST_CASE("validate on the example dataset") {
  const auto dir = testing::temp_dir("cli_validate");
  const auto r = cli("validate --data data/example_panel.csv " + kPair + " --out " + dir.string());
  CHECK(r.code == 0);
  const auto report = json::parse(slurp(dir / "validation.json"));
  CHECK(report["status"] == "pass");
  REQUIRE(report["checks"].size() == 3);
  for (const auto& check : report["checks"]) {
    REQUIRE(check["cells"].size() == 4);
    for (const auto& cell : check["cells"]) CHECK(cell["count"].get<int>() > 0);
  }
  CHECK(r.out.find("pass") != std::string::npos);
}

TEST_CASE("validate reports an empty cell with exit 5") {
  const auto dir = testing::temp_dir("cli_validate_empty");
  spit(dir / "d.csv",
       "unit,time,y,cohort,subgroup\n"
       "a,1,0,2,s\na,2,1,2,s\n"
       "b,1,0,2,t\nb,2,1,2,t\n"
       "c,1,0,never,s\nc,2,1,never,s\n");
  CHECK(cli("validate --data " + (dir / "d.csv").string() + " --s s --sprime t --out " + dir.string()).code == 5);
}

TEST_CASE("estimate writes the library's table bit for bit") {
  const auto dir = testing::temp_dir("cli_estimate");
  const auto r = cli("estimate --config data/estimate_example.json --out " + dir.string());
  REQUIRE(r.code == 0);

  const auto data = tripdiff::load_panel("data/example_panel.csv");
  auto request = tripdiff::request_from_json(R"({"estimand": "both", "estimator": "dr", "comparison": "notyet",
    "s": "married", "sprime": "single",
    "aggregate": [{"g": 2, "t": 2, "weight": 0.4}, {"g": 2, "t": 3, "weight": 0.3}, {"g": 3, "t": 3, "weight": 0.3}]})");
  request.spec.covariates = data.covariate_names();
  const auto expected = tripdiff::result_to_csv(tripdiff::run_estimation(data, request));
  CHECK(slurp(dir / "report.csv") == expected);
  CHECK(r.out == expected);
}

TEST_CASE("re-running from the embedded config reproduces the report") {
  const auto first = testing::temp_dir("cli_rerun_a");
  const auto second = testing::temp_dir("cli_rerun_b");
  REQUIRE(cli("estimate --config data/estimate_example.json --out " + first.string()).code == 0);
  const auto report = json::parse(slurp(first / "report.json"));
  spit(first / "config.json", report["config"].dump(2));
  REQUIRE(cli("estimate --config " + (first / "config.json").string() + " --out " + second.string()).code == 0);
  CHECK(slurp(first / "report.json") == slurp(second / "report.json"));
  CHECK(slurp(first / "report.csv") == slurp(second / "report.csv"));
}

TEST_CASE("flags override the config file") {
  const auto dir = testing::temp_dir("cli_precedence");
  const std::string flags = "--estimator ipw --level 0.9 --g 2 --t 2 --aggregate 2:2=1";
  REQUIRE(cli("estimate --config data/estimate_example.json " + flags + " --out " + dir.string()).code == 0);
  const auto report = json::parse(slurp(dir / "report.json"));
  CHECK(report["config"]["estimator"] == "ipw");
  CHECK(report["config"]["level"] == 0.9);
  for (const auto& e : report["estimates"]) {
    CHECK(e["estimator"] == "ipw");
    CHECK(e["level"] == 0.9);
    CHECK(e["g"] == 2);
    CHECK(e["t"] == 2);
  }
}

TEST_CASE("usage and data errors") {
  const auto dir = testing::temp_dir("cli_errors");
  const auto rejected = cli("estimate --data data/example_panel.csv --estimand cdatt --estimator 3wfe " + kPair +
                            " --out " + dir.string());
  CHECK(rejected.code == 2);
  CHECK_FALSE(fs::exists(dir / "report.csv"));
  CHECK(cli("estimate --data /nonexistent.csv " + kPair + " --out " + dir.string()).code == 3);
  spit(dir / "bad.json", R"({"command": "estimate", "bogus": 1})");
  CHECK(cli("estimate --config " + (dir / "bad.json").string()).code == 2);
  CHECK(cli("estimate --data data/example_panel.csv --t 2 " + kPair).code == 2);
  CHECK(cli("frobnicate").code == 2);
}

TEST_CASE("simulate is reproducible across runs and thread counts") {
  const auto a = testing::temp_dir("cli_sim_a");
  const auto b = testing::temp_dir("cli_sim_b");
  const std::string common = "simulate --dgp data/dgp_gamma1.json --trials 20 --seed 3 --keep-trials";
  REQUIRE(cli(common + " --threads 1 --out " + a.string()).code == 0);
  REQUIRE(cli(common + " --threads 4 --out " + b.string()).code == 0);
  for (const char* f : {"mc_report.csv", "mc_report.json", "trials.csv"}) {
    INFO(f);
    CHECK(slurp(a / f) == slurp(b / f));
    CHECK_FALSE(slurp(a / f).empty());
  }
  const auto doc = json::parse(slurp(a / "mc_report.json"));
  CHECK(doc["config"]["trials"] == 20);
  CHECK(doc["config"]["dgp"]["gamma"] == 1.0);
}
