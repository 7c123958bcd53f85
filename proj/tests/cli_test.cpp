#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "polymerlab/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace polymerlab::cli;

namespace {

struct Run {
  int code = 0;
  std::string err;
  std::string out;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "polymerlab");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream err, out;
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cerr.rdbuf(old_err);
  std::cout.rdbuf(old_out);
  r.err = err.str();
  r.out = out.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("polymerlab-cli-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump();
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

json small_config() {
  return json::parse(R"({
    "env_check": {"seeds": 400},
    "lemma21": {"cases": 2, "mc_draws": 20000},
    "lemma22": {"cases": 2, "mc_draws": 20000},
    "girsanov": {"n": 8, "M": 300, "R": 10},
    "meancontrol": {"n_grid": [4, 9], "M": 300, "R": 10},
    "ball": {"n_grid": [9], "M": 200, "R": 8, "M_exact": 40, "R_exact": 4},
    "concentration": {"n_grid": [4, 8], "M": 100, "R": 30},
    "increment": {"outer": 40, "inner": 40, "i": [1, 2]},
    "n_grid": [4, 8, 12, 16],
    "alphas": [0.5, 0.75],
    "M": 200,
    "R": 6,
    "fluct_fit": {"bootstrap": 20}
  })");
}

}  // namespace

TEST_CASE("load_config: defaults and inheritance") {
  const RunConfig def = load_config(nullptr);
  CHECK(def.seed == 1);
  CHECK(def.beta == 0.5);
  CHECK(def.girsanov.budget.beta == 0.5);
  CHECK(def.girsanov.budget.paths == 2000);
  CHECK(def.concentration.budget.replicas == 400);
  CHECK(def.meancontrol.betas == std::vector<double>{0.5});
  CHECK(def.ball.centers.size() == 3);

  const RunConfig c = load_config(json::parse(R"({"beta": 0.9, "M": 77, "girsanov": {"beta": 0.2}})"));
  CHECK(c.girsanov.budget.beta == 0.2);
  CHECK(c.girsanov.budget.paths == 77);
  CHECK(c.xi_scan.budget.beta == 0.9);
  CHECK(c.increment.beta == 0.9);
  CHECK(c.resolved["girsanov"]["beta"] == 0.2);
  CHECK(c.resolved["xi_scan"]["M"] == 77);
}

TEST_CASE("load_config: validation names the field") {
  const auto field_of = [](const char* text) {
    try {
      load_config(json::parse(text));
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  CHECK(field_of(R"({"kernel": {"lambda": 0}})") == "kernel.lambda");
  CHECK(field_of(R"({"bogus": 1})") == "bogus");
  CHECK(field_of(R"({"girsanov": {"bogus": 1}})") == "girsanov.bogus");
  CHECK(field_of(R"({"n_grid": []})") == "n_grid");
  CHECK(field_of(R"({"n_grid": [8, 4, 16, 32]})") == "n_grid");
  CHECK(field_of(R"({"seed": -1})") == "seed");
  CHECK(field_of(R"({"beta": "x"})") == "beta");
  CHECK(field_of(R"({"ball": {"j": [[3]]}})").rfind("ball.j", 0) == 0);
  CHECK(field_of(R"({"increment": {"n": 7}})").rfind("increment", 0) == 0);
  CHECK(field_of(R"({"d": 2})") == "kernel.kind");
  CHECK(field_of(R"({"d": 2, "kernel": {"kind": "product-exponential"}})") == "backend.kind");
  CHECK(field_of(R"({"beta": 0.3})") == "<none>");
}

TEST_CASE("print-config round-trips") {
  const Run r = run({"print-config"});
  CHECK(r.code == 0);
  CHECK(json::parse(r.out) == default_config());
}

TEST_CASE("env-check writes its table") {
  const fs::path dir = scratch("env");
  const Run r = run({"--out", dir.string(), "--config", write_config(dir, json{{"env_check", {{"seeds", 2000}}}}),
                     "env-check"});
  CHECK(r.code == 0);
  CHECK(first_line(dir / "env_check.csv") == "position_a,position_b,target_cov,empirical_cov,z");
  const json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["command"] == "env-check");
  CHECK(manifest["exit_code"] == 0);
  for (const auto& [key, file] : manifest["outputs"].items()) {
    CHECK(fs::exists(dir / file.get<std::string>()));
    CHECK(fs::file_size(dir / file.get<std::string>()) > 0);
  }
}

TEST_CASE("configuration and usage errors exit with 2") {
  const fs::path dir = scratch("errors");
  SUBCASE("malformed JSON") {
    const fs::path p = dir / "bad.json";
    std::ofstream(p) << "{\"beta\": ";
    CHECK(run({"--out", dir.string(), "--config", p.string(), "env-check"}).code == 2);
  }
  SUBCASE("missing config file") {
    CHECK(run({"--config", (dir / "nope.json").string(), "env-check"}).code == 2);
  }
  SUBCASE("non-positive lambda") {
    const Run r = run({"--out", dir.string(), "--config",
                       write_config(dir, json{{"kernel", {{"lambda", -1.0}}}}), "verify", "girsanov"});
    CHECK(r.code == 2);
    CHECK(r.err.find("kernel.lambda") != std::string::npos);
  }
  SUBCASE("alpha at most one half") {
    const Run r = run({"--out", dir.string(), "--config", write_config(dir, json{{"alpha", 0.4}}), "verify",
                       "meancontrol"});
    CHECK(r.code == 2);
    CHECK(r.err.find("alpha") != std::string::npos);
  }
  SUBCASE("empty n grid") {
    const std::string cfg = write_config(dir, json{{"n_grid", json::array()}});
    CHECK(run({"--out", dir.string(), "--config", cfg, "xi-scan"}).code == 2);
    CHECK(run({"--out", dir.string(), "--config", cfg, "fluct-fit"}).code == 2);
  }
  SUBCASE("unknown suite and command") {
    CHECK(run({"--out", dir.string(), "verify", "lemma99"}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({}).code == 2);
  }
  SUBCASE("unknown field") {
    const Run r = run({"--out", dir.string(), "--config", write_config(dir, json{{"betta", 0.5}}), "env-check"});
    CHECK(r.code == 2);
    CHECK(r.err.find("betta") != std::string::npos);
  }
}

TEST_CASE("girsanov at zero disorder is exactly zero") {
  const fs::path dir = scratch("girsanov");
  const json cfg{{"beta", 0.0}, {"girsanov", {{"n", 10}, {"M", 200}, {"R", 5}}}};
  const Run r = run({"--out", dir.string(), "--config", write_config(dir, cfg), "verify", "girsanov"});
  CHECK(r.code == 0);
  std::ifstream in(dir / "verify_girsanov.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "name,estimate,stderr,lower_bound,upper_bound,margin_sigmas,pass,note");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::istringstream fields(line);
    std::string name, estimate;
    std::getline(fields, name, ',');
    std::getline(fields, estimate, ',');
    CHECK(std::stod(estimate) == 0.0);
  }
  CHECK(rows == 2);
}

TEST_CASE("verify all with a small budget, and reruns are byte-identical") {
  const fs::path a = scratch("all-a");
  const fs::path b = scratch("all-b");
  const json cfg = small_config();
  const Run ra = run({"--out", a.string(), "--config", write_config(a, cfg), "--threads", "1", "verify", "all"});
  const Run rb = run({"--out", b.string(), "--config", write_config(b, cfg), "--threads", "3", "verify", "all"});
  CHECK(ra.code == 0);
  CHECK(rb.code == 0);
  const json manifest = json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["outputs"].size() == 7);
  CHECK(manifest["pass"] == true);
  CHECK(manifest["version"] == kArtifactVersion);
  for (const auto& [suite, file] : manifest["outputs"].items()) {
    const auto name = file.get<std::string>();
    CHECK(fs::file_size(a / name) > 0);
    CHECK(slurp(a / name) == slurp(b / name));
  }
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
  CHECK(slurp(a / "concentration_table.csv") == slurp(b / "concentration_table.csv"));
  const json summary = json::parse(slurp(a / "summary.json"));
  CHECK(summary["suites"].size() == 7);
  CHECK(summary["failed"] == 0);
}

TEST_CASE("scans honor --seed") {
  const fs::path a = scratch("scan-a");
  const fs::path b = scratch("scan-b");
  const json cfg = small_config();
  CHECK(run({"--out", a.string(), "--config", write_config(a, cfg), "--seed", "5", "xi-scan"}).code == 0);
  CHECK(run({"--out", b.string(), "--config", write_config(b, cfg), "--seed", "6", "xi-scan"}).code == 0);
  CHECK(first_line(a / "xi_scan.csv") == "n,alpha,event,mass_mean,mass_stderr,R,M,seed");
  CHECK(slurp(a / "xi_scan.csv") != slurp(b / "xi_scan.csv"));
  const json manifest = json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["config"]["seed"] == 5);

  CHECK(run({"--out", a.string(), "--config", write_config(a, cfg), "--seed", "5", "fluct-fit"}).code == 0);
  const json fit = json::parse(slurp(a / "fluct_fit.json"));
  CHECK(fit["informational"] == true);
  CHECK(fit["n_grid"].size() == 4);
  CHECK(fit["ci_low"].get<double>() <= fit["ci_high"].get<double>());
}
