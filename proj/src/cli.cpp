#include "polymerlab/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "polymerlab/csv.hpp"
#include "polymerlab/errors.hpp"
#include "polymerlab/parallel.hpp"
#include "polymerlab/rng.hpp"

namespace polymerlab::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---- configuration

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void merge_into(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "must be a JSON object");
  for (const auto& [key, value] : user.items()) {
    const std::string p = join(path, key);
    if (!base.contains(key)) throw ConfigError(p, "unknown field");
    json& slot = base[key];
    if (slot.is_object()) {
      merge_into(slot, value, p);
    } else {
      slot = value;
    }
  }
}

double get_double(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
  return v;
}

double positive(const json& j, const std::string& path) {
  const double v = get_double(j, path);
  if (!(v > 0.0)) throw ConfigError(path, "must be positive");
  return v;
}

double non_negative(const json& j, const std::string& path) {
  const double v = get_double(j, path);
  if (!(v >= 0.0)) throw ConfigError(path, "must be non-negative");
  return v;
}

int get_int(const json& j, const std::string& path, int min_value) {
  if (!j.is_number_integer()) throw ConfigError(path, "must be an integer");
  const auto v = j.get<long long>();
  if (v < min_value) throw ConfigError(path, "must be at least " + std::to_string(min_value));
  if (v > 1'000'000'000LL) throw ConfigError(path, "is too large");
  return static_cast<int>(v);
}

std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "must be a string");
  return j.get<std::string>();
}

const json& array_of(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "must be an array");
  if (j.empty()) throw ConfigError(path, "must not be empty");
  return j;
}

std::vector<int> n_grid_of(const json& j, const std::string& path) {
  std::vector<int> out;
  const json& a = array_of(j, path);
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(get_int(a[i], path + "[" + std::to_string(i) + "]", 1));
  if (!std::is_sorted(out.begin(), out.end())) throw ConfigError(path, "must be sorted ascending");
  return out;
}

std::vector<double> doubles_of(const json& j, const std::string& path) {
  std::vector<double> out;
  const json& a = array_of(j, path);
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(get_double(a[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

Budget budget_of(const json& section, const std::string& path) {
  Budget b;
  b.beta = non_negative(section["beta"], path + ".beta");
  b.paths = get_int(section["M"], path + ".M", 1);
  b.replicas = get_int(section["R"], path + ".R", 2);
  return b;
}

void inherit(json& section, const char* key, const json& value) {
  if (section[key].is_null()) section[key] = value;
}

RunConfig::Lemma lemma_of(const json& s, const std::string& path) {
  RunConfig::Lemma l;
  l.cases = get_int(s["cases"], path + ".cases", 1);
  l.max_atoms = get_int(s["max_atoms"], path + ".max_atoms", 1);
  if (l.max_atoms > 4) throw ConfigError(path + ".max_atoms", "must be at most 4");
  l.mc_draws = get_int(s["mc_draws"], path + ".mc_draws", 2);
  l.nodes_per_dim = get_int(s["nodes_per_dim"], path + ".nodes_per_dim", 0);
  return l;
}

SlicePoint parse_point(const std::string& text, int d, const std::string& path) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError(path, "expected 'slice:x1|x2|...'");
  SlicePoint p;
  try {
    std::size_t used = 0;
    p.slice = std::stoi(text.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument("slice");
    std::stringstream coords(text.substr(colon + 1));
    coords.imbue(std::locale::classic());
    std::string part;
    while (std::getline(coords, part, '|')) {
      std::size_t n = 0;
      p.x.push_back(std::stod(part, &n));
      if (n != part.size()) throw std::invalid_argument("coordinate");
    }
  } catch (const std::logic_error&) {
    throw ConfigError(path, "cannot parse point '" + text + "'");
  }
  if (p.slice < 1) throw ConfigError(path, "slice must be at least 1");
  if (static_cast<int>(p.x.size()) != d) throw ConfigError(path, "point needs " + std::to_string(d) + " coordinates");
  return p;
}

}  // namespace

json default_config() {
  return json{
      {"seed", 1},
      {"d", 1},
      {"beta", 0.5},
      {"kernel", {{"kind", "exponential-petermann"}, {"lambda", 1.0}, {"normalize", true}}},
      {"backend", {{"kind", "grid"}, {"h", 0.0}, {"L", 0.0}}},
      {"n_grid", {16, 32, 64, 128}},
      {"alphas", {0.5, 0.6, 0.7, 0.75, 0.8, 0.9, 1.0}},
      {"alpha", 0.8},
      {"nu", 0.75},
      {"M", 2000},
      {"R", 100},
      {"threads", 0},
      {"output_dir", "polymerlab-out"},
      {"env_check",
       {{"seeds", 10000},
        {"pairs", json::array({json::array({"1:0", "1:0"}), json::array({"1:0", "1:0.5"}),
                               json::array({"1:0", "1:1"}), json::array({"1:0.5", "1:2"}),
                               json::array({"1:-1", "1:1"}), json::array({"1:0", "2:0"})})}}},
      {"lemma21", {{"cases", 10}, {"max_atoms", 4}, {"mc_draws", 200000}, {"nodes_per_dim", 0}}},
      {"lemma22", {{"cases", 10}, {"max_atoms", 4}, {"mc_draws", 200000}, {"nodes_per_dim", 0}}},
      {"girsanov",
       {{"n", 20}, {"lambdas", {0.1, 0.2}}, {"route", "paired_shift"}, {"beta", nullptr}, {"M", nullptr},
        {"R", nullptr}}},
      {"meancontrol", {{"n_grid", {4, 9, 16, 25}}, {"betas", nullptr}, {"M", nullptr}, {"R", nullptr}}},
      {"ball",
       {{"n_grid", {9, 16}},
        {"j", json::array({json::array({2}), json::array({4}), json::array({2, 2})})},
        {"multi_kernel", "product-exponential"},
        {"beta", nullptr},
        {"M", nullptr},
        {"R", nullptr},
        {"M_exact", 200},
        {"R_exact", 50}}},
      {"concentration",
       {{"n_grid", {8, 16, 32, 64}},
        {"functionals", {"logZ", "logW_event"}},
        {"beta", nullptr},
        {"M", nullptr},
        {"R", 400}}},
      {"increment",
       {{"n", 4}, {"j", 4}, {"i", {1, 2, 3, 4}}, {"outer", 2000}, {"inner", 2000}, {"paths", 32}, {"beta", nullptr}}},
      {"xi_scan", {{"events", {"endpoint", "running_max"}}, {"beta", nullptr}, {"M", nullptr}, {"R", nullptr}}},
      {"fluct_fit", {{"bootstrap", 500}, {"beta", nullptr}, {"M", nullptr}, {"R", nullptr}}},
  };
}

RunConfig load_config(const json& user) {
  json j = default_config();
  if (!user.is_null()) merge_into(j, user, "");

  for (const char* section : {"girsanov", "ball", "concentration", "xi_scan", "fluct_fit"}) {
    inherit(j[section], "beta", j["beta"]);
    inherit(j[section], "M", j["M"]);
    inherit(j[section], "R", j["R"]);
  }
  inherit(j["meancontrol"], "M", j["M"]);
  inherit(j["meancontrol"], "R", j["R"]);
  inherit(j["meancontrol"], "betas", json::array({j["beta"]}));
  inherit(j["increment"], "beta", j["beta"]);

  RunConfig c;
  if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<long long>() >= 0))
    throw ConfigError("seed", "must be a non-negative integer");
  c.seed = j["seed"].get<std::uint64_t>();
  c.dimension = get_int(j["d"], "d", 1);
  c.beta = non_negative(j["beta"], "beta");

  const json& k = j["kernel"];
  try {
    c.kernel.kind = parse_kernel_kind(get_string(k["kind"], "kernel.kind"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("kernel.kind", e.what());
  }
  c.kernel.lambda = positive(k["lambda"], "kernel.lambda");
  if (!k["normalize"].is_boolean()) throw ConfigError("kernel.normalize", "must be a boolean");
  c.kernel.normalize_unit_variance = k["normalize"].get<bool>();
  try {
    validate(c.kernel, c.dimension);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("kernel.kind", e.what());
  }

  const json& b = j["backend"];
  try {
    c.backend = parse_backend(get_string(b["kind"], "backend.kind"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("backend.kind", e.what());
  }
  if (c.backend == Backend::grid && c.dimension != 1) throw ConfigError("backend.kind", "the grid backend needs d = 1");
  c.grid_spacing = non_negative(b["h"], "backend.h");
  c.grid_halfwidth = non_negative(b["L"], "backend.L");

  c.n_grid = n_grid_of(j["n_grid"], "n_grid");
  c.alphas = doubles_of(j["alphas"], "alphas");
  for (double a : c.alphas)
    if (!(a > 0.0)) throw ConfigError("alphas", "entries must be positive");
  c.alpha = positive(j["alpha"], "alpha");
  c.nu = positive(j["nu"], "nu");
  c.paths = get_int(j["M"], "M", 1);
  c.replicas = get_int(j["R"], "R", 2);
  c.threads = get_int(j["threads"], "threads", 0);
  c.output_dir = get_string(j["output_dir"], "output_dir");
  if (c.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");

  const json& ec = j["env_check"];
  c.env_check.seeds = get_int(ec["seeds"], "env_check.seeds", 100);
  const json& pairs = array_of(ec["pairs"], "env_check.pairs");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string p = "env_check.pairs[" + std::to_string(i) + "]";
    if (!pairs[i].is_array() || pairs[i].size() != 2) throw ConfigError(p, "must be a pair of points");
    c.env_check.pairs.emplace_back(get_string(pairs[i][0], p), get_string(pairs[i][1], p));
    parse_point(c.env_check.pairs.back().first, c.dimension, p);
    parse_point(c.env_check.pairs.back().second, c.dimension, p);
  }

  c.lemma21 = lemma_of(j["lemma21"], "lemma21");
  c.lemma22 = lemma_of(j["lemma22"], "lemma22");

  const json& g = j["girsanov"];
  c.girsanov.n = get_int(g["n"], "girsanov.n", 1);
  c.girsanov.lambdas = doubles_of(g["lambdas"], "girsanov.lambdas");
  const std::string route = get_string(g["route"], "girsanov.route");
  if (route == "paired_shift")
    c.girsanov.route = GirsanovRoute::paired_shift;
  else if (route == "direct_reweight")
    c.girsanov.route = GirsanovRoute::direct_reweight;
  else
    throw ConfigError("girsanov.route", "must be paired_shift or direct_reweight");
  c.girsanov.budget = budget_of(g, "girsanov");

  const json& mc = j["meancontrol"];
  c.meancontrol.n_grid = n_grid_of(mc["n_grid"], "meancontrol.n_grid");
  c.meancontrol.betas = doubles_of(mc["betas"], "meancontrol.betas");
  for (double v : c.meancontrol.betas)
    if (!(v >= 0.0)) throw ConfigError("meancontrol.betas", "entries must be non-negative");
  c.meancontrol.budget = {c.beta, get_int(mc["M"], "meancontrol.M", 1), get_int(mc["R"], "meancontrol.R", 2)};

  const json& bl = j["ball"];
  c.ball.n_grid = n_grid_of(bl["n_grid"], "ball.n_grid");
  const json& centers = array_of(bl["j"], "ball.j");
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const std::string p = "ball.j[" + std::to_string(i) + "]";
    std::vector<int> center;
    const json& a = array_of(centers[i], p);
    bool zero = true;
    for (const auto& v : a) {
      if (!v.is_number_integer() || v.get<long long>() % 2 != 0) throw ConfigError(p, "entries must be even integers");
      center.push_back(v.get<int>());
      zero = zero && center.back() == 0;
    }
    if (zero) throw ConfigError(p, "must be non-zero");
    c.ball.centers.push_back(std::move(center));
  }
  try {
    c.ball.multi_kernel = parse_kernel_kind(get_string(bl["multi_kernel"], "ball.multi_kernel"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("ball.multi_kernel", e.what());
  }
  if (c.ball.multi_kernel == KernelKind::exponential_petermann)
    throw ConfigError("ball.multi_kernel", "must be defined for d > 1");
  c.ball.budget = budget_of(bl, "ball");
  c.ball.paths_exact = get_int(bl["M_exact"], "ball.M_exact", 1);
  c.ball.replicas_exact = get_int(bl["R_exact"], "ball.R_exact", 2);

  const json& co = j["concentration"];
  c.concentration.n_grid = n_grid_of(co["n_grid"], "concentration.n_grid");
  for (const auto& f : array_of(co["functionals"], "concentration.functionals")) {
    const std::string name = get_string(f, "concentration.functionals");
    if (name == "logZ")
      c.concentration.functionals.push_back(ConcentrationFunctional::log_partition);
    else if (name == "logW_event")
      c.concentration.functionals.push_back(ConcentrationFunctional::log_event_weight);
    else
      throw ConfigError("concentration.functionals", "unknown functional '" + name + "'");
  }
  c.concentration.budget = budget_of(co, "concentration");

  const json& in = j["increment"];
  c.increment.n = get_int(in["n"], "increment.n", 1);
  if (c.increment.n > 6) throw ConfigError("increment.n", "must be at most 6");
  c.increment.j = get_int(in["j"], "increment.j", 1);
  if (c.increment.j > c.increment.n) throw ConfigError("increment.j", "must not exceed increment.n");
  for (const auto& v : array_of(in["i"], "increment.i")) {
    c.increment.i.push_back(get_int(v, "increment.i", 1));
    if (c.increment.i.back() > c.increment.n) throw ConfigError("increment.i", "entries must not exceed increment.n");
  }
  c.increment.outer = get_int(in["outer"], "increment.outer", 2);
  c.increment.inner = get_int(in["inner"], "increment.inner", 2);
  c.increment.paths = get_int(in["paths"], "increment.paths", 1);
  c.increment.beta = non_negative(in["beta"], "increment.beta");

  const json& xs = j["xi_scan"];
  for (const auto& e : array_of(xs["events"], "xi_scan.events")) {
    try {
      c.xi_scan.events.push_back(parse_scan_event(get_string(e, "xi_scan.events")));
    } catch (const std::invalid_argument& err) {
      throw ConfigError("xi_scan.events", err.what());
    }
  }
  c.xi_scan.budget = budget_of(xs, "xi_scan");

  const json& ff = j["fluct_fit"];
  c.fluct_fit.bootstrap = get_int(ff["bootstrap"], "fluct_fit.bootstrap", 1);
  c.fluct_fit.budget = budget_of(ff, "fluct_fit");

  c.resolved = std::move(j);
  return c;
}

namespace {

// ---- orchestration

struct RunContext {
  RunConfig config;
  fs::path out_dir;
  int threads = 1;
  json outputs = json::object();
  json tables = json::object();
  json timings = json::object();
};

// Suite identifiers keep replica seeds independent between suites.
enum SuiteId : std::uint64_t {
  kEnvCheck = 1,
  kLemma21,
  kLemma22,
  kGirsanov,
  kMeanControl,
  kBall,
  kConcentration,
  kIncrement,
  kXiScan,
  kFluctFit,
};

std::vector<std::uint64_t> suite_seeds(const RunConfig& c, SuiteId id, int replicas) {
  return replica_seeds(derive_seed(c.seed, StreamTag::replica_env, {id}), replicas);
}

PolymerSetup setup_of(const RunContext& ctx) {
  PolymerSetup s;
  s.kernel = ctx.config.kernel;
  s.dimension = ctx.config.dimension;
  s.backend = ctx.config.backend;
  s.grid_spacing = ctx.config.grid_spacing;
  s.min_halfwidth = ctx.config.grid_halfwidth;
  s.threads = ctx.threads;
  return s;
}

// The polymer checks other than the ball bounds live in d = 1; every kernel
// is defined there and the grid backend applies.
PolymerSetup one_dimensional_setup(const RunContext& ctx) {
  PolymerSetup s = setup_of(ctx);
  if (s.dimension != 1) {
    s.dimension = 1;
    s.backend = Backend::grid;
  }
  return s;
}

GibbsParams params_of(const Budget& b, int n = 16) {
  GibbsParams p;
  p.beta = b.beta;
  p.n = n;
  p.paths = b.paths;
  p.replicas = b.replicas;
  return p;
}

std::string tagged(const std::string& name, const std::string& tag) { return tag + " " + name; }

std::vector<BoundCheckReport> run_lemma21(const RunContext& ctx) {
  const auto& l = ctx.config.lemma21;
  const auto cases = random_expo_cases(derive_seed(ctx.config.seed, StreamTag::case_generator, {kLemma21}), l.cases,
                                       l.max_atoms);
  std::vector<BoundCheckReport> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const std::string tag = "case" + std::to_string(i);
    OracleOptions quad;
    quad.nodes_per_dim = l.nodes_per_dim;
    OracleOptions mc;
    mc.mc_draws = l.mc_draws;
    mc.seed = derive_seed(ctx.config.seed, StreamTag::quadrature_mc, {kLemma21, i});
    const OracleValue q = expo_ineq_expectation(cases[i], OracleMethod::quadrature, quad);
    const OracleValue m = expo_ineq_expectation(cases[i], OracleMethod::monte_carlo, mc);
    BoundCheckReport rq = check_expo_ineq(cases[i], OracleMethod::quadrature, quad);
    BoundCheckReport rm = check_expo_ineq(cases[i], OracleMethod::monte_carlo, mc);
    rq.name = tagged(rq.name, tag) + " quadrature";
    rm.name = tagged(rm.name, tag) + " mc";
    out.push_back(std::move(rq));
    out.push_back(std::move(rm));
    out.push_back(agreement_report(tag + " expo-ineq mc-vs-quadrature", m, q));
  }
  return out;
}

std::vector<BoundCheckReport> run_lemma22(const RunContext& ctx) {
  const auto& l = ctx.config.lemma22;
  const auto cases = random_expo_cases(derive_seed(ctx.config.seed, StreamTag::case_generator, {kLemma22}), l.cases,
                                       l.max_atoms);
  std::vector<BoundCheckReport> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    const std::string tag = "case" + std::to_string(i);
    OracleOptions quad;
    quad.nodes_per_dim = l.nodes_per_dim;
    OracleOptions mc;
    mc.mc_draws = l.mc_draws;
    mc.seed = derive_seed(ctx.config.seed, StreamTag::quadrature_mc, {kLemma22, i});
    const OracleValue q = log_moment_expectation(c.mu, c.beta, c.kernel, OracleMethod::quadrature, quad);
    const OracleValue m = log_moment_expectation(c.mu, c.beta, c.kernel, OracleMethod::monte_carlo, mc);
    BoundCheckReport rq = check_log_moment_bounds(c.mu, c.beta, c.kernel, OracleMethod::quadrature, quad);
    BoundCheckReport rm = check_log_moment_bounds(c.mu, c.beta, c.kernel, OracleMethod::monte_carlo, mc);
    rq.name = tagged(rq.name, tag) + " quadrature";
    rm.name = tagged(rm.name, tag) + " mc";
    out.push_back(std::move(rq));
    out.push_back(std::move(rm));
    out.push_back(agreement_report(tag + " log-moment mc-vs-quadrature", m, q));

    // A point mass has E log = -beta^2 sigma^2 / 2 exactly.
    const FiniteMeasure point{{c.mu.atoms.front()}, {1.0}};
    const double exact = -0.5 * c.beta * c.beta * c.sigma2();
    const OracleValue p = log_moment_expectation(point, c.beta, c.kernel, OracleMethod::quadrature, quad);
    out.push_back(make_report(tag + " log-moment single-atom", p.value, 0.0, exact - 1e-6, exact + 1e-6,
                              "exact=" + format_double(exact)));
  }
  return out;
}

std::vector<BoundCheckReport> run_girsanov(const RunContext& ctx) {
  const auto& g = ctx.config.girsanov;
  const auto seeds = suite_seeds(ctx.config, kGirsanov, g.budget.replicas);
  std::vector<BoundCheckReport> out;
  for (double lambda : g.lambdas)
    out.push_back(girsanov_identity_test(params_of(g.budget, g.n), lambda, seeds, one_dimensional_setup(ctx), g.route));
  return out;
}

std::vector<BoundCheckReport> run_meancontrol(const RunContext& ctx) {
  const auto& m = ctx.config.meancontrol;
  const double alpha = ctx.config.alpha;
  if (!(alpha > 0.5)) throw ConfigError("alpha", "mean control needs alpha > 1/2");
  const auto seeds = suite_seeds(ctx.config, kMeanControl, m.budget.replicas);
  std::vector<BoundCheckReport> out;
  for (int n : m.n_grid) out.push_back(mean_control_analytic(alpha, n));
  for (double beta : m.betas) {
    Budget b = m.budget;
    b.beta = beta;
    for (auto& r : mean_control_test(alpha, m.n_grid, params_of(b), seeds, one_dimensional_setup(ctx)))
      out.push_back(std::move(r));
  }
  return out;
}

std::vector<BoundCheckReport> run_ball(const RunContext& ctx) {
  const auto& bl = ctx.config.ball;
  std::vector<BoundCheckReport> out;
  for (const auto& center : bl.centers) {
    const int d = static_cast<int>(center.size());
    PolymerSetup setup = one_dimensional_setup(ctx);
    setup.dimension = d;
    Budget budget = bl.budget;
    if (d > 1) {
      setup.backend = Backend::exact;
      setup.kernel.kind = bl.multi_kernel;
      budget.paths = bl.paths_exact;
      budget.replicas = bl.replicas_exact;
    }
    const auto seeds = suite_seeds(ctx.config, kBall, budget.replicas);
    for (int n : bl.n_grid)
      out.push_back(ball_bound_test(ctx.config.alpha, n, n, center, params_of(budget, n), seeds, setup));
  }
  return out;
}

std::vector<BoundCheckReport> run_concentration(RunContext& ctx) {
  const auto& co = ctx.config.concentration;
  if (!(ctx.config.nu > 0.5)) throw ConfigError("nu", "concentration needs nu > 1/2");
  const auto seeds = suite_seeds(ctx.config, kConcentration, co.budget.replicas);
  std::vector<ConcentrationRow> rows;
  std::vector<BoundCheckReport> out;
  for (auto f : co.functionals) {
    const auto part = concentration_scan(params_of(co.budget), ctx.config.nu, co.n_grid, f, seeds,
                                         one_dimensional_setup(ctx));
    for (auto& r : concentration_checks(part)) out.push_back(std::move(r));
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const std::string file = "concentration_table.csv";
  CsvWriter csv(ctx.out_dir / file,
                {"n", "functional", "nu", "mean", "std", "exceed_freq", "exceed_stderr", "tail_bound", "trend_ratio",
                 "union_freq", "union_bound", "R", "M", "min_ess_frac"});
  for (const auto& r : rows)
    csv.row({std::to_string(r.n), to_string(r.functional), format_double(r.nu), format_double(r.mean),
             format_double(r.std_dev), format_double(r.exceed_freq), format_double(r.exceed_stderr),
             format_double(r.tail_bound), format_double(r.trend_ratio), format_double(r.union_freq),
             format_double(r.union_bound), std::to_string(r.replicas), std::to_string(r.paths),
             format_double(r.min_ess_frac)});
  ctx.tables["concentration"] = file;
  return out;
}

std::vector<BoundCheckReport> run_increment(const RunContext& ctx) {
  const auto& in = ctx.config.increment;
  std::vector<BoundCheckReport> out;
  for (int i : in.i) {
    IncrementProbeConfig p;
    p.n = in.n;
    p.j = in.j;
    p.i = i;
    p.beta = in.beta;
    p.outer = in.outer;
    p.inner = in.inner;
    p.paths = in.paths;
    p.seed = derive_seed(ctx.config.seed, StreamTag::probe_outer, {kIncrement});
    p.kernel = one_dimensional_setup(ctx).kernel;
    p.grid_spacing = ctx.config.grid_spacing;
    p.threads = ctx.threads;
    out.push_back(martingale_increment_probe(p).report);
  }
  return out;
}

using SuiteRunner = std::vector<BoundCheckReport> (*)(RunContext&);

const std::vector<std::pair<std::string, SuiteRunner>>& suites() {
  static const std::vector<std::pair<std::string, SuiteRunner>> table = {
      {"lemma21", [](RunContext& c) { return run_lemma21(c); }},
      {"lemma22", [](RunContext& c) { return run_lemma22(c); }},
      {"girsanov", [](RunContext& c) { return run_girsanov(c); }},
      {"meancontrol", [](RunContext& c) { return run_meancontrol(c); }},
      {"ball", [](RunContext& c) { return run_ball(c); }},
      {"concentration", [](RunContext& c) { return run_concentration(c); }},
      {"increment", [](RunContext& c) { return run_increment(c); }},
  };
  return table;
}

void write_reports(const fs::path& path, const std::vector<BoundCheckReport>& reports) {
  CsvWriter csv(path, {"name", "estimate", "stderr", "lower_bound", "upper_bound", "margin_sigmas", "pass", "note"});
  for (const auto& r : reports)
    csv.row({r.name, format_double(r.estimate), format_double(r.std_error), format_double(r.lower_bound),
             format_double(r.upper_bound), format_double(r.margin_sigmas), r.pass ? "true" : "false", r.note});
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json suite_summary(const std::string& name, const std::vector<BoundCheckReport>& reports) {
  int passed = 0;
  double worst = std::numeric_limits<double>::infinity();
  std::string worst_name;
  for (const auto& r : reports) {
    passed += r.pass ? 1 : 0;
    if (r.margin_sigmas < worst || worst_name.empty()) {
      worst = r.margin_sigmas;
      worst_name = r.name;
    }
  }
  return json{{"suite", name},
              {"checks", reports.size()},
              {"passed", passed},
              {"failed", static_cast<int>(reports.size()) - passed},
              {"worst_margin_sigmas", finite_or_null(worst)},
              {"worst_check", worst_name}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_summary(RunContext& ctx, const std::string& command, const json& suite_rows) {
  int checks = 0, passed = 0;
  for (const auto& s : suite_rows) {
    checks += s["checks"].get<int>();
    passed += s["passed"].get<int>();
  }
  const json summary{{"command", command},
                     {"suites", suite_rows},
                     {"checks", checks},
                     {"passed", passed},
                     {"failed", checks - passed},
                     {"pass", checks == passed}};
  write_json(ctx.out_dir / "summary.json", summary);
}

void write_manifest(RunContext& ctx, const std::string& command, int exit_code) {
  json config = ctx.config.resolved;
  config["threads"] = ctx.threads;
  config["output_dir"] = ctx.out_dir.generic_string();
  json manifest{{"artifact", "polymerlab"},
                {"version", kArtifactVersion},
                {"command", command},
                {"config", config},
                {"outputs", ctx.outputs},
                {"tables", ctx.tables},
                {"timings_seconds", ctx.timings},
                {"exit_code", exit_code},
                {"pass", exit_code == 0}};
  if (fs::exists(ctx.out_dir / "summary.json")) manifest["summary"] = "summary.json";
  write_json(ctx.out_dir / "manifest.json", manifest);
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

int cmd_env_check(RunContext& ctx) {
  const RunConfig& c = ctx.config;
  Stopwatch clock;
  std::vector<SlicePoint> points;
  std::vector<std::string> labels;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double reach = 0.0;
  auto index_of = [&](const std::string& text) {
    const auto it = std::find(labels.begin(), labels.end(), text);
    if (it != labels.end()) return static_cast<std::size_t>(it - labels.begin());
    points.push_back(parse_point(text, c.dimension, "env_check.pairs"));
    for (double x : points.back().x) reach = std::max(reach, std::fabs(x));
    labels.push_back(text);
    return labels.size() - 1;
  };
  for (const auto& [a, b] : c.env_check.pairs) {
    const std::size_t ia = index_of(a);
    pairs.emplace_back(ia, index_of(b));
  }
  EnvironmentConfig base;
  base.seed = derive_seed(c.seed, StreamTag::replica_env, {kEnvCheck});
  base.kernel = c.kernel;
  base.dimension = c.dimension;
  base.backend = c.backend;
  base.grid_spacing = c.grid_spacing;
  base.grid_halfwidth = c.grid_halfwidth > 0.0 ? c.grid_halfwidth : std::ceil(reach) + 2.0;

  const auto checks = covariance_selftest(base, points, pairs, c.env_check.seeds);
  const std::string file = "env_check.csv";
  CsvWriter csv(ctx.out_dir / file, {"position_a", "position_b", "target_cov", "empirical_cov", "z"});
  std::vector<BoundCheckReport> reports;
  for (const auto& check : checks) {
    csv.row({format_slice_point(check.a), format_slice_point(check.b), format_double(check.target),
             format_double(check.empirical), format_double(check.z)});
    // |z| < 4 as a report: estimate z against [0, 0] with unit standard error.
    reports.push_back(make_report(format_slice_point(check.a) + " " + format_slice_point(check.b), check.z, 1.0, 0.0,
                                  0.0));
  }
  ctx.outputs["env-check"] = file;
  ctx.timings["env-check"] = clock.seconds();
  bool ok = std::all_of(checks.begin(), checks.end(), [](const CovarianceCheck& k) { return std::fabs(k.z) < 4.0; });
  write_summary(ctx, "env-check", json::array({suite_summary("env-check", reports)}));
  return ok ? 0 : 1;
}

int cmd_verify(RunContext& ctx, const std::string& suite) {
  std::vector<std::pair<std::string, SuiteRunner>> selected;
  for (const auto& s : suites())
    if (suite == "all" || suite == s.first) selected.push_back(s);
  if (selected.empty()) throw ConfigError("suite", "unknown suite '" + suite + "'");

  json rows = json::array();
  bool ok = true;
  for (const auto& [name, runner] : selected) {
    Stopwatch clock;
    const auto reports = runner(ctx);
    const std::string file = "verify_" + name + ".csv";
    write_reports(ctx.out_dir / file, reports);
    ctx.outputs[name] = file;
    ctx.timings[name] = clock.seconds();
    rows.push_back(suite_summary(name, reports));
    for (const auto& r : reports) {
      if (r.note.find("low_ess") != std::string::npos)
        std::cerr << "warning " << name << ": " << r.name << " has ESS below 0.01 M in some replica\n";
      if (!r.pass) {
        ok = false;
        std::cerr << "FAIL " << name << ": " << r.name << " estimate=" << format_double(r.estimate)
                  << " bounds=[" << format_double(r.lower_bound) << ", " << format_double(r.upper_bound)
                  << "] margin=" << format_double(r.margin_sigmas) << " sigma\n";
      }
    }
  }
  write_summary(ctx, "verify " + suite, rows);
  return ok ? 0 : 1;
}

void require_n_grid(const RunConfig& c) {
  if (c.n_grid.empty()) throw ConfigError("n_grid", "must not be empty");
}

int cmd_xi_scan(RunContext& ctx) {
  const RunConfig& c = ctx.config;
  require_n_grid(c);
  Stopwatch clock;
  const auto& xs = c.xi_scan;
  const auto seeds = suite_seeds(c, kXiScan, xs.budget.replicas);
  const ScanResult result = xi_scan(c.alphas, c.n_grid, params_of(xs.budget), seeds, setup_of(ctx), xs.events, c.seed);
  const std::string file = "xi_scan.csv";
  CsvWriter csv(ctx.out_dir / file, {"n", "alpha", "event", "mass_mean", "mass_stderr", "R", "M", "seed"});
  for (const auto& r : result.rows)
    csv.row({std::to_string(r.n), format_double(r.alpha), to_string(r.event), format_double(r.mass_mean),
             format_double(r.mass_stderr), std::to_string(r.replicas), std::to_string(r.paths),
             std::to_string(result.seed)});
  ctx.outputs["xi-scan"] = file;
  ctx.timings["xi-scan"] = clock.seconds();
  return 0;
}

int cmd_fluct_fit(RunContext& ctx) {
  const RunConfig& c = ctx.config;
  require_n_grid(c);
  Stopwatch clock;
  const auto& ff = c.fluct_fit;
  const auto seeds = suite_seeds(c, kFluctFit, ff.budget.replicas);
  FluctuationFit fit;
  try {
    fit = fluctuation_fit(c.n_grid, params_of(ff.budget), seeds, setup_of(ctx), ff.bootstrap,
                          derive_seed(c.seed, StreamTag::bootstrap, {kFluctFit}));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("n_grid", e.what());
  }
  json out{{"xi_hat", fit.xi_hat},
           {"ci_low", fit.ci_low},
           {"ci_high", fit.ci_high},
           {"n_grid", fit.n_grid},
           {"beta", fit.beta},
           {"lambda", fit.lambda},
           {"d", fit.dimension},
           {"informational", fit.informational},
           {"median_spread", fit.median_spread},
           {"mean_spread", fit.mean_spread},
           {"spread_stderr", fit.spread_stderr},
           {"R", ff.budget.replicas},
           {"M", ff.budget.paths},
           {"bootstrap", ff.bootstrap}};
  if (fit.dimension == 1) out["reference_band"] = {0.6, 0.75};
  const std::string file = "fluct_fit.json";
  write_json(ctx.out_dir / file, out);
  ctx.outputs["fluct-fit"] = file;
  ctx.timings["fluct-fit"] = clock.seconds();
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Directed polymers in a Gaussian random environment: numerical checks and scans"};
  app.set_version_flag("--version", kArtifactVersion);
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out_dir;
  auto* seed_opt = app.add_option("--seed", seed, "Seed (overrides the config)");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads")->check(CLI::NonNegativeNumber);
  auto* out_opt = app.add_option("--out", out_dir, "Output directory (overrides the config)");
  app.add_option("--config", config_path, "JSON configuration file");

  auto* env_cmd = app.add_subcommand("env-check", "Covariance self-test of the environment sampler")->fallthrough();
  std::string suite;
  auto* verify_cmd = app.add_subcommand("verify", "Run inequality checks")->fallthrough();
  verify_cmd
      ->add_option("suite", suite,
                   "lemma21, lemma22, girsanov, meancontrol, ball, concentration, increment or all")
      ->required();
  auto* scan_cmd = app.add_subcommand("xi-scan", "Gibbs mass of n^alpha boxes")->fallthrough();
  auto* fit_cmd = app.add_subcommand("fluct-fit", "Log-log fit of the transverse spread")->fallthrough();
  auto* config_dump = app.add_subcommand("print-config", "Print the default configuration")->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (config_dump->parsed()) {
    std::cout << default_config().dump(2) << '\n';
    return 0;
  }

  RunContext ctx;
  std::string command;
  try {
    json user = nullptr;
    if (!config_path.empty()) {
      std::ifstream in(config_path, std::ios::binary);
      if (!in) throw ConfigError("--config", "cannot open '" + config_path + "'");
      try {
        user = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError("--config", std::string("malformed JSON: ") + e.what());
      }
    }
    if (seed_opt->count() > 0) {
      if (user.is_null()) user = json::object();
      user["seed"] = seed;
    }
    if (out_opt->count() > 0) {
      if (user.is_null()) user = json::object();
      user["output_dir"] = out_dir;
    }
    if (threads_opt->count() > 0) {
      if (user.is_null()) user = json::object();
      user["threads"] = threads;
    }
    ctx.config = load_config(user);
    ctx.threads = resolve_threads(ctx.config.threads);
    ctx.out_dir = ctx.config.output_dir;
    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec || !fs::is_directory(ctx.out_dir)) throw ConfigError("output_dir", "cannot create '" + ctx.config.output_dir + "'");
    const fs::path probe = ctx.out_dir / ".write-test";
    {
      std::ofstream test(probe);
      if (!test) throw ConfigError("output_dir", "'" + ctx.config.output_dir + "' is not writable");
    }
    fs::remove(probe, ec);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  int code = 0;
  try {
    if (env_cmd->parsed()) {
      command = "env-check";
      code = cmd_env_check(ctx);
    } else if (verify_cmd->parsed()) {
      command = "verify " + suite;
      code = cmd_verify(ctx, suite);
    } else if (scan_cmd->parsed()) {
      command = "xi-scan";
      code = cmd_xi_scan(ctx);
    } else if (fit_cmd->parsed()) {
      command = "fluct-fit";
      code = cmd_fluct_fit(ctx);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: precondition violated: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  try {
    write_manifest(ctx, command, code);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return code;
}

}  // namespace polymerlab::cli
