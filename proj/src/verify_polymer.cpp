#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "polymerlab/csv.hpp"
#include "polymerlab/parallel.hpp"
#include "polymerlab/rng.hpp"
#include "polymerlab/stats.hpp"
#include "polymerlab/verify.hpp"

namespace polymerlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t paths_seed(std::uint64_t env_seed) {
  return derive_seed(env_seed, StreamTag::replica_paths);
}

void require_one_dimensional(const PolymerSetup& setup) {
  if (setup.dimension != 1) throw std::invalid_argument("this check is defined for d = 1");
}

// Runs flag weight degeneracy below this ESS / M.
constexpr double kLowEss = 0.01;

std::string ess_note(std::span<const double> fractions) {
  const double low = *std::min_element(fractions.begin(), fractions.end());
  return ";min_ess_frac=" + format_double(low) + (low < kLowEss ? ";low_ess" : "");
}

std::string format_ints(std::span<const int> j) {
  std::string out = "(";
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (i) out += '|';
    out += std::to_string(j[i]);
  }
  return out + ")";
}

}  // namespace

BoundCheckReport girsanov_identity_test(const GibbsParams& params, double lambda,
                                        std::span<const std::uint64_t> env_seeds,
                                        const PolymerSetup& setup, GirsanovRoute route) {
  require_one_dimensional(setup);
  if (!std::isfinite(lambda)) throw std::invalid_argument("lambda must be finite");
  const int n = params.n;
  const double drift = n * std::fabs(lambda);
  const TiltSpec straight{{n * lambda}, n};

  std::vector<double> ess(env_seeds.size(), 1.0);
  const auto avg = quenched_average(
      env_seeds,
      [&](std::size_t r, std::uint64_t seed) {
        EnvironmentHandle env(setup.environment(seed, required_reach(n, drift)));
        const PathEnsemble base = sample_paths(paths_seed(seed), params.paths, n, 1);
        if (route == GirsanovRoute::paired_shift) {
          const GibbsEstimate z = log_partition(env, base, params.beta);
          const GibbsEstimate shifted = log_partition(env, tilt_ensemble(base, straight), params.beta);
          ess[r] = std::min(z.ess, shifted.ess) / params.paths;
          return shifted.value - z.value;
        }
        const auto martingale = [&](const Path& p) {
          return std::exp(lambda * p.at(n)[0] - 0.5 * n * lambda * lambda);
        };
        const GibbsEstimate e = gibbs_expect(env, base, params.beta, martingale);
        ess[r] = e.ess / params.paths;
        return std::log(e.value);
      },
      setup.threads);

  const std::string name = "girsanov lambda=" + format_double(lambda) + " n=" + std::to_string(n) +
                           " beta=" + format_double(params.beta);
  return make_report(name, avg.mean, avg.std_error, 0.0, 0.0,
                     std::string("route=") +
                         (route == GirsanovRoute::paired_shift ? "paired-shift" : "direct-reweight") +
                         ";R=" + std::to_string(env_seeds.size()) + ";M=" + std::to_string(params.paths) +
                         ess_note(ess));
}

std::vector<BoundCheckReport> mean_control_test(double alpha, std::span<const int> n_grid,
                                                const GibbsParams& params,
                                                std::span<const std::uint64_t> env_seeds,
                                                const PolymerSetup& setup) {
  require_one_dimensional(setup);
  if (!(alpha > 0.5)) throw std::invalid_argument("mean control needs alpha > 1/2");
  std::vector<BoundCheckReport> reports;
  for (int n : n_grid) {
    if (n < 1) throw std::invalid_argument("n must be at least 1");
    const double threshold = std::pow(static_cast<double>(n), alpha);
    const TiltSpec tilt{{threshold}, n};
    std::vector<int> smoothed(env_seeds.size(), 0);
    std::vector<double> ess(env_seeds.size(), 1.0);
    const auto avg = quenched_average(
        env_seeds,
        [&](std::size_t r, std::uint64_t seed) {
          EnvironmentHandle env(setup.environment(seed, required_reach(n, threshold)));
          const PathEnsemble base = sample_paths(paths_seed(seed), params.paths, n, 1);
          const GibbsEstimate z = log_partition(env, base, params.beta);
          const GibbsEstimate event = log_event_weight(
              env, base, tilt, params.beta, [&](const Path& p) { return p.at(n)[0] >= threshold; });
          smoothed[r] = event.smoothed ? 1 : 0;
          ess[r] = z.ess / params.paths;
          return event.value - z.value;
        },
        setup.threads);
    int smoothed_count = 0;
    for (int s : smoothed) smoothed_count += s;
    const double bound = -0.5 * std::pow(static_cast<double>(n), 2.0 * alpha - 1.0);
    reports.push_back(make_report(
        "mean-control alpha=" + format_double(alpha) + " n=" + std::to_string(n) +
            " beta=" + format_double(params.beta),
        avg.mean, avg.std_error, -kInf, bound,
        "R=" + std::to_string(env_seeds.size()) + ";M=" + std::to_string(params.paths) +
            ";smoothed_replicas=" + std::to_string(smoothed_count) + ess_note(ess)));
  }
  return reports;
}

BoundCheckReport mean_control_analytic(double alpha, int n) {
  const double x = std::pow(static_cast<double>(n), alpha - 0.5);
  const double bound = -0.5 * std::pow(static_cast<double>(n), 2.0 * alpha - 1.0);
  return make_report("mean-control-analytic alpha=" + format_double(alpha) + " n=" + std::to_string(n),
                     log_normal_upper_tail(x), 0.0, -kInf, bound, "beta=0 closed form");
}

int ball_scale(std::span<const int> j) {
  int total = 0;
  for (int v : j) {
    const int eps = (v > 0) - (v < 0);
    total += (v - eps) * (v - eps);
  }
  return total;
}

double ball_bound(double alpha, int n, std::span<const int> j) {
  return -0.5 * std::pow(static_cast<double>(n), 2.0 * alpha - 1.0) * ball_scale(j);
}

BoundCheckReport ball_bound_test(double alpha, int n, int k, std::span<const int> j,
                                 const GibbsParams& params, std::span<const std::uint64_t> env_seeds,
                                 const PolymerSetup& setup) {
  const int d = static_cast<int>(j.size());
  if (d != setup.dimension) throw std::invalid_argument("ball index dimension does not match the setup");
  if (k < 1 || k > n) throw std::invalid_argument("ball check needs 1 <= k <= n");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  bool zero = true;
  int reach_index = 0;
  for (int v : j) {
    if (v % 2 != 0) throw std::invalid_argument("ball index entries must be even");
    if (v != 0) zero = false;
    reach_index = std::max(reach_index, std::abs(v));
  }
  if (zero) throw std::invalid_argument("ball index must be non-zero");

  const double radius = std::pow(static_cast<double>(n), alpha);
  TiltSpec tilt{std::vector<double>(d), k};
  for (int i = 0; i < d; ++i) tilt.lambda_tilde[i] = j[i] * radius;
  const auto inside = [&](const Path& p) {
    const auto x = p.at(k);
    for (int i = 0; i < d; ++i)
      if (std::fabs(x[i] - j[i] * radius) > radius) return false;
    return true;
  };

  std::vector<int> smoothed(env_seeds.size(), 0);
  std::vector<double> ess(env_seeds.size(), 1.0);
  const auto avg = quenched_average(
      env_seeds,
      [&](std::size_t r, std::uint64_t seed) {
        EnvironmentHandle env(setup.environment(seed, required_reach(n, (reach_index + 1) * radius)));
        const PathEnsemble base = sample_paths(paths_seed(seed), params.paths, n, d);
        const GibbsEstimate z = log_partition(env, base, params.beta);
        const GibbsEstimate event = log_event_weight(env, base, tilt, params.beta, inside);
        smoothed[r] = event.smoothed ? 1 : 0;
        ess[r] = z.ess / params.paths;
        return event.value - z.value;
      },
      setup.threads);
  int smoothed_count = 0;
  for (int s : smoothed) smoothed_count += s;
  return make_report("ball d=" + std::to_string(d) + " j=" + format_ints(j) + " n=" + std::to_string(n) +
                         " k=" + std::to_string(k) + " beta=" + format_double(params.beta),
                     avg.mean, avg.std_error, -kInf, ball_bound(alpha, n, j),
                     "alpha=" + format_double(alpha) + ";scale=" + std::to_string(ball_scale(j)) +
                         ";R=" + std::to_string(env_seeds.size()) + ";M=" + std::to_string(params.paths) +
                         ";smoothed_replicas=" + std::to_string(smoothed_count) + ess_note(ess));
}

std::string to_string(ConcentrationFunctional f) {
  return f == ConcentrationFunctional::log_partition ? "logZ" : "logW_event";
}

double concentration_bound(int n, double nu) {
  return std::exp(-0.25 * std::pow(static_cast<double>(n), (2.0 * nu - 1.0) / 3.0));
}

std::vector<ConcentrationRow> concentration_scan(const GibbsParams& params, double nu,
                                                 std::span<const int> n_grid,
                                                 ConcentrationFunctional functional,
                                                 std::span<const std::uint64_t> env_seeds,
                                                 const PolymerSetup& setup) {
  require_one_dimensional(setup);
  if (!(nu > 0.5)) throw std::invalid_argument("concentration scan needs nu > 1/2");
  if (env_seeds.size() < 2) throw std::invalid_argument("concentration scan needs R >= 2");
  std::vector<ConcentrationRow> rows;
  for (int n : n_grid) {
    if (n < 1) throw std::invalid_argument("n must be at least 1");
    // Per replica: the functional at j = 1..n (log Z repeats its single value).
    std::vector<double> ess(env_seeds.size(), 1.0);
    const auto per_replica = parallel_map<std::vector<double>>(
        env_seeds.size(), setup.threads, [&](std::size_t r) {
          const std::uint64_t seed = env_seeds[r];
          EnvironmentHandle env(setup.environment(seed, required_reach(n)));
          const PathEnsemble base = sample_paths(paths_seed(seed), params.paths, n, 1);
          const GibbsWeights weights = gibbs_weights(env, base, params.beta);
          const GibbsEstimate z = weights.log_partition();
          ess[r] = z.ess / params.paths;
          if (functional == ConcentrationFunctional::log_partition) return std::vector<double>(1, z.value);
          std::vector<double> values(n);
          std::vector<double> terms(base.size());
          for (int j = 1; j <= n; ++j) {
            for (std::size_t m = 0; m < base.size(); ++m)
              terms[m] = base.paths[m].at(j)[0] >= 0.0 ? weights.log_weights[m] : -kInf;
            values[j - 1] = log_mean_exp(terms).value;
          }
          return values;
        });

    const std::size_t columns = per_replica.front().size();
    std::vector<double> column_mean(columns);
    for (std::size_t c = 0; c < columns; ++c) {
      std::vector<double> column;
      for (const auto& v : per_replica) column.push_back(v[c]);
      column_mean[c] = mean(column);
    }
    std::vector<double> headline;
    for (const auto& v : per_replica) headline.push_back(v.back());

    ConcentrationRow row;
    row.n = n;
    row.functional = functional;
    row.nu = nu;
    row.replicas = static_cast<int>(env_seeds.size());
    row.paths = params.paths;
    row.mean = column_mean.back();
    row.std_dev = std::sqrt(sample_variance(headline));
    const double threshold = std::pow(static_cast<double>(n), nu);
    double exceed = 0.0, union_exceed = 0.0;
    for (const auto& v : per_replica) {
      if (std::fabs(v.back() - row.mean) >= threshold) exceed += 1.0;
      bool any = false;
      for (std::size_t c = 0; c < columns; ++c) any = any || std::fabs(v[c] - column_mean[c]) >= threshold;
      if (any) union_exceed += 1.0;
    }
    const double count = static_cast<double>(per_replica.size());
    row.exceed_freq = exceed / count;
    row.exceed_stderr = std::sqrt(row.exceed_freq * (1.0 - row.exceed_freq) / count);
    row.tail_bound = concentration_bound(n, nu);
    row.trend_ratio = row.std_dev / threshold;
    row.union_freq = union_exceed / count;
    const double union_terms = functional == ConcentrationFunctional::log_partition ? 1.0 : n;
    row.union_bound = std::min(1.0, union_terms * row.tail_bound);
    row.min_ess_frac = *std::min_element(ess.begin(), ess.end());
    rows.push_back(row);
  }
  return rows;
}

std::vector<BoundCheckReport> concentration_checks(std::span<const ConcentrationRow> rows) {
  std::vector<BoundCheckReport> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string tag = to_string(row.functional) + " n=" + std::to_string(row.n);
    if (i > 0 && rows[i - 1].functional == row.functional) {
      const double previous = rows[i - 1].trend_ratio;
      const double ratio = previous > 0.0 ? row.trend_ratio / previous : (row.trend_ratio > 0.0 ? kInf : 1.0);
      out.push_back(make_report("concentration-trend " + tag, ratio, 0.0, 0.0, 1.0,
                                "std/n^nu=" + format_double(row.trend_ratio) +
                                    ";previous=" + format_double(previous)));
    }
    if (row.tail_bound < 1.0)
      out.push_back(make_report("concentration-tail " + tag, row.exceed_freq, row.exceed_stderr, 0.0,
                                row.tail_bound, "nu=" + format_double(row.nu) + ess_note(std::span<const double>(&row.min_ess_frac, 1))));
  }
  return out;
}

}  // namespace polymerlab
