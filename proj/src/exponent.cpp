#include "polymerlab/exponent.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "polymerlab/parallel.hpp"
#include "polymerlab/rng.hpp"
#include "polymerlab/stats.hpp"

namespace polymerlab {

double BallIndex::radius() const { return std::pow(static_cast<double>(n), alpha); }

std::vector<double> BallIndex::center() const {
  const double r = radius();
  std::vector<double> c(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) c[i] = j[i] * r;
  return c;
}

bool BallIndex::central() const {
  return std::all_of(j.begin(), j.end(), [](int v) { return v == 0; });
}

BallIndex ball_index_of(std::span<const double> x, int n, double alpha) {
  if (n < 1) throw std::invalid_argument("ball_index_of needs n >= 1");
  BallIndex b;
  b.alpha = alpha;
  b.n = n;
  const double r = b.radius();
  if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("ball radius must be positive");
  for (double v : x) b.j.push_back(2 * static_cast<int>(std::floor((v + r) / (2.0 * r))));
  return b;
}

int closed_ball_multiplicity(std::span<const double> x, double radius) {
  // Per coordinate, the even multiples c with |x_i - c r| <= r: one, or two on a shared face.
  int total = 1;
  bool central_possible = true;
  for (double v : x) {
    const double u = v / radius;
    const double lo = std::ceil((u - 1.0) / 2.0);
    const double hi = std::floor((u + 1.0) / 2.0);
    const int count = static_cast<int>(hi - lo) + 1;
    total *= std::max(count, 0);
    central_possible = central_possible && lo <= 0.0 && hi >= 0.0;
  }
  return total - (central_possible ? 1 : 0);
}

std::string to_string(ScanEvent event) { return event == ScanEvent::endpoint ? "endpoint" : "running_max"; }

ScanEvent parse_scan_event(const std::string& name) {
  if (name == "endpoint") return ScanEvent::endpoint;
  if (name == "running_max" || name == "running-max") return ScanEvent::running_max;
  throw std::invalid_argument("unknown scan event '" + name + "'");
}

namespace {

std::uint64_t paths_seed(std::uint64_t env_seed) { return derive_seed(env_seed, StreamTag::replica_paths); }

double endpoint_norm(const Path& p) {
  double top = 0.0;
  for (double v : p.at(p.n)) top = std::max(top, std::fabs(v));
  return top;
}

}  // namespace

ScanResult xi_scan(std::span<const double> alphas, std::span<const int> n_grid, const GibbsParams& params,
                   std::span<const std::uint64_t> env_seeds, const PolymerSetup& setup,
                   std::span<const ScanEvent> events, std::uint64_t seed) {
  if (alphas.empty() || n_grid.empty() || events.empty())
    throw std::invalid_argument("xi_scan needs non-empty alphas, n grid and events");
  if (env_seeds.size() < 2) throw std::invalid_argument("xi_scan needs R >= 2");
  const double alpha_max = *std::max_element(alphas.begin(), alphas.end());
  ScanResult result;
  result.seed = seed;
  for (int n : n_grid) {
    if (n < 1) throw std::invalid_argument("n must be at least 1");
    const double reach = std::max(required_reach(n), std::pow(static_cast<double>(n), alpha_max));
    // masses[r][e * alphas + a]
    const auto masses = parallel_map<std::vector<double>>(
        env_seeds.size(), setup.threads, [&](std::size_t r) {
          EnvironmentHandle env(setup.environment(env_seeds[r], reach));
          const PathEnsemble base = sample_paths(paths_seed(env_seeds[r]), params.paths, n, setup.dimension);
          const GibbsWeights weights = gibbs_weights(env, base, params.beta);
          std::vector<double> out;
          for (ScanEvent e : events) {
            std::vector<double> norms(base.size());
            for (std::size_t m = 0; m < base.size(); ++m)
              norms[m] = e == ScanEvent::endpoint ? endpoint_norm(base.paths[m]) : running_max_norm(base.paths[m]);
            for (double alpha : alphas) {
              const double r_alpha = std::pow(static_cast<double>(n), alpha);
              std::vector<double> values(base.size());
              for (std::size_t m = 0; m < base.size(); ++m) values[m] = norms[m] <= r_alpha ? 1.0 : 0.0;
              out.push_back(self_normalized(weights.log_weights, values, true).value);
            }
          }
          return out;
        });
    for (std::size_t e = 0; e < events.size(); ++e) {
      for (std::size_t a = 0; a < alphas.size(); ++a) {
        std::vector<double> column;
        for (const auto& m : masses) column.push_back(m[e * alphas.size() + a]);
        ScanRow row;
        row.n = n;
        row.alpha = alphas[a];
        row.event = events[e];
        row.mass_mean = mean(column);
        row.mass_stderr = standard_error(column);
        row.replicas = static_cast<int>(env_seeds.size());
        row.paths = params.paths;
        result.rows.push_back(row);
      }
    }
  }
  return result;
}

FluctuationFit fit_spreads(std::span<const int> n_grid, const std::vector<std::vector<double>>& spreads,
                           int bootstrap_resamples, std::uint64_t bootstrap_seed) {
  if (spreads.size() != n_grid.size()) throw std::invalid_argument("one spread sample per n is required");
  FluctuationFit fit;
  fit.n_grid.assign(n_grid.begin(), n_grid.end());
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    fit.median_spread.push_back(median(spreads[i]));
    fit.mean_spread.push_back(mean(spreads[i]));
    fit.spread_stderr.push_back(standard_error(spreads[i]));
    if (fit.median_spread.back() > 0.0) {
      xs.push_back(std::log(static_cast<double>(n_grid[i])));
      ys.push_back(std::log(fit.median_spread.back()));
    }
  }
  if (xs.size() < 2) throw std::invalid_argument("fluctuation fit needs at least two positive spreads");
  fit.xi_hat = least_squares(xs, ys).slope;

  Rng rng(bootstrap_seed, StreamTag::bootstrap);
  std::vector<double> slopes;
  for (int b = 0; b < bootstrap_resamples; ++b) {
    std::vector<double> bx, by;
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
      const auto& s = spreads[i];
      std::vector<double> resample(s.size());
      for (auto& v : resample) v = s[rng.below(s.size())];
      const double med = median(std::move(resample));
      if (med > 0.0) {
        bx.push_back(std::log(static_cast<double>(n_grid[i])));
        by.push_back(std::log(med));
      }
    }
    if (bx.size() >= 2) slopes.push_back(least_squares(bx, by).slope);
  }
  if (slopes.empty()) {
    fit.ci_low = fit.ci_high = fit.xi_hat;
  } else {
    fit.ci_low = quantile(slopes, 0.025);
    fit.ci_high = quantile(slopes, 0.975);
  }
  return fit;
}

FluctuationFit fluctuation_fit(std::span<const int> n_grid, const GibbsParams& params,
                               std::span<const std::uint64_t> env_seeds, const PolymerSetup& setup,
                               int bootstrap_resamples, std::uint64_t bootstrap_seed) {
  const std::set<int> distinct(n_grid.begin(), n_grid.end());
  if (distinct.size() < 4) throw std::invalid_argument("fluctuation fit needs at least four distinct n values");
  if (env_seeds.size() < 2) throw std::invalid_argument("fluctuation fit needs R >= 2");
  std::vector<std::vector<double>> spreads;
  for (int n : n_grid) {
    if (n < 1) throw std::invalid_argument("n must be at least 1");
    spreads.push_back(parallel_map<double>(env_seeds.size(), setup.threads, [&](std::size_t r) {
      EnvironmentHandle env(setup.environment(env_seeds[r], required_reach(n)));
      const PathEnsemble base = sample_paths(paths_seed(env_seeds[r]), params.paths, n, setup.dimension);
      return gibbs_expect(env, base, params.beta, running_max_norm).value;
    }));
  }
  FluctuationFit fit = fit_spreads(n_grid, spreads, bootstrap_resamples, bootstrap_seed);
  fit.beta = params.beta;
  fit.lambda = setup.kernel.lambda;
  fit.dimension = setup.dimension;
  fit.informational = params.beta > 0.0;
  return fit;
}

UnionBoundCheck union_bound_check(const GibbsWeights& weights, const PathEnsemble& ensemble, double alpha) {
  const double r = std::pow(static_cast<double>(ensemble.n), alpha);
  std::vector<double> tail(ensemble.size()), balls(ensemble.size());
  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    const Path& p = ensemble.paths[m];
    tail[m] = running_max_norm(p) >= r ? 1.0 : 0.0;
    double count = 0.0;
    for (int k = 1; k <= p.n; ++k) count += closed_ball_multiplicity(p.at(k), r);
    balls[m] = count;
  }
  UnionBoundCheck out;
  out.tail_mass = self_normalized(weights.log_weights, tail, true).value;
  out.ball_sum = self_normalized(weights.log_weights, balls).value;
  return out;
}

}  // namespace polymerlab
