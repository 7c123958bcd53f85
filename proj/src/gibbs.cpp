#include "polymerlab/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "polymerlab/errors.hpp"
#include "polymerlab/parallel.hpp"
#include "polymerlab/rng.hpp"
#include "polymerlab/stats.hpp"

namespace polymerlab {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void validate(const GibbsParams& params) {
  if (!(params.beta >= 0.0) || !std::isfinite(params.beta))
    throw std::invalid_argument("beta must be a non-negative finite number");
  if (params.n < 1) throw std::invalid_argument("n must be at least 1");
  if (params.paths < 2) throw std::invalid_argument("M must be at least 2");
  if (params.replicas < 2) throw std::invalid_argument("R must be at least 2");
}

EnvironmentConfig PolymerSetup::environment(std::uint64_t seed, double reach) const {
  EnvironmentConfig config;
  config.seed = seed;
  config.kernel = kernel;
  config.dimension = dimension;
  config.backend = backend;
  config.grid_spacing = grid_spacing;
  config.grid_halfwidth = std::max(min_halfwidth, std::ceil(reach));
  return config;
}

double required_reach(int n, double drift) {
  return 8.0 * std::sqrt(static_cast<double>(n)) + std::fabs(drift) + 1.0;
}

double hamiltonian(Environment& env, const Path& path) {
  if (path.d != env.dimension()) throw std::invalid_argument("path dimension does not match environment");
  double h = 0.0;
  for (int k = 1; k <= path.n; ++k) h += env.sample_slice_at(k, path.at(k))[0];
  return h;
}

std::vector<double> hamiltonians(Environment& env, const PathEnsemble& ensemble) {
  if (ensemble.d != env.dimension())
    throw std::invalid_argument("ensemble dimension does not match environment");
  std::vector<double> h(ensemble.size(), 0.0);
  for (int k = 1; k <= ensemble.n; ++k) {
    const auto values = env.sample_slice_at(k, ensemble.positions_at(k));
    for (std::size_t m = 0; m < h.size(); ++m) h[m] += values[m];
  }
  return h;
}

GibbsEstimate log_mean_exp(std::span<const double> log_terms) {
  if (log_terms.empty()) throw std::invalid_argument("log_mean_exp of an empty ensemble");
  GibbsEstimate out;
  out.paths = log_terms.size();
  double top = kNegInf;
  for (double a : log_terms) top = std::max(top, a);
  if (top == kNegInf) throw std::domain_error("all ensemble weights vanish");
  std::vector<double> w(log_terms.size());
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) {
    w[m] = std::exp(log_terms[m] - top);
    sum += w[m];
    sum2 += w[m] * w[m];
  }
  const double count = static_cast<double>(w.size());
  out.value = top + std::log(sum) - std::log(count);
  out.ess = sum * sum / sum2;
  if (w.size() >= 2) out.std_error = standard_error(w) / (sum / count);
  return out;
}

GibbsEstimate log_partition(std::span<const double> energies, double beta) {
  if (beta == 0.0) {
    GibbsEstimate out;
    out.paths = energies.size();
    out.ess = static_cast<double>(energies.size());
    return out;
  }
  std::vector<double> terms(energies.size());
  for (std::size_t m = 0; m < terms.size(); ++m) terms[m] = beta * energies[m];
  return log_mean_exp(terms);
}

GibbsEstimate log_partition(Environment& env, const PathEnsemble& ensemble, double beta) {
  return log_partition(hamiltonians(env, ensemble), beta);
}

GibbsEstimate self_normalized(std::span<const double> log_weights, std::span<const double> values,
                              bool indicator) {
  if (log_weights.size() != values.size() || log_weights.empty())
    throw std::invalid_argument("self_normalized needs matching non-empty weights and values");
  double top = kNegInf;
  for (double a : log_weights) top = std::max(top, a);
  if (top == kNegInf) throw std::domain_error("all ensemble weights vanish");
  std::vector<double> w(log_weights.size());
  double sum = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) sum += (w[m] = std::exp(log_weights[m] - top));
  // Ratio of raw sums, so that f = 1 gives exactly 1.
  double numerator = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) numerator += w[m] * values[m];
  const double value = numerator / sum;
  double sum2 = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) {
    w[m] /= sum;
    sum2 += w[m] * w[m];
  }
  double var = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) var += w[m] * w[m] * (values[m] - value) * (values[m] - value);
  GibbsEstimate out;
  out.paths = w.size();
  out.value = indicator ? std::clamp(value, 0.0, 1.0) : value;
  out.std_error = std::sqrt(var);
  out.ess = 1.0 / sum2;
  return out;
}

GibbsWeights gibbs_weights(Environment& env, const PathEnsemble& ensemble, double beta) {
  GibbsWeights weights;
  weights.beta = beta;
  weights.energies = hamiltonians(env, ensemble);
  weights.log_weights.resize(weights.energies.size());
  for (std::size_t m = 0; m < weights.energies.size(); ++m)
    weights.log_weights[m] = beta * weights.energies[m];
  return weights;
}

GibbsEstimate GibbsWeights::expect(const PathEnsemble& ensemble, const PathFunctional& f,
                                   bool indicator) const {
  if (ensemble.size() != log_weights.size())
    throw std::invalid_argument("ensemble does not match the weights");
  std::vector<double> values(ensemble.size());
  for (std::size_t m = 0; m < values.size(); ++m) values[m] = f(ensemble.paths[m]);
  return self_normalized(log_weights, values, indicator);
}

GibbsEstimate GibbsWeights::log_partition() const { return polymerlab::log_partition(energies, beta); }

GibbsEstimate gibbs_expect(Environment& env, const PathEnsemble& ensemble, double beta,
                           const PathFunctional& f, bool indicator) {
  return gibbs_weights(env, ensemble, beta).expect(ensemble, f, indicator);
}

GibbsEstimate log_event_weight(Environment& env, const PathEnsemble& base, const TiltSpec& tilt,
                               double beta, const PathPredicate& event) {
  const PathEnsemble tilted = tilt_ensemble(base, tilt);
  const auto energies = hamiltonians(env, tilted);
  std::vector<double> terms(tilted.size());
  double pseudo = kNegInf;
  bool any_hit = false;
  for (std::size_t m = 0; m < terms.size(); ++m) {
    const double a = beta * energies[m] + log_density_ratio(tilted.paths[m], tilt);
    pseudo = std::max(pseudo, a);
    if (event(tilted.paths[m])) {
      terms[m] = a;
      any_hit = true;
    } else {
      terms[m] = kNegInf;
    }
  }
  if (any_hit) return log_mean_exp(terms);
  GibbsEstimate out;
  out.paths = terms.size();
  out.value = pseudo - std::log(static_cast<double>(terms.size() + 1));
  out.ess = 1.0;
  out.smoothed = true;
  return out;
}

std::vector<std::uint64_t> replica_seeds(std::uint64_t base_seed, int count) {
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(std::max(count, 0)));
  for (std::size_t r = 0; r < seeds.size(); ++r)
    seeds[r] = derive_seed(base_seed, StreamTag::replica_env, {r});
  return seeds;
}

QuenchedAverage summarize(std::vector<double> values) {
  QuenchedAverage out;
  out.mean = mean(values);
  out.std_error = standard_error(values);
  out.values = std::move(values);
  return out;
}

QuenchedAverage quenched_average(std::span<const std::uint64_t> env_seeds,
                                 const std::function<double(std::size_t, std::uint64_t)>& estimator,
                                 int threads) {
  if (env_seeds.size() < 2) throw std::invalid_argument("quenched_average needs R >= 2");
  auto values = parallel_map<double>(env_seeds.size(), threads, [&](std::size_t r) {
    try {
      return estimator(r, env_seeds[r]);
    } catch (const ReplicaError&) {
      throw;
    } catch (const std::exception& e) {
      throw ReplicaError(r, e.what());
    }
  });
  return summarize(std::move(values));
}

}  // namespace polymerlab
