#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "polymerlab/environment.hpp"
#include "polymerlab/walk.hpp"

namespace polymerlab {

struct GibbsParams {
  double beta = 0.5;
  int n = 16;
  int paths = 2000;     // M, paths per environment
  int replicas = 100;   // R, environment replicas
};

void validate(const GibbsParams& params);

// Self-normalized Monte Carlo estimate with its delta-method standard error.
struct GibbsEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t paths = 0;
  double ess = 0.0;        // 1 / sum of squared normalized weights
  bool smoothed = false;   // add-one smoothing was applied (no event hits)

  // Weight degeneracy warning threshold: ESS below 1% of the ensemble.
  bool degenerate() const { return ess < 0.01 * static_cast<double>(paths); }
};

// Environment and grid geometry shared by all replicas of a run.
struct PolymerSetup {
  KernelSpec kernel{};
  int dimension = 1;
  Backend backend = Backend::grid;
  double grid_spacing = 0.0;    // <= 0: 1/(10 lambda)
  double min_halfwidth = 0.0;   // lower bound on the grid half-width L
  int threads = 1;

  // Environment for one replica, with a grid wide enough for |x| <= reach.
  EnvironmentConfig environment(std::uint64_t seed, double reach) const;
};

// Grid half-width covering free walks of n steps (8 standard deviations)
// plus a deterministic drift.
double required_reach(int n, double drift = 0.0);

// H = sum_{k=1}^n g(k, S_k).
double hamiltonian(Environment& env, const Path& path);
// H for every path, querying each slice once with the whole ensemble.
std::vector<double> hamiltonians(Environment& env, const PathEnsemble& ensemble);

// log((1/M) sum exp(a_m)), max-shifted; entries may be -inf.
GibbsEstimate log_mean_exp(std::span<const double> log_terms);

// log Z_n = logsumexp(beta H_m) - log M.
GibbsEstimate log_partition(std::span<const double> energies, double beta);
GibbsEstimate log_partition(Environment& env, const PathEnsemble& ensemble, double beta);

// sum f_m w_m / sum w_m with w_m = exp(log_weights_m), computed in log space.
// Indicator values are clamped to [0, 1].
GibbsEstimate self_normalized(std::span<const double> log_weights, std::span<const double> values,
                              bool indicator = false);

using PathFunctional = std::function<double(const Path&)>;
using PathPredicate = std::function<bool(const Path&)>;

GibbsEstimate gibbs_expect(Environment& env, const PathEnsemble& ensemble, double beta,
                           const PathFunctional& f, bool indicator = false);

// Gibbs weights of one (environment, ensemble) cell, reusable across
// functionals so that comparisons between them are paired.
struct GibbsWeights {
  double beta = 0.0;
  std::vector<double> energies;
  std::vector<double> log_weights;

  GibbsEstimate expect(const PathEnsemble& ensemble, const PathFunctional& f, bool indicator = false) const;
  GibbsEstimate log_partition() const;
};

GibbsWeights gibbs_weights(Environment& env, const PathEnsemble& ensemble, double beta);

// log E[1_A(S) exp(beta H(S))] for the free walk S, estimated from the
// tilted ensemble S + ramp with exact Girsanov reweighting. When no tilted
// path hits A the estimate is add-one smoothed: one pseudo-hit carrying the
// largest proposal weight is added to M + 1 samples, an upward-biased value
// flagged by `smoothed`.
GibbsEstimate log_event_weight(Environment& env, const PathEnsemble& base, const TiltSpec& tilt,
                               double beta, const PathPredicate& event);

struct QuenchedAverage {
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> values;  // per replica, in replica order
};

std::vector<std::uint64_t> replica_seeds(std::uint64_t base_seed, int count);

// Averages estimator(replica index, replica seed) over environments. Replicas
// run on `threads` workers and are reduced in replica order. A failing
// replica aborts the average with a ReplicaError naming its index.
QuenchedAverage quenched_average(std::span<const std::uint64_t> env_seeds,
                                 const std::function<double(std::size_t, std::uint64_t)>& estimator,
                                 int threads = 1);

QuenchedAverage summarize(std::vector<double> values);

}  // namespace polymerlab
