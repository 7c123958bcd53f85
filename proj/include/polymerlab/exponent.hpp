#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "polymerlab/gibbs.hpp"

namespace polymerlab {

// Ball B(j r, r) in the max-norm, r = n^alpha, j in (2Z)^d. The balls with
// j != 0 tile the complement of the central ball.
struct BallIndex {
  std::vector<int> j;
  double alpha = 0.0;
  int n = 1;

  double radius() const;
  std::vector<double> center() const;
  bool central() const;
};

// The unique j with x in B(j r, r) under the half-open convention
// j_i = 2 floor((x_i + r) / (2 r)).
BallIndex ball_index_of(std::span<const double> x, int n, double alpha);

// Number of non-central closed balls B(j r, r), j in (2Z)^d \ {0}, that contain x.
int closed_ball_multiplicity(std::span<const double> x, double radius);

enum class ScanEvent { endpoint, running_max };
std::string to_string(ScanEvent event);
ScanEvent parse_scan_event(const std::string& name);

struct ScanRow {
  int n = 0;
  double alpha = 0.0;
  ScanEvent event = ScanEvent::endpoint;
  double mass_mean = 0.0;
  double mass_stderr = 0.0;
  int replicas = 0;
  int paths = 0;
};

struct ScanResult {
  std::vector<ScanRow> rows;
  std::uint64_t seed = 0;
};

// For every (n, alpha, event): the quenched mean over environments of
// <1{|S_n| <= n^alpha}> (endpoint) or <1{max_k |S_k| <= n^alpha}> (running max).
// All alphas and both events share one ensemble per (n, environment).
ScanResult xi_scan(std::span<const double> alphas, std::span<const int> n_grid, const GibbsParams& params,
                   std::span<const std::uint64_t> env_seeds, const PolymerSetup& setup,
                   std::span<const ScanEvent> events, std::uint64_t seed = 0);

struct FluctuationFit {
  double xi_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<int> n_grid;
  std::vector<double> median_spread;  // quenched median of <max_k |S_k|>
  std::vector<double> mean_spread;
  std::vector<double> spread_stderr;  // across environments, for the mean
  double beta = 0.0;
  double lambda = 0.0;
  int dimension = 1;
  bool informational = false;  // beta > 0: no asymptotic claim at desk scale
};

// Least-squares slope of log(median spread) against log n, with a percentile
// bootstrap over environments for the confidence interval.
FluctuationFit fluctuation_fit(std::span<const int> n_grid, const GibbsParams& params,
                               std::span<const std::uint64_t> env_seeds, const PolymerSetup& setup,
                               int bootstrap_resamples = 500, std::uint64_t bootstrap_seed = 0);

// Slope and percentile interval from per-n, per-environment spreads.
FluctuationFit fit_spreads(std::span<const int> n_grid, const std::vector<std::vector<double>>& spreads,
                           int bootstrap_resamples, std::uint64_t bootstrap_seed);

// Tail mass <1{max_k |S_k| >= r}> and the ball union bound
// sum_k sum_{j != 0} <1{S_k in closed B(j r, r)}> on the same weights.
struct UnionBoundCheck {
  double tail_mass = 0.0;
  double ball_sum = 0.0;
};

UnionBoundCheck union_bound_check(const GibbsWeights& weights, const PathEnsemble& ensemble, double alpha);

}  // namespace polymerlab
