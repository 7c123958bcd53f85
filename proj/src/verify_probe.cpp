#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "polymerlab/csv.hpp"
#include "polymerlab/errors.hpp"
#include "polymerlab/parallel.hpp"
#include "polymerlab/rng.hpp"
#include "polymerlab/stats.hpp"
#include "polymerlab/verify.hpp"

namespace polymerlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// The field restricted to the grid nodes a frozen path ensemble visits. Node
// values are drawn from their exact joint law (Gamma at node lags), which
// is the law the grid backend realizes at those nodes.
struct VisitedSlice {
  std::vector<std::size_t> path_node;  // per path, index into the local nodes
  Eigen::MatrixXd chol;
};

struct FrozenPolymer {
  int n = 0;
  double beta = 0.0;
  std::vector<VisitedSlice> slices;  // slices[k - 1]
  std::vector<double> log_indicator;  // log f(S_j) per path: 0 or -inf
  double log_paths = 0.0;

  void draw(int k, Rng& rng, Eigen::VectorXd& values) const {
    const auto& s = slices[k - 1];
    Eigen::VectorXd z(s.chol.rows());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    values = s.chol.triangularView<Eigen::Lower>() * z;
  }

  // Adds g(k, S_k) of every path to `sums`.
  void accumulate(int k, const Eigen::VectorXd& values, std::vector<double>& sums) const {
    const auto& s = slices[k - 1];
    for (std::size_t m = 0; m < sums.size(); ++m) sums[m] += values[s.path_node[m]];
  }

  double log_w(const std::vector<double>& energies, std::vector<double>& scratch) const {
    for (std::size_t m = 0; m < energies.size(); ++m) scratch[m] = log_indicator[m] + beta * energies[m];
    return log_sum_exp(scratch) - log_paths;
  }
};

FrozenPolymer freeze(const IncrementProbeConfig& config) {
  const double spacing = config.grid_spacing > 0.0 ? config.grid_spacing : 0.1 / config.kernel.lambda;
  const PathEnsemble ensemble =
      sample_paths(derive_seed(config.seed, StreamTag::replica_paths), config.paths, config.n, 1);
  FrozenPolymer poly;
  poly.n = config.n;
  poly.beta = config.beta;
  poly.log_paths = std::log(static_cast<double>(config.paths));
  bool any = false;
  for (const auto& p : ensemble.paths) {
    const bool hit = p.at(config.j)[0] >= 0.0;
    any = any || hit;
    poly.log_indicator.push_back(hit ? 0.0 : kNegInf);
  }
  if (!any) throw std::invalid_argument("probe functional has zero mass on the frozen ensemble");

  const double variance = kernel_variance(config.kernel, 1);
  for (int k = 1; k <= config.n; ++k) {
    std::map<long long, std::size_t> local;
    VisitedSlice slice;
    for (const auto& p : ensemble.paths) {
      const auto node = static_cast<long long>(std::llround(p.at(k)[0] / spacing));
      auto [it, inserted] = local.try_emplace(node, local.size());
      slice.path_node.push_back(it->second);
    }
    std::vector<long long> nodes(local.size());
    for (const auto& [node, index] : local) nodes[index] = node;
    const auto size = static_cast<Eigen::Index>(nodes.size());
    Eigen::MatrixXd cov(size, size);
    for (Eigen::Index a = 0; a < size; ++a) {
      for (Eigen::Index b = 0; b <= a; ++b)
        cov(a, b) = cov(b, a) = gamma_eval(config.kernel, static_cast<double>(nodes[a] - nodes[b]) * spacing);
      cov(a, a) += 1e-10 * variance;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw ConditioningError("probe slice covariance is not positive definite");
    slice.chol = llt.matrixL();
    poly.slices.push_back(std::move(slice));
  }
  return poly;
}

}  // namespace

IncrementProbeResult martingale_increment_probe(const IncrementProbeConfig& config) {
  if (config.n < 1 || config.n > 6) throw std::invalid_argument("increment probe needs 1 <= n <= 6");
  if (config.j < 1 || config.j > config.n) throw std::invalid_argument("probe needs 1 <= j <= n");
  if (config.i < 1 || config.i > config.n) throw std::invalid_argument("probe needs 1 <= i <= n");
  if (config.outer < 2 || config.inner < 2) throw std::invalid_argument("probe needs outer, inner >= 2");
  if (!(config.beta >= 0.0)) throw std::invalid_argument("beta must be non-negative");
  validate(config.kernel, 1);

  const FrozenPolymer poly = freeze(config);
  const int n = config.n;
  const int i = config.i;
  const int half = config.inner / 2;
  const std::size_t paths = static_cast<std::size_t>(config.paths);

  struct OuterSample {
    double full = 0.0;   // exp|X| with the full inner sample
    double half = 0.0;   // with the first half
    double abs_x = 0.0;
  };
  const auto samples = parallel_map<OuterSample>(
      static_cast<std::size_t>(config.outer), config.threads, [&](std::size_t o) {
        Rng outer_rng(config.seed, StreamTag::probe_outer, {o});
        Eigen::VectorXd values;
        // Slices 1..i-1 fixed (G_{i-1}), plus slice i for G_i.
        std::vector<double> past(paths, 0.0);
        for (int k = 1; k < i; ++k) {
          poly.draw(k, outer_rng, values);
          poly.accumulate(k, values, past);
        }
        std::vector<double> present = past;
        poly.draw(i, outer_rng, values);
        poly.accumulate(i, values, present);

        std::vector<double> energy_i(paths), energy_prev(paths), scratch(paths);
        double sum_i = 0.0, sum_prev = 0.0, half_i = 0.0, half_prev = 0.0;
        for (int t = 0; t < config.inner; ++t) {
          Rng inner_rng(config.seed, StreamTag::probe_inner, {o, static_cast<std::uint64_t>(t)});
          energy_prev = past;
          poly.draw(i, inner_rng, values);
          poly.accumulate(i, values, energy_prev);
          // Common future slices for both conditional expectations.
          std::vector<double> future(paths, 0.0);
          for (int k = i + 1; k <= n; ++k) {
            poly.draw(k, inner_rng, values);
            poly.accumulate(k, values, future);
          }
          for (std::size_t m = 0; m < paths; ++m) {
            energy_i[m] = present[m] + future[m];
            energy_prev[m] += future[m];
          }
          const double a = poly.log_w(energy_i, scratch);
          const double b = poly.log_w(energy_prev, scratch);
          sum_i += a;
          sum_prev += b;
          if (t + 1 == half) {
            half_i = sum_i;
            half_prev = sum_prev;
          }
        }
        const double x_full = (sum_i - sum_prev) / config.inner;
        const double x_half = (half_i - half_prev) / half;
        return OuterSample{std::exp(std::fabs(x_full)), std::exp(std::fabs(x_half)), std::fabs(x_full)};
      });

  std::vector<double> extrapolated, full, halves, abs_x;
  for (const auto& s : samples) {
    extrapolated.push_back(2.0 * s.full - s.half);
    full.push_back(s.full);
    halves.push_back(s.half);
    abs_x.push_back(s.abs_x);
  }
  IncrementProbeResult result;
  result.estimate_full = mean(full);
  result.estimate_half = mean(halves);
  result.mean_abs_increment = mean(abs_x);
  const double sigma2 = kernel_variance(config.kernel, 1);
  const double k_bound = config.beta > 0.0 ? bound_constants(config.beta, sigma2).K : 2.0;
  result.report = make_report(
      "increment n=" + std::to_string(n) + " j=" + std::to_string(config.j) + " i=" + std::to_string(i) +
          " beta=" + format_double(config.beta),
      mean(extrapolated), standard_error(extrapolated), -std::numeric_limits<double>::infinity(), k_bound,
      "full=" + format_double(result.estimate_full) + ";half=" + format_double(result.estimate_half) +
          ";outer=" + std::to_string(config.outer) + ";inner=" + std::to_string(config.inner) +
          ";paths=" + std::to_string(config.paths));
  return result;
}

}  // namespace polymerlab
