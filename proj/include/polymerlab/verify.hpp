#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "polymerlab/gibbs.hpp"
#include "polymerlab/kernel.hpp"

namespace polymerlab {

// Outcome of one numerical inequality check. A check passes when the
// estimate lies in [lower - 4 se, upper + 4 se]; margin_sigmas is the signed
// distance to the nearer bound in standard errors (positive inside).
struct BoundCheckReport {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double lower_bound = 0.0;
  double upper_bound = 0.0;
  double margin_sigmas = 0.0;
  bool pass = false;
  std::string note;
};

inline constexpr double kPassSigmas = 4.0;

BoundCheckReport make_report(std::string name, double estimate, double std_error, double lower,
                             double upper, std::string note = {});

// Constants carried through the concentration argument:
//   c1 = (exp(8 b^2 s^2) - 1) / (16 s^2),  c2 = (1 - exp(-b^2 s^2)) / (2 s^2),
//   c  = c1 s^2,  K = exp(c) + exp(b^2).
struct BoundConstants {
  double c1 = 0.0;
  double c2 = 0.0;
  double c = 0.0;
  double K = 0.0;
};

BoundConstants bound_constants(double beta, double sigma2);

// ---- exponential and log-moment inequalities for finite measures (d = 1)

struct FiniteMeasure {
  std::vector<double> atoms;
  std::vector<double> weights;
};

void validate(const FiniteMeasure& mu);

// sum_ab mu_a mu_b Gamma(x_a - x_b).
double double_integral_gamma(const FiniteMeasure& mu, const KernelSpec& kernel);

struct ExpoIneqCase {
  double q = 1.0;
  double beta = 0.5;
  KernelSpec kernel{};
  std::vector<double> nodes;    // x_1..x_n
  std::vector<double> lambdas;  // lambda_1..lambda_n
  FiniteMeasure mu;

  double sigma2() const { return kernel_variance(kernel, 1); }
};

enum class OracleMethod { quadrature, monte_carlo };

struct OracleOptions {
  int nodes_per_dim = 0;         // <= 0: default_nodes_per_dim(dimension)
  int mc_draws = 1'000'000;
  std::uint64_t seed = 1;
};

// For quadrature, std_error is the distance to a coarser rule (floored at
// rounding level); for Monte Carlo it is the sampling standard error.
struct OracleValue {
  double value = 0.0;
  double std_error = 0.0;
};

// E[exp(beta sum_i lambda_i g(x_i)) / (sum_a mu_a exp(beta g(y_a)))^q].
OracleValue expo_ineq_expectation(const ExpoIneqCase& c, OracleMethod method,
                                  const OracleOptions& options = {});

// Checks exp(-b^2 s^2 q / 2) <= expectation <= exp((b^2 s^2 / 2)(q + sum|lambda_i|)^2).
BoundCheckReport check_expo_ineq(const ExpoIneqCase& c, OracleMethod method,
                                 const OracleOptions& options = {});

// E log sum_a mu_a exp(beta g(y_a) - beta^2 sigma^2 / 2).
OracleValue log_moment_expectation(const FiniteMeasure& mu, double beta, const KernelSpec& kernel,
                                   OracleMethod method, const OracleOptions& options = {});

// Checks -c1 I <= E log(...) <= -c2 I with I the Gamma double integral of mu.
BoundCheckReport check_log_moment_bounds(const FiniteMeasure& mu, double beta, const KernelSpec& kernel,
                                         OracleMethod method, const OracleOptions& options = {});

// Randomized cases with at most max_atoms atoms; the exponent nodes are
// drawn from the atoms so the Gaussian dimension equals the atom count.
std::vector<ExpoIneqCase> random_expo_cases(std::uint64_t seed, int count, int max_atoms = 4);

// Two estimates of the same quantity agree within 4 combined standard errors.
BoundCheckReport agreement_report(std::string name, const OracleValue& a, const OracleValue& b);

// ---- polymer-level checks (d = 1 grid unless stated)

enum class GirsanovRoute {
  // <M_n^lambda> = Z_n(shifted environment) / Z_n, both estimated on the same
  // free ensemble (the shifted one translated by p * lambda).
  paired_shift,
  // <M_n^lambda> as a self-normalized Gibbs expectation of exp(lambda S_n - n lambda^2 / 2).
  direct_reweight,
};

// Quenched mean of log <M_n^lambda>; passes iff |mean| <= 4 se.
BoundCheckReport girsanov_identity_test(const GibbsParams& params, double lambda,
                                        std::span<const std::uint64_t> env_seeds,
                                        const PolymerSetup& setup,
                                        GirsanovRoute route = GirsanovRoute::paired_shift);

// Per n: quenched mean of log <1{S_n >= n^alpha}> against -n^(2 alpha - 1) / 2.
std::vector<BoundCheckReport> mean_control_test(double alpha, std::span<const int> n_grid,
                                                const GibbsParams& params,
                                                std::span<const std::uint64_t> env_seeds,
                                                const PolymerSetup& setup);

// Free-walk closed form log(1 - Phi(n^(alpha - 1/2))) against the same bound.
BoundCheckReport mean_control_analytic(double alpha, int n);

// sum_i (j_i - sgn(j_i))^2.
int ball_scale(std::span<const int> j);
double ball_bound(double alpha, int n, std::span<const int> j);

// Quenched mean of log <1{S_k in B(j n^alpha, n^alpha)}> against
// -(n^(2 alpha - 1) / 2) sum_i (j_i - eps_i)^2. Dimension from j.size().
BoundCheckReport ball_bound_test(double alpha, int n, int k, std::span<const int> j,
                                 const GibbsParams& params, std::span<const std::uint64_t> env_seeds,
                                 const PolymerSetup& setup);

enum class ConcentrationFunctional { log_partition, log_event_weight };
std::string to_string(ConcentrationFunctional f);

struct ConcentrationRow {
  int n = 0;
  ConcentrationFunctional functional = ConcentrationFunctional::log_partition;
  double nu = 0.75;
  double mean = 0.0;
  double std_dev = 0.0;
  double exceed_freq = 0.0;    // fraction of replicas with |X - mean| >= n^nu
  double exceed_stderr = 0.0;
  double tail_bound = 0.0;    // exp(-n^((2 nu - 1) / 3) / 4)
  double trend_ratio = 0.0;    // std_dev / n^nu
  double union_freq = 0.0;     // some j <= n exceeds (log_event_weight only)
  double union_bound = 0.0;    // min(1, n * tail_bound)
  int replicas = 0;
  int paths = 0;
  double min_ess_frac = 1.0;   // smallest ESS / M of the Gibbs weights over replicas
};

double concentration_bound(int n, double nu);

// Environment fluctuations of log Z_n, or of log W_{n,j} = log E[1{S_j >= 0} e^{beta H}]
// (reported at j = n, with the union over j <= n in the union columns).
std::vector<ConcentrationRow> concentration_scan(const GibbsParams& params, double nu,
                                                 std::span<const int> n_grid,
                                                 ConcentrationFunctional functional,
                                                 std::span<const std::uint64_t> env_seeds,
                                                 const PolymerSetup& setup);

// Trend (std / n^nu nonincreasing along the grid) and tail-frequency checks.
std::vector<BoundCheckReport> concentration_checks(std::span<const ConcentrationRow> rows);

struct IncrementProbeConfig {
  int n = 4;
  int j = 4;
  int i = 2;
  double beta = 0.5;
  int outer = 2000;
  int inner = 2000;
  int paths = 32;
  std::uint64_t seed = 1;
  KernelSpec kernel{};
  double grid_spacing = 0.0;  // <= 0: 1/(10 lambda)
  int threads = 1;
};

struct IncrementProbeResult {
  BoundCheckReport report;
  double estimate_full = 0.0;   // mean exp|X| with the full inner sample
  double estimate_half = 0.0;   // with the first half of the inner sample
  double mean_abs_increment = 0.0;
};

// Nested Monte Carlo estimate of E exp|X| for the martingale increment
// X = E_i log W_{n,j} - E_{i-1} log W_{n,j}, against K.
IncrementProbeResult martingale_increment_probe(const IncrementProbeConfig& config);

}  // namespace polymerlab
