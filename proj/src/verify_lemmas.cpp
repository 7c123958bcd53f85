#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "polymerlab/csv.hpp"
#include "polymerlab/errors.hpp"
#include "polymerlab/quadrature.hpp"
#include "polymerlab/rng.hpp"
#include "polymerlab/stats.hpp"
#include "polymerlab/verify.hpp"

namespace polymerlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Distinct support points of a case, with index maps for nodes and atoms.
struct Support {
  std::vector<double> points;
  std::vector<std::size_t> node_index;
  std::vector<std::size_t> atom_index;
};

std::size_t add_point(std::vector<double>& points, std::map<double, std::size_t>& seen, double x) {
  auto [it, inserted] = seen.try_emplace(x, points.size());
  if (inserted) points.push_back(x);
  return it->second;
}

Support make_support(const std::vector<double>& nodes, const std::vector<double>& atoms) {
  Support s;
  std::map<double, std::size_t> seen;
  for (double x : atoms) s.atom_index.push_back(add_point(s.points, seen, x));
  for (double x : nodes) s.node_index.push_back(add_point(s.points, seen, x));
  return s;
}

Eigen::MatrixXd covariance_of(const std::vector<double>& points, const KernelSpec& kernel) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b <= a; ++b)
      cov(a, b) = cov(b, a) = gamma_eval(kernel, points[a] - points[b]);
  return cov;
}

template <typename F>
OracleValue gaussian_oracle(const Eigen::MatrixXd& cov, F&& integrand, OracleMethod method,
                            const OracleOptions& options) {
  OracleValue out;
  const auto dim = static_cast<int>(cov.rows());
  if (method == OracleMethod::quadrature) {
    const int nodes = options.nodes_per_dim > 0 ? options.nodes_per_dim : default_nodes_per_dim(dim);
    out.value = gaussian_expectation(cov, integrand, nodes);
    // Quadrature error: distance to a coarser rule, floored at rounding level.
    const double coarse = gaussian_expectation(cov, integrand, std::max(2, 3 * nodes / 4));
    out.std_error = std::max(std::fabs(out.value - coarse),
                             16.0 * std::numeric_limits<double>::epsilon() * std::fabs(out.value));
    return out;
  }
  if (options.mc_draws < 2) throw std::invalid_argument("Monte Carlo oracle needs at least two draws");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw ConditioningError("oracle covariance is not positive definite");
  const Eigen::MatrixXd lower = llt.matrixL();
  Rng rng(options.seed, StreamTag::quadrature_mc);
  Eigen::VectorXd z(dim);
  std::vector<double> g(dim);
  std::vector<double> samples(static_cast<std::size_t>(options.mc_draws));
  for (auto& sample : samples) {
    for (int i = 0; i < dim; ++i) z[i] = rng.normal();
    const Eigen::VectorXd mapped = lower * z;
    for (int i = 0; i < dim; ++i) g[i] = mapped[i];
    sample = integrand(std::span<const double>(g));
  }
  out.value = mean(samples);
  out.std_error = standard_error(samples);
  return out;
}

double log_mixture(const FiniteMeasure& mu, const std::vector<std::size_t>& atom_index,
                   std::span<const double> g, double beta) {
  double top = -kInf;
  for (std::size_t a = 0; a < mu.atoms.size(); ++a)
    if (mu.weights[a] > 0.0) top = std::max(top, std::log(mu.weights[a]) + beta * g[atom_index[a]]);
  double sum = 0.0;
  for (std::size_t a = 0; a < mu.atoms.size(); ++a)
    if (mu.weights[a] > 0.0) sum += std::exp(std::log(mu.weights[a]) + beta * g[atom_index[a]] - top);
  return top + std::log(sum);
}

std::string describe(const FiniteMeasure& mu) {
  std::string out = "atoms=";
  for (std::size_t a = 0; a < mu.atoms.size(); ++a) {
    if (a) out += '|';
    out += format_double(mu.atoms[a]) + "@" + format_double(mu.weights[a]);
  }
  return out;
}

}  // namespace

BoundCheckReport make_report(std::string name, double estimate, double std_error, double lower,
                             double upper, std::string note) {
  BoundCheckReport r;
  r.name = std::move(name);
  r.estimate = estimate;
  r.std_error = std_error;
  r.lower_bound = lower;
  r.upper_bound = upper;
  r.note = std::move(note);
  const double slack = kPassSigmas * std_error;
  r.pass = std::isfinite(estimate) && estimate >= lower - slack && estimate <= upper + slack;
  const double inside = std::min(estimate - lower, upper - estimate);
  if (std_error > 0.0)
    r.margin_sigmas = inside / std_error;
  else
    r.margin_sigmas = inside > 0.0 ? kInf : (inside == 0.0 ? 0.0 : -kInf);
  return r;
}

BoundConstants bound_constants(double beta, double sigma2) {
  if (!(beta > 0.0) || !(sigma2 > 0.0)) throw std::invalid_argument("bound constants need beta, sigma^2 > 0");
  const double x = beta * beta * sigma2;
  BoundConstants k;
  k.c1 = std::expm1(8.0 * x) / (16.0 * sigma2);
  k.c2 = -std::expm1(-x) / (2.0 * sigma2);
  k.c = k.c1 * sigma2;
  k.K = std::exp(k.c) + std::exp(beta * beta);
  return k;
}

void validate(const FiniteMeasure& mu) {
  if (mu.atoms.empty() || mu.atoms.size() != mu.weights.size())
    throw std::invalid_argument("finite measure needs matching non-empty atoms and weights");
  double total = 0.0;
  for (std::size_t a = 0; a < mu.atoms.size(); ++a) {
    if (!std::isfinite(mu.atoms[a]) || !(mu.weights[a] >= 0.0))
      throw std::invalid_argument("finite measure has a non-finite atom or negative weight");
    total += mu.weights[a];
  }
  if (std::fabs(total - 1.0) > 1e-12) throw std::invalid_argument("finite measure weights must sum to 1");
}

double double_integral_gamma(const FiniteMeasure& mu, const KernelSpec& kernel) {
  validate(mu);
  double total = 0.0;
  for (std::size_t a = 0; a < mu.atoms.size(); ++a)
    for (std::size_t b = 0; b < mu.atoms.size(); ++b)
      total += mu.weights[a] * mu.weights[b] * gamma_eval(kernel, mu.atoms[a] - mu.atoms[b]);
  return total;
}

OracleValue expo_ineq_expectation(const ExpoIneqCase& c, OracleMethod method, const OracleOptions& options) {
  validate(c.mu);
  validate(c.kernel, 1);
  if (!(c.q > 0.0) || !(c.beta > 0.0)) throw std::invalid_argument("q and beta must be positive");
  if (c.nodes.size() != c.lambdas.size()) throw std::invalid_argument("nodes and lambdas differ in length");
  const Support support = make_support(c.nodes, c.mu.atoms);
  const Eigen::MatrixXd cov = covariance_of(support.points, c.kernel);
  auto integrand = [&](std::span<const double> g) {
    double exponent = 0.0;
    for (std::size_t i = 0; i < c.nodes.size(); ++i) exponent += c.lambdas[i] * g[support.node_index[i]];
    return std::exp(c.beta * exponent - c.q * log_mixture(c.mu, support.atom_index, g, c.beta));
  };
  return gaussian_oracle(cov, integrand, method, options);
}

BoundCheckReport check_expo_ineq(const ExpoIneqCase& c, OracleMethod method, const OracleOptions& options) {
  const OracleValue v = expo_ineq_expectation(c, method, options);
  const double s2 = c.sigma2();
  double l1 = 0.0;
  for (double l : c.lambdas) l1 += std::fabs(l);
  const double b2s2 = c.beta * c.beta * s2;
  const double lower = std::exp(-0.5 * b2s2 * c.q);
  const double upper = std::exp(0.5 * b2s2 * (c.q + l1) * (c.q + l1));
  std::string note = "q=" + format_double(c.q) + ";beta=" + format_double(c.beta) +
                     ";sigma2=" + format_double(s2) + ";lambda_l1=" + format_double(l1) + ";" + describe(c.mu) +
                     (method == OracleMethod::quadrature ? ";quadrature" : ";monte-carlo");
  return make_report("expo-ineq", v.value, v.std_error, lower, upper, std::move(note));
}

OracleValue log_moment_expectation(const FiniteMeasure& mu, double beta, const KernelSpec& kernel,
                                   OracleMethod method, const OracleOptions& options) {
  validate(mu);
  validate(kernel, 1);
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  const Support support = make_support({}, mu.atoms);
  const Eigen::MatrixXd cov = covariance_of(support.points, kernel);
  const double shift = 0.5 * beta * beta * kernel_variance(kernel, 1);
  auto integrand = [&](std::span<const double> g) {
    return log_mixture(mu, support.atom_index, g, beta) - shift;
  };
  return gaussian_oracle(cov, integrand, method, options);
}

BoundCheckReport check_log_moment_bounds(const FiniteMeasure& mu, double beta, const KernelSpec& kernel,
                                         OracleMethod method, const OracleOptions& options) {
  const OracleValue v = log_moment_expectation(mu, beta, kernel, method, options);
  const double s2 = kernel_variance(kernel, 1);
  const BoundConstants k = bound_constants(beta, s2);
  const double mass = double_integral_gamma(mu, kernel);
  std::string note = "beta=" + format_double(beta) + ";sigma2=" + format_double(s2) +
                     ";double_integral=" + format_double(mass) + ";" + describe(mu) +
                     (method == OracleMethod::quadrature ? ";quadrature" : ";monte-carlo");
  return make_report("log-moment", v.value, v.std_error, -k.c1 * mass, -k.c2 * mass, std::move(note));
}

std::vector<ExpoIneqCase> random_expo_cases(std::uint64_t seed, int count, int max_atoms) {
  if (max_atoms < 1) throw std::invalid_argument("max_atoms must be at least 1");
  Rng rng(seed, StreamTag::case_generator);
  std::vector<ExpoIneqCase> cases;
  for (int c = 0; c < count; ++c) {
    ExpoIneqCase x;
    x.q = 0.5 + 1.5 * rng.uniform();
    x.beta = 0.2 + 0.6 * rng.uniform();
    x.kernel.kind = KernelKind::exponential_petermann;
    x.kernel.lambda = 0.5 + 1.5 * rng.uniform();
    x.kernel.normalize_unit_variance = (c % 2 == 0);
    const int atoms = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_atoms)));
    double total = 0.0;
    for (int a = 0; a < atoms; ++a) {
      x.mu.atoms.push_back(-1.5 + 3.0 * rng.uniform());
      x.mu.weights.push_back(-std::log(rng.uniform()));
      total += x.mu.weights.back();
    }
    for (auto& w : x.mu.weights) w /= total;
    // Renormalize so the weights sum to one up to rounding of the last entry.
    double head = 0.0;
    for (int a = 0; a + 1 < atoms; ++a) head += x.mu.weights[a];
    x.mu.weights.back() = 1.0 - head;
    const int nodes = static_cast<int>(rng.below(static_cast<std::uint64_t>(atoms + 1)));
    for (int i = 0; i < nodes; ++i) {
      x.nodes.push_back(x.mu.atoms[i]);
      x.lambdas.push_back(-0.5 + rng.uniform());
    }
    cases.push_back(std::move(x));
  }
  return cases;
}

BoundCheckReport agreement_report(std::string name, const OracleValue& a, const OracleValue& b) {
  const double se = std::hypot(a.std_error, b.std_error);
  return make_report(std::move(name), a.value - b.value, se, 0.0, 0.0,
                     "a=" + format_double(a.value) + ";b=" + format_double(b.value));
}

}  // namespace polymerlab
