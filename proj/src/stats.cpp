#include "polymerlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace polymerlab {

namespace {
// Welford accumulation: exact for constant samples.
struct Moments {
  double mean = 0.0;
  double m2 = 0.0;
};
Moments moments(std::span<const double> xs) {
  Moments out;
  double count = 0.0;
  for (double x : xs) {
    count += 1.0;
    const double delta = x - out.mean;
    out.mean += delta / count;
    out.m2 += delta * (x - out.mean);
  }
  return out;
}
}  // namespace

double mean(std::span<const double> xs) { return moments(xs).mean; }

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  return std::max(0.0, moments(xs).m2) / static_cast<double>(xs.size() - 1);
}

double standard_error(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  return std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()));
}

double log_sum_exp(std::span<const double> xs) {
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  double top = ninf;
  for (double x : xs) top = std::max(top, x);
  if (top == ninf) return ninf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - top);
  return top + std::log(s);
}

double quantile(std::vector<double> xs, double p) {
  if (xs.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = p * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] + frac * (xs[hi] - xs[lo]);
}

double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

LinearFit least_squares(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("least_squares needs at least two paired points");
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("least_squares: abscissae are all equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

CovarianceSample sample_covariance(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw std::invalid_argument("sample_covariance needs at least two paired values");
  const double mx = mean(xs);
  const double my = mean(ys);
  std::vector<double> products(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) products[i] = (xs[i] - mx) * (ys[i] - my);
  const double n = static_cast<double>(xs.size());
  CovarianceSample out;
  out.covariance = mean(products) * n / (n - 1.0);
  out.std_error = standard_error(products);
  return out;
}

}  // namespace polymerlab
