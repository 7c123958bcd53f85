#pragma once

#include <span>
#include <vector>

namespace polymerlab {

double mean(std::span<const double> xs);
// Unbiased sample variance; 0 for fewer than two values.
double sample_variance(std::span<const double> xs);
double standard_error(std::span<const double> xs);

// log(sum exp(xs)); -inf for an empty range or all -inf entries.
double log_sum_exp(std::span<const double> xs);

double median(std::vector<double> xs);
// Linear-interpolation quantile (type 7), p in [0, 1].
double quantile(std::vector<double> xs, double p);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};
// Ordinary least squares of ys on xs.
LinearFit least_squares(std::span<const double> xs, std::span<const double> ys);

// Empirical covariance with the standard error of the sample mean of the
// centred products; used for z-scored covariance checks.
struct CovarianceSample {
  double covariance = 0.0;
  double std_error = 0.0;
};
CovarianceSample sample_covariance(std::span<const double> xs, std::span<const double> ys);

}  // namespace polymerlab
