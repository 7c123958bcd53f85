#pragma once

#include <span>
#include <string>
#include <string_view>

namespace polymerlab {

enum class KernelKind {
  exponential_petermann,  // (1/(2 lambda)) exp(-lambda |x|), d = 1 only
  squared_exponential,    // (1/(2 lambda)) exp(-lambda^2 |x|_2^2 / 2)
  product_exponential,    // prod_i (1/(2 lambda)) exp(-lambda |x_i|)
};

// Spatial covariance Gamma of one environment slice. With
// normalize_unit_variance the amplitude is rescaled so Gamma(0) = 1.
struct KernelSpec {
  KernelKind kind = KernelKind::exponential_petermann;
  double lambda = 1.0;
  bool normalize_unit_variance = true;
};

std::string_view to_string(KernelKind kind);
KernelKind parse_kernel_kind(std::string_view name);

// Throws std::invalid_argument when lambda is not a positive finite number or
// the kind does not support the dimension.
void validate(const KernelSpec& kernel, int dimension);

// Gamma(0) in dimension d.
double kernel_variance(const KernelSpec& kernel, int dimension);

// Gamma(x) for a lag vector x; the dimension is x.size().
double gamma_eval(const KernelSpec& kernel, std::span<const double> x);
double gamma_eval(const KernelSpec& kernel, double x);

}  // namespace polymerlab
