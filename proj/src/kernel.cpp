#include "polymerlab/kernel.hpp"

#include <cmath>
#include <stdexcept>

namespace polymerlab {

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::exponential_petermann: return "exponential-petermann";
    case KernelKind::squared_exponential: return "squared-exponential";
    case KernelKind::product_exponential: return "product-exponential";
  }
  return "unknown";
}

KernelKind parse_kernel_kind(std::string_view name) {
  if (name == "exponential-petermann" || name == "exponential") return KernelKind::exponential_petermann;
  if (name == "squared-exponential") return KernelKind::squared_exponential;
  if (name == "product-exponential") return KernelKind::product_exponential;
  throw std::invalid_argument("unknown kernel kind '" + std::string(name) + "'");
}

void validate(const KernelSpec& kernel, int dimension) {
  if (!(kernel.lambda > 0.0) || !std::isfinite(kernel.lambda))
    throw std::invalid_argument("kernel.lambda must be a positive finite number");
  if (dimension < 1) throw std::invalid_argument("dimension must be at least 1");
  if (kernel.kind == KernelKind::exponential_petermann && dimension > 1)
    throw std::invalid_argument(
        "exponential-petermann is one-dimensional; use product-exponential for d > 1");
}

double kernel_variance(const KernelSpec& kernel, int dimension) {
  if (kernel.normalize_unit_variance) return 1.0;
  const double amplitude = 1.0 / (2.0 * kernel.lambda);
  if (kernel.kind == KernelKind::product_exponential) return std::pow(amplitude, dimension);
  return amplitude;
}

double gamma_eval(const KernelSpec& kernel, std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) throw std::invalid_argument("gamma_eval: non-finite lag");
  const int d = static_cast<int>(x.size());
  validate(kernel, d);
  const double scale = kernel_variance(kernel, d);
  switch (kernel.kind) {
    case KernelKind::exponential_petermann:
      return scale * std::exp(-kernel.lambda * std::fabs(x[0]));
    case KernelKind::squared_exponential: {
      double r2 = 0.0;
      for (double v : x) r2 += v * v;
      return scale * std::exp(-0.5 * kernel.lambda * kernel.lambda * r2);
    }
    case KernelKind::product_exponential: {
      double l1 = 0.0;
      for (double v : x) l1 += std::fabs(v);
      return scale * std::exp(-kernel.lambda * l1);
    }
  }
  return 0.0;
}

double gamma_eval(const KernelSpec& kernel, double x) {
  return gamma_eval(kernel, std::span<const double>(&x, 1));
}

}  // namespace polymerlab
