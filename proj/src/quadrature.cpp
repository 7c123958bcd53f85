#include "polymerlab/quadrature.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

#include "polymerlab/errors.hpp"

namespace polymerlab {

namespace {

// Orthonormal Hermite values q_0..q_count at x (probabilists' weight).
void orthonormal_hermite(int count, double x, double& q_last, double& q_prev, double& christoffel) {
  double q0 = 1.0, q1 = x;
  christoffel = 1.0;
  if (count == 1) {
    q_last = q1;
    q_prev = q0;
    return;
  }
  christoffel += q1 * q1;
  for (int k = 1; k < count; ++k) {
    const double q2 = (x * q1 - std::sqrt(static_cast<double>(k)) * q0) / std::sqrt(static_cast<double>(k + 1));
    q0 = q1;
    q1 = q2;
    if (k + 1 < count) christoffel += q1 * q1;
  }
  q_last = q1;
  q_prev = q0;
}

}  // namespace

GaussHermiteRule gauss_hermite(int count) {
  if (count < 1) throw std::invalid_argument("Gauss-Hermite rule needs at least one node");
  GaussHermiteRule rule;
  if (count == 1) {
    rule.nodes = {0.0};
    rule.weights = {1.0};
    return rule;
  }
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(count, count);
  for (int i = 1; i < count; ++i) jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi, Eigen::EigenvaluesOnly);
  rule.nodes.resize(count);
  rule.weights.resize(count);
  for (int i = 0; i < count; ++i) {
    double x = solver.eigenvalues()[i];
    double q_n = 0.0, q_prev = 0.0, christoffel = 0.0;
    for (int iter = 0; iter < 4; ++iter) {
      orthonormal_hermite(count, x, q_n, q_prev, christoffel);
      const double derivative = std::sqrt(static_cast<double>(count)) * q_prev;
      if (derivative == 0.0) break;
      x -= q_n / derivative;
    }
    orthonormal_hermite(count, x, q_n, q_prev, christoffel);
    rule.nodes[i] = x;
    rule.weights[i] = 1.0 / christoffel;
  }
  // Exact symmetry about zero.
  for (int i = 0; i < count / 2; ++i) {
    const int k = count - 1 - i;
    const double x = 0.5 * (rule.nodes[k] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[k] + rule.weights[i]);
    rule.nodes[i] = -x;
    rule.nodes[k] = x;
    rule.weights[i] = rule.weights[k] = w;
  }
  if (count % 2 == 1) rule.nodes[count / 2] = 0.0;
  return rule;
}

int default_nodes_per_dim(int dimension) {
  switch (dimension) {
    case 1: return 96;
    case 2: return 64;
    case 3: return 48;
    case 4: return 40;
    default:
      return std::max(6, static_cast<int>(std::floor(std::pow(3.0e6, 1.0 / dimension))));
  }
}

double gaussian_expectation(const Eigen::MatrixXd& covariance,
                            const std::function<double(std::span<const double>)>& f,
                            int nodes_per_dim) {
  const auto dim = static_cast<int>(covariance.rows());
  if (dim < 1 || covariance.cols() != dim) throw std::invalid_argument("covariance must be square");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw ConditioningError("quadrature covariance is not positive definite");
  const Eigen::MatrixXd lower = llt.matrixL();
  const GaussHermiteRule rule = gauss_hermite(nodes_per_dim);

  std::vector<int> digit(dim, 0);
  Eigen::VectorXd z(dim);
  std::vector<double> g(dim);
  double total = 0.0;
  for (;;) {
    double weight = 1.0;
    for (int i = 0; i < dim; ++i) {
      z[i] = rule.nodes[digit[i]];
      weight *= rule.weights[digit[i]];
    }
    const Eigen::VectorXd mapped = lower * z;
    for (int i = 0; i < dim; ++i) g[i] = mapped[i];
    total += weight * f(g);

    int pos = 0;
    while (pos < dim && ++digit[pos] == nodes_per_dim) digit[pos++] = 0;
    if (pos == dim) break;
  }
  return total;
}

}  // namespace polymerlab
