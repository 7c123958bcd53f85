#pragma once

#include <Eigen/Core>
#include <functional>
#include <span>
#include <vector>

namespace polymerlab {

// Gauss-Hermite rule for expectations under N(0, 1): sum_i w_i f(x_i)
// approximates E f(Z). Nodes from the Golub-Welsch eigenproblem, polished
// by Newton steps on the orthonormal Hermite recurrence; weights from the
// Christoffel function so the tiny tail weights keep full relative accuracy.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

GaussHermiteRule gauss_hermite(int count);

// Nodes per dimension keeping a tensor rule near three million points.
int default_nodes_per_dim(int dimension);

// E f(g) for g ~ N(0, covariance), by tensorizing the rule over z with
// g = L z, L the Cholesky factor. Throws ConditioningError when the
// covariance is not positive definite.
double gaussian_expectation(const Eigen::MatrixXd& covariance,
                            const std::function<double(std::span<const double>)>& f,
                            int nodes_per_dim);

}  // namespace polymerlab
