#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace polymerlab {

// Positions S_1..S_n of a walk in R^d started at the origin (S_0 implicit),
// stored row-major as n x d.
struct Path {
  int n = 0;
  int d = 1;
  std::vector<double> positions;

  Path() = default;
  Path(int steps, int dim) : n(steps), d(dim), positions(static_cast<std::size_t>(steps) * dim, 0.0) {}

  // Step p in [1, n]; p = 0 is not stored.
  std::span<const double> at(int p) const {
    return {positions.data() + static_cast<std::size_t>(p - 1) * d, static_cast<std::size_t>(d)};
  }
  std::span<double> at(int p) {
    return {positions.data() + static_cast<std::size_t>(p - 1) * d, static_cast<std::size_t>(d)};
  }
};

struct PathEnsemble {
  int n = 0;
  int d = 1;
  std::vector<Path> paths;

  std::size_t size() const { return paths.size(); }
  // Flat positions of every path at step p, in path order.
  std::vector<double> positions_at(int p) const;
};

// One path with N(0, I_d) increments. Replica m of `seed` draws its n*d
// normals from its own stream, step-major then coordinate, so ensembles
// are reproducible element by element and independent of thread count.
Path sample_path(std::uint64_t seed, std::uint64_t replica, int n, int d);
PathEnsemble sample_paths(std::uint64_t seed, int count, int n, int d, int threads = 1);

// Ramp drift lambda_tilde * min(p / pivot, 1): the Girsanov shift whose
// density against the free walk is exp(lambda . S_pivot - pivot |lambda|^2 / 2)
// with lambda = lambda_tilde / pivot.
struct TiltSpec {
  std::vector<double> lambda_tilde;
  int pivot = 1;
};

Path tilt_path(const Path& path, const TiltSpec& tilt);
PathEnsemble tilt_ensemble(const PathEnsemble& ensemble, const TiltSpec& tilt);

// log dP/dQ at a path drawn from the tilted law Q. For tilted = S + ramp this
// is -(lambda_tilde . S_pivot + |lambda_tilde|^2 / 2) / pivot in terms of the
// untilted S.
double log_density_ratio(const Path& tilted, const TiltSpec& tilt);

// max_{k<=n} max_i |S_k^i|; 0 for an empty path.
double running_max_norm(const Path& path);

// Dump as CSV rows (replica, step, coordinate, value).
void write_ensemble_csv(std::ostream& out, const PathEnsemble& ensemble);

}  // namespace polymerlab
