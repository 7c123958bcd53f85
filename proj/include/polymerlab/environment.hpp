#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "polymerlab/kernel.hpp"

namespace polymerlab {

// The random field g(k, x): one centred stationary Gaussian field per time
// slice k >= 1, independent across slices. Positions are passed as a flat
// array of d-vectors.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual int dimension() const = 0;
  // sigma^2 = Gamma(0).
  virtual double variance() const = 0;
  // Values at `positions` (size a multiple of dimension()). Repeated queries
  // of the same (slice, position) return the same value.
  virtual std::vector<double> sample_slice_at(int slice, std::span<const double> positions) = 0;
};

enum class Backend { exact, grid };

std::string to_string(Backend backend);
Backend parse_backend(const std::string& name);

struct EnvironmentConfig {
  std::uint64_t seed = 0;
  KernelSpec kernel{};
  int dimension = 1;
  Backend backend = Backend::exact;
  // Grid backend only. A non-positive spacing selects 1/(10 lambda).
  double grid_spacing = 0.0;
  double grid_halfwidth = 0.0;
};

struct GridDiagnostics {
  std::size_t nodes = 0;
  std::size_t embedding_size = 0;
  // Negative circulant eigenvalue mass clipped to zero, relative to the
  // total absolute spectral mass.
  double clipped_mass_fraction = 0.0;
};

// A seeded realization of the environment.
//
// Exact backend: each slice keeps a cache of sampled points together with the
// Cholesky factor of their covariance; a new batch of points is drawn from its
// Gaussian conditional law given everything already cached (diagonal jitter
// 1e-10 sigma^2). The realization is deterministic for a fixed query order.
// Not safe for concurrent use.
//
// Grid backend (d = 1): each slice is synthesized on the uniform grid
// {-L, -L + h, ..., L} by circulant embedding, exactly once per (seed, slice),
// and queries snap to the nearest node. Concurrent queries are safe; the
// realization does not depend on query order.
class EnvironmentHandle final : public Environment {
 public:
  explicit EnvironmentHandle(EnvironmentConfig config);
  ~EnvironmentHandle() override;
  EnvironmentHandle(const EnvironmentHandle&) = delete;
  EnvironmentHandle& operator=(const EnvironmentHandle&) = delete;

  int dimension() const override { return config_.dimension; }
  double variance() const override { return variance_; }
  std::vector<double> sample_slice_at(int slice, std::span<const double> positions) override;

  const EnvironmentConfig& config() const { return config_; }

  // Grid backend: the synthesized node values of a slice (built on demand).
  std::span<const double> grid_slice(int slice);
  // Grid backend: supply node values for a slice that has not been built yet.
  void install_grid_slice(int slice, std::vector<double> values);
  std::size_t grid_size() const { return diagnostics_.nodes; }
  double grid_spacing() const { return spacing_; }
  double grid_node(std::size_t index) const;
  // Nearest node index; throws OutOfDomainError outside [-L, L].
  std::size_t grid_index_of(double x) const;
  const GridDiagnostics& diagnostics() const { return diagnostics_; }

  // Exact backend: number of distinct points cached for a slice.
  std::size_t cached_points(int slice) const;

 private:
  struct ExactSlice;
  struct GridSlot;
  struct Spectrum;

  std::vector<double> sample_exact(int slice, std::span<const double> positions);
  std::vector<double> sample_grid(int slice, std::span<const double> positions);
  GridSlot& grid_slot(int slice);
  void build_spectrum();
  std::vector<double> synthesize(int slice) const;

  EnvironmentConfig config_;
  double variance_ = 1.0;
  double spacing_ = 0.0;
  GridDiagnostics diagnostics_;
  std::unique_ptr<Spectrum> spectrum_;
  std::map<int, std::unique_ptr<ExactSlice>> exact_slices_;
  mutable std::mutex grid_mutex_;
  std::map<int, std::unique_ptr<GridSlot>> grid_slots_;
};

std::unique_ptr<EnvironmentHandle> make_environment(const EnvironmentConfig& config);

// A point of the space-time environment.
struct SlicePoint {
  int slice = 1;
  std::vector<double> x;
};

struct CovarianceCheck {
  SlicePoint a;
  SlicePoint b;
  double target = 0.0;
  double empirical = 0.0;
  double z = 0.0;
};

// Empirical covariance of the field over `seeds` independent realizations
// (seed_s derived from base.seed) for every requested pair of points, against
// the Gamma targets, with standard-error z-scores.
std::vector<CovarianceCheck> covariance_selftest(
    const EnvironmentConfig& base, const std::vector<SlicePoint>& points,
    const std::vector<std::pair<std::size_t, std::size_t>>& pairs, int seeds);

// All pairs (a, b) with a <= b.
std::vector<std::pair<std::size_t, std::size_t>> all_pairs(std::size_t count);

std::string format_slice_point(const SlicePoint& p);

}  // namespace polymerlab
