#include "polymerlab/environment.hpp"

#include <fftw3.h>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

#include "polymerlab/csv.hpp"
#include "polymerlab/errors.hpp"
#include "polymerlab/rng.hpp"
#include "polymerlab/stats.hpp"

namespace polymerlab {

namespace {

// FFTW's planner is not thread-safe; execution with new arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

constexpr double kJitter = 1e-10;
constexpr double kMaxClippedFraction = 1e-6;
constexpr int kMaxEmbeddingDoublings = 4;

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n)
      : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (!data) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* data;
};

}  // namespace

std::string to_string(Backend backend) { return backend == Backend::exact ? "exact" : "grid"; }

Backend parse_backend(const std::string& name) {
  if (name == "exact") return Backend::exact;
  if (name == "grid") return Backend::grid;
  throw std::invalid_argument("unknown backend '" + name + "'");
}

struct EnvironmentHandle::ExactSlice {
  explicit ExactSlice(std::uint64_t seed) : rng(seed) {}
  Rng rng;
  std::map<std::vector<double>, std::size_t> index;
  std::vector<double> positions;
  std::vector<double> values;
  Eigen::VectorXd innovations;
  Eigen::MatrixXd chol;
};

struct EnvironmentHandle::GridSlot {
  std::once_flag built;
  std::vector<double> values;
};

struct EnvironmentHandle::Spectrum {
  std::size_t size = 0;
  std::vector<double> amplitude;  // sqrt(max(eigenvalue, 0) / size)
  fftw_plan plan = nullptr;
  ~Spectrum() {
    if (plan) {
      std::lock_guard lock(fftw_planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
};

EnvironmentHandle::EnvironmentHandle(EnvironmentConfig config) : config_(std::move(config)) {
  validate(config_.kernel, config_.dimension);
  variance_ = kernel_variance(config_.kernel, config_.dimension);
  if (config_.backend == Backend::grid) {
    if (config_.dimension != 1)
      throw std::invalid_argument("grid backend supports d = 1 only");
    spacing_ = config_.grid_spacing > 0.0 ? config_.grid_spacing : 0.1 / config_.kernel.lambda;
    if (!(config_.grid_halfwidth >= 0.0) || !std::isfinite(config_.grid_halfwidth))
      throw std::invalid_argument("grid_halfwidth must be a non-negative finite number");
    diagnostics_.nodes =
        static_cast<std::size_t>(std::floor(2.0 * config_.grid_halfwidth / spacing_ + 1e-9)) + 1;
    build_spectrum();
  }
}

EnvironmentHandle::~EnvironmentHandle() = default;

std::vector<double> EnvironmentHandle::sample_slice_at(int slice, std::span<const double> positions) {
  if (slice < 1) throw std::invalid_argument("slice index must be >= 1");
  const auto d = static_cast<std::size_t>(config_.dimension);
  if (positions.size() % d != 0)
    throw std::invalid_argument("position array size is not a multiple of the dimension");
  for (double v : positions)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite query position");
  return config_.backend == Backend::exact ? sample_exact(slice, positions)
                                           : sample_grid(slice, positions);
}

std::vector<double> EnvironmentHandle::sample_exact(int slice, std::span<const double> positions) {
  const auto d = static_cast<std::size_t>(config_.dimension);
  auto& slot = exact_slices_[slice];
  if (!slot)
    slot = std::make_unique<ExactSlice>(
        derive_seed(config_.seed, StreamTag::env_slice, {static_cast<std::uint64_t>(slice)}));
  ExactSlice& s = *slot;

  const std::size_t queries = positions.size() / d;
  const std::size_t old_count = s.values.size();
  std::vector<std::size_t> where(queries);
  std::vector<double> fresh;  // flat positions of the new batch
  std::vector<decltype(s.index)::iterator> added;
  for (std::size_t q = 0; q < queries; ++q) {
    std::vector<double> key(positions.begin() + q * d, positions.begin() + (q + 1) * d);
    auto [it, inserted] = s.index.try_emplace(std::move(key), old_count + fresh.size() / d);
    if (inserted) {
      fresh.insert(fresh.end(), it->first.begin(), it->first.end());
      added.push_back(it);
    }
    where[q] = it->second;
  }

  const std::size_t m = fresh.size() / d;
  if (m > 0) try {
    std::vector<double> lag(d);
    auto cov = [&](const double* a, const double* b) {
      for (std::size_t i = 0; i < d; ++i) lag[i] = a[i] - b[i];
      return gamma_eval(config_.kernel, lag);
    };
    const std::size_t p = old_count;
    Eigen::MatrixXd cross(p, m);
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < m; ++b)
        cross(a, b) = cov(&s.positions[a * d], &fresh[b * d]);
    Eigen::MatrixXd block(m, m);
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b <= a; ++b) block(a, b) = block(b, a) = cov(&fresh[a * d], &fresh[b * d]);
      block(a, a) += kJitter * variance_;
    }
    Eigen::MatrixXd whitened;
    if (p > 0) {
      whitened = s.chol.topLeftCorner(p, p).triangularView<Eigen::Lower>().solve(cross);
      block.noalias() -= whitened.transpose() * whitened;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(block);
    if (llt.info() != Eigen::Success)
      throw ConditioningError("conditional covariance is not positive definite in slice " +
                              std::to_string(slice));
    Eigen::MatrixXd lower = llt.matrixL();
    for (std::size_t i = 0; i < m; ++i)
      if (!(lower(i, i) > 0.0) || !std::isfinite(lower(i, i)))
        throw ConditioningError("degenerate conditional variance in slice " + std::to_string(slice));

    Eigen::VectorXd z(m);
    for (std::size_t i = 0; i < m; ++i) z[i] = s.rng.normal();
    Eigen::VectorXd draw = lower * z;
    if (p > 0) draw.noalias() += whitened.transpose() * s.innovations;

    s.chol.conservativeResize(p + m, p + m);
    if (p > 0) {
      s.chol.topRightCorner(p, m).setZero();
      s.chol.bottomLeftCorner(m, p) = whitened.transpose();
    }
    s.chol.bottomRightCorner(m, m) = lower;
    s.innovations.conservativeResize(p + m);
    s.innovations.tail(m) = z;
    s.positions.insert(s.positions.end(), fresh.begin(), fresh.end());
    for (std::size_t i = 0; i < m; ++i) s.values.push_back(draw[i]);
  } catch (...) {
    for (auto it : added) s.index.erase(it);
    throw;
  }

  std::vector<double> out(queries);
  for (std::size_t q = 0; q < queries; ++q) out[q] = s.values[where[q]];
  return out;
}

std::size_t EnvironmentHandle::cached_points(int slice) const {
  auto it = exact_slices_.find(slice);
  return it == exact_slices_.end() ? 0 : it->second->values.size();
}

double EnvironmentHandle::grid_node(std::size_t index) const {
  return -config_.grid_halfwidth + static_cast<double>(index) * spacing_;
}

std::size_t EnvironmentHandle::grid_index_of(double x) const {
  const double half = config_.grid_halfwidth;
  const double slack = 1e-9 * std::max(1.0, half);
  if (!(x >= -half - slack && x <= half + slack))
    throw OutOfDomainError("position " + format_double(x) + " outside grid domain [-" +
                           format_double(half) + ", " + format_double(half) + "]");
  const double raw = std::nearbyint((x + half) / spacing_);
  const auto index = static_cast<std::size_t>(std::max(0.0, raw));
  return std::min(index, diagnostics_.nodes - 1);
}

void EnvironmentHandle::build_spectrum() {
  const std::size_t nodes = diagnostics_.nodes;
  if (nodes == 1) {
    diagnostics_.embedding_size = 1;
    return;
  }
  std::size_t half = nodes - 1;
  for (int attempt = 0;; ++attempt) {
    const std::size_t m = 2 * half;
    FftwBuffer in(m), out(m);
    for (std::size_t i = 0; i <= half; ++i) {
      const double c = gamma_eval(config_.kernel, static_cast<double>(i) * spacing_);
      in.data[i][0] = c;
      in.data[i][1] = 0.0;
      if (i > 0 && i < half) {
        in.data[m - i][0] = c;
        in.data[m - i][1] = 0.0;
      }
    }
    auto spectrum = std::make_unique<Spectrum>();
    spectrum->size = m;
    {
      std::lock_guard lock(fftw_planner_mutex());
      spectrum->plan = fftw_plan_dft_1d(static_cast<int>(m), in.data, out.data, FFTW_FORWARD,
                                        FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
    }
    if (!spectrum->plan) throw std::runtime_error("FFTW planning failed");
    fftw_execute(spectrum->plan);

    double clipped = 0.0, total = 0.0;
    spectrum->amplitude.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      const double eig = out.data[j][0];
      total += std::fabs(eig);
      if (eig < 0.0) clipped -= eig;
      spectrum->amplitude[j] = std::sqrt(std::max(eig, 0.0) / static_cast<double>(m));
    }
    const double fraction = total > 0.0 ? clipped / total : 0.0;
    if (fraction <= kMaxClippedFraction || attempt == kMaxEmbeddingDoublings) {
      diagnostics_.embedding_size = m;
      diagnostics_.clipped_mass_fraction = fraction;
      if (fraction > kMaxClippedFraction)
        throw ConditioningError("circulant embedding clipped " + format_double(fraction) +
                                " of the spectral mass");
      spectrum_ = std::move(spectrum);
      return;
    }
    half *= 2;
  }
}

std::vector<double> EnvironmentHandle::synthesize(int slice) const {
  Rng rng(config_.seed, StreamTag::env_slice, {static_cast<std::uint64_t>(slice)});
  const std::size_t nodes = diagnostics_.nodes;
  if (nodes == 1) return {std::sqrt(variance_) * rng.normal()};

  const std::size_t m = spectrum_->size;
  FftwBuffer in(m), out(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double re = rng.normal();
    const double im = rng.normal();
    in.data[j][0] = spectrum_->amplitude[j] * re;
    in.data[j][1] = spectrum_->amplitude[j] * im;
  }
  fftw_execute_dft(spectrum_->plan, in.data, out.data);
  std::vector<double> values(nodes);
  for (std::size_t i = 0; i < nodes; ++i) values[i] = out.data[i][0];
  return values;
}

EnvironmentHandle::GridSlot& EnvironmentHandle::grid_slot(int slice) {
  if (config_.backend != Backend::grid) throw std::logic_error("not a grid-backend environment");
  if (slice < 1) throw std::invalid_argument("slice index must be >= 1");
  std::lock_guard lock(grid_mutex_);
  auto& slot = grid_slots_[slice];
  if (!slot) slot = std::make_unique<GridSlot>();
  return *slot;
}

std::span<const double> EnvironmentHandle::grid_slice(int slice) {
  GridSlot& slot = grid_slot(slice);
  std::call_once(slot.built, [&] { slot.values = synthesize(slice); });
  return slot.values;
}

void EnvironmentHandle::install_grid_slice(int slice, std::vector<double> values) {
  if (values.size() != diagnostics_.nodes)
    throw std::invalid_argument("installed slice has the wrong number of nodes");
  GridSlot& slot = grid_slot(slice);
  bool installed = false;
  std::call_once(slot.built, [&] {
    slot.values = std::move(values);
    installed = true;
  });
  if (!installed) throw std::logic_error("slice " + std::to_string(slice) + " was already built");
}

std::vector<double> EnvironmentHandle::sample_grid(int slice, std::span<const double> positions) {
  const std::span<const double> values = grid_slice(slice);
  std::vector<double> out(positions.size());
  for (std::size_t q = 0; q < positions.size(); ++q) out[q] = values[grid_index_of(positions[q])];
  return out;
}

std::unique_ptr<EnvironmentHandle> make_environment(const EnvironmentConfig& config) {
  return std::make_unique<EnvironmentHandle>(config);
}

std::vector<std::pair<std::size_t, std::size_t>> all_pairs(std::size_t count) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < count; ++a)
    for (std::size_t b = a; b < count; ++b) pairs.emplace_back(a, b);
  return pairs;
}

std::string format_slice_point(const SlicePoint& p) {
  std::string out = std::to_string(p.slice) + ":";
  for (std::size_t i = 0; i < p.x.size(); ++i) {
    if (i) out += '|';
    out += format_double(p.x[i]);
  }
  return out;
}

std::vector<CovarianceCheck> covariance_selftest(
    const EnvironmentConfig& base, const std::vector<SlicePoint>& points,
    const std::vector<std::pair<std::size_t, std::size_t>>& pairs, int seeds) {
  if (seeds < 100) throw std::invalid_argument("covariance_selftest needs at least 100 seeds");
  const auto d = static_cast<std::size_t>(base.dimension);
  for (const auto& p : points)
    if (p.x.size() != d) throw std::invalid_argument("self-test point has the wrong dimension");

  // Query order is fixed: slices ascending, points in list order within a slice.
  std::map<int, std::vector<std::size_t>> by_slice;
  for (std::size_t i = 0; i < points.size(); ++i) by_slice[points[i].slice].push_back(i);

  std::vector<std::vector<double>> samples(points.size(), std::vector<double>(seeds));
  for (int s = 0; s < seeds; ++s) {
    EnvironmentConfig config = base;
    config.seed = derive_seed(base.seed, StreamTag::selftest, {static_cast<std::uint64_t>(s)});
    EnvironmentHandle env(config);
    for (const auto& [slice, members] : by_slice) {
      std::vector<double> flat;
      for (std::size_t i : members) flat.insert(flat.end(), points[i].x.begin(), points[i].x.end());
      const auto values = env.sample_slice_at(slice, flat);
      for (std::size_t q = 0; q < members.size(); ++q) samples[members[q]][s] = values[q];
    }
  }

  std::vector<CovarianceCheck> out;
  std::vector<double> lag(d);
  for (auto [a, b] : pairs) {
    CovarianceCheck check;
    check.a = points.at(a);
    check.b = points.at(b);
    if (check.a.slice == check.b.slice) {
      for (std::size_t i = 0; i < d; ++i) lag[i] = check.a.x[i] - check.b.x[i];
      check.target = gamma_eval(base.kernel, lag);
    }
    const auto sample = sample_covariance(samples[a], samples[b]);
    check.empirical = sample.covariance;
    const double diff = check.empirical - check.target;
    check.z = sample.std_error > 0.0 ? diff / sample.std_error : (diff == 0.0 ? 0.0 : INFINITY);
    out.push_back(std::move(check));
  }
  return out;
}

}  // namespace polymerlab
