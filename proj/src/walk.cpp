#include "polymerlab/walk.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "polymerlab/csv.hpp"
#include "polymerlab/parallel.hpp"
#include "polymerlab/rng.hpp"

namespace polymerlab {

std::vector<double> PathEnsemble::positions_at(int p) const {
  std::vector<double> flat;
  flat.reserve(paths.size() * static_cast<std::size_t>(d));
  for (const auto& path : paths) {
    const auto x = path.at(p);
    flat.insert(flat.end(), x.begin(), x.end());
  }
  return flat;
}

Path sample_path(std::uint64_t seed, std::uint64_t replica, int n, int d) {
  if (n < 1 || d < 1) throw std::invalid_argument("sample_path needs n, d >= 1");
  Rng rng(seed, StreamTag::walk, {replica});
  Path path(n, d);
  for (int p = 1; p <= n; ++p) {
    auto x = path.at(p);
    for (int i = 0; i < d; ++i) {
      const double previous = p > 1 ? path.positions[static_cast<std::size_t>(p - 2) * d + i] : 0.0;
      x[i] = previous + rng.normal();
    }
  }
  return path;
}

PathEnsemble sample_paths(std::uint64_t seed, int count, int n, int d, int threads) {
  if (count < 1 || n < 1 || d < 1) throw std::invalid_argument("sample_paths needs M, n, d >= 1");
  PathEnsemble ensemble;
  ensemble.n = n;
  ensemble.d = d;
  ensemble.paths = parallel_map<Path>(static_cast<std::size_t>(count), threads,
                                      [&](std::size_t m) { return sample_path(seed, m, n, d); });
  return ensemble;
}

Path tilt_path(const Path& path, const TiltSpec& tilt) {
  if (tilt.pivot < 1 || tilt.pivot > path.n)
    throw std::invalid_argument("tilt pivot must lie in [1, n]");
  if (tilt.lambda_tilde.size() != static_cast<std::size_t>(path.d))
    throw std::invalid_argument("tilt dimension does not match the path");
  Path out = path;
  for (int p = 1; p <= path.n; ++p) {
    const double ramp = p >= tilt.pivot ? 1.0 : static_cast<double>(p) / tilt.pivot;
    auto x = out.at(p);
    for (int i = 0; i < path.d; ++i) x[i] += tilt.lambda_tilde[i] * ramp;
  }
  return out;
}

PathEnsemble tilt_ensemble(const PathEnsemble& ensemble, const TiltSpec& tilt) {
  PathEnsemble out;
  out.n = ensemble.n;
  out.d = ensemble.d;
  out.paths.reserve(ensemble.size());
  for (const auto& path : ensemble.paths) out.paths.push_back(tilt_path(path, tilt));
  return out;
}

double log_density_ratio(const Path& tilted, const TiltSpec& tilt) {
  const auto x = tilted.at(tilt.pivot);
  double dot = 0.0, norm2 = 0.0;
  for (int i = 0; i < tilted.d; ++i) {
    dot += tilt.lambda_tilde[i] * x[i];
    norm2 += tilt.lambda_tilde[i] * tilt.lambda_tilde[i];
  }
  return -(dot - 0.5 * norm2) / tilt.pivot;
}

double running_max_norm(const Path& path) {
  double top = 0.0;
  for (double v : path.positions) top = std::max(top, std::fabs(v));
  return top;
}

void write_ensemble_csv(std::ostream& out, const PathEnsemble& ensemble) {
  out << "replica,step,coordinate,value\n";
  for (std::size_t m = 0; m < ensemble.size(); ++m)
    for (int p = 1; p <= ensemble.n; ++p)
      for (int i = 0; i < ensemble.d; ++i)
        out << m << ',' << p << ',' << i << ',' << format_double(ensemble.paths[m].at(p)[i]) << '\n';
}

}  // namespace polymerlab
