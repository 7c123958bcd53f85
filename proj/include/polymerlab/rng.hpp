#pragma once

#include <cstdint>
#include <initializer_list>

namespace polymerlab {

// Stream tags keep the independent random streams of different subsystems
// apart even when they share a user seed.
enum class StreamTag : std::uint64_t {
  env_slice = 1,
  walk = 2,
  replica_env = 3,
  replica_paths = 4,
  replica_tilted = 5,
  quadrature_mc = 6,
  case_generator = 7,
  probe_outer = 8,
  probe_inner = 9,
  bootstrap = 10,
  selftest = 11,
};

std::uint64_t splitmix64(std::uint64_t& state);

// Counter-based splitting: hashes (seed, tag, counters...) into a fresh
// 64-bit seed. Streams derived from distinct tuples are treated as independent.
std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag,
                          std::initializer_list<std::uint64_t> counters = {});

// xoshiro256** with SplitMix64 seeding. Standard normals use the AS241
// inverse-CDF on a 53-bit uniform, so every variate is a pure function of
// the stream position and results are bit-reproducible across platforms
// with IEEE doubles.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> counters = {});

  std::uint64_t next();
  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t s_[4];
};

// Inverse of the standard normal CDF (Wichura AS241, ~1e-16 relative).
double inverse_normal_cdf(double p);
double normal_cdf(double x);
// log(1 - Phi(x)), accurate in the far upper tail.
double log_normal_upper_tail(double x);

}  // namespace polymerlab
