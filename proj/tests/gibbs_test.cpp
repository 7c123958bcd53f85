#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "polymerlab/errors.hpp"
#include "polymerlab/gibbs.hpp"
#include "polymerlab/rng.hpp"
#include "polymerlab/stats.hpp"

using namespace polymerlab;

namespace {

// Deterministic field g(k, x) = f(k, x) for tests.
class FunctionEnvironment final : public Environment {
 public:
  explicit FunctionEnvironment(std::function<double(int, double)> f) : f_(std::move(f)) {}
  int dimension() const override { return 1; }
  double variance() const override { return 1.0; }
  std::vector<double> sample_slice_at(int slice, std::span<const double> positions) override {
    std::vector<double> out;
    for (double x : positions) out.push_back(f_(slice, x));
    return out;
  }

 private:
  std::function<double(int, double)> f_;
};

// Adds a constant to every value of another environment.
class ShiftedEnvironment final : public Environment {
 public:
  ShiftedEnvironment(Environment& inner, double c) : inner_(inner), c_(c) {}
  int dimension() const override { return inner_.dimension(); }
  double variance() const override { return inner_.variance(); }
  std::vector<double> sample_slice_at(int slice, std::span<const double> positions) override {
    auto v = inner_.sample_slice_at(slice, positions);
    for (auto& x : v) x += c_;
    return v;
  }

 private:
  Environment& inner_;
  double c_;
};

EnvironmentConfig grid(std::uint64_t seed, double L = 30.0) {
  EnvironmentConfig c;
  c.seed = seed;
  c.backend = Backend::grid;
  c.grid_spacing = 0.1;
  c.grid_halfwidth = L;
  return c;
}

}  // namespace

TEST_CASE("hamiltonian sums one lookup per step") {
  const auto e = sample_paths(1, 50, 3, 1);
  SUBCASE("n = 1") {
    const auto one = sample_paths(1, 5, 1, 1);
    EnvironmentHandle env(grid(4));
    for (const auto& p : one.paths) CHECK(hamiltonian(env, p) == env.sample_slice_at(1, p.at(1))[0]);
  }
  SUBCASE("zero field") {
    FunctionEnvironment zero([](int, double) { return 0.0; });
    for (const auto& p : e.paths) CHECK(hamiltonian(zero, p) == 0.0);
  }
  SUBCASE("installed grid slices") {
    EnvironmentConfig c = grid(5, 10.0);
    EnvironmentHandle env(c);
    const std::size_t nodes = env.grid_size();
    std::vector<double> s1(nodes), s2(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
      s1[i] = 0.001 * static_cast<double>(i);
      s2[i] = std::sin(static_cast<double>(i));
    }
    env.install_grid_slice(1, s1);
    env.install_grid_slice(2, s2);
    const auto two = sample_paths(2, 40, 2, 1);
    for (const auto& p : two.paths) {
      // Independent lookup: node index round((x + L) / h).
      const auto idx = [](double x) { return static_cast<std::size_t>(std::llround((x + 10.0) / 0.1)); };
      const double expected = s1[idx(p.at(1)[0])] + s2[idx(p.at(2)[0])];
      CHECK(hamiltonian(env, p) == doctest::Approx(expected).epsilon(1e-15));
    }
    const auto batched = hamiltonians(env, two);
    for (std::size_t m = 0; m < two.size(); ++m) CHECK(batched[m] == hamiltonian(env, two.paths[m]));
  }
}

TEST_CASE("partition function estimator") {
  SUBCASE("beta = 0 is exactly zero") {
    EnvironmentHandle env(grid(6));
    const auto e = sample_paths(3, 100, 10, 1);
    const auto z = log_partition(env, e, 0.0);
    CHECK(z.value == 0.0);
    CHECK(z.std_error == 0.0);
  }
  SUBCASE("single path") {
    const std::vector<double> h{1.7};
    CHECK(log_partition(h, 0.5).value == 0.85);
  }
  SUBCASE("two paths") {
    const std::vector<double> h{0.0, std::log(2.0)};
    CHECK(log_partition(h, 1.0).value == doctest::Approx(0.4054651081081644).epsilon(1e-14));
  }
  SUBCASE("huge energies do not overflow") {
    const std::vector<double> h{5000.0, 5000.0 + std::log(3.0)};
    CHECK(log_partition(h, 1.0).value == doctest::Approx(5000.0 + std::log(2.0)).epsilon(1e-14));
  }
  SUBCASE("all weights -inf is an error") {
    const double inf = std::numeric_limits<double>::infinity();
    const std::vector<double> terms{-inf, -inf};
    CHECK_THROWS(log_mean_exp(terms));
  }
}

TEST_CASE("log partition shifts exactly with a constant field offset") {
  EnvironmentHandle env(grid(7));
  const auto e = sample_paths(4, 300, 12, 1);
  ShiftedEnvironment shifted(env, 0.37);
  const double beta = 0.8;
  const double a = log_partition(env, e, beta).value;
  const double b = log_partition(shifted, e, beta).value;
  CHECK(b - a == doctest::Approx(beta * 12 * 0.37).epsilon(1e-12));
}

TEST_CASE("Gibbs expectations") {
  EnvironmentHandle env(grid(8));
  const auto e = sample_paths(5, 2000, 10, 1);
  SUBCASE("constant one is exactly one") {
    for (double beta : {0.0, 0.5, 2.0, 5.0}) {
      const auto one = gibbs_expect(env, e, beta, [](const Path&) { return 1.0; });
      CHECK(one.value == 1.0);
    }
  }
  SUBCASE("beta = 0 is the sample mean") {
    std::vector<double> f;
    for (const auto& p : e.paths) f.push_back(p.at(10)[0] * p.at(10)[0]);
    const auto est = gibbs_expect(env, e, 0.0, [](const Path& p) { return p.at(10)[0] * p.at(10)[0]; });
    CHECK(est.value == doctest::Approx(mean(f)).epsilon(1e-13));
    CHECK(est.ess == doctest::Approx(2000.0));
    CHECK_FALSE(est.degenerate());
  }
  SUBCASE("nested events are ordered on shared weights") {
    const GibbsWeights w = gibbs_weights(env, e, 1.5);
    double previous = 0.0;
    for (double a : {3.0, 2.0, 1.0, 0.0, -1.0, -5.0}) {
      const auto est = w.expect(e, [a](const Path& p) { return p.at(10)[0] >= a ? 1.0 : 0.0; }, true);
      CHECK(est.value >= previous);
      CHECK(est.value <= 1.0);
      previous = est.value;
    }
    CHECK(w.log_partition().value == log_partition(env, e, 1.5).value);
  }
  SUBCASE("indicator values are clamped") {
    const std::vector<double> lw{0.0, 0.0};
    const std::vector<double> v{1.0 + 1e-15, 1.0};
    CHECK(self_normalized(lw, v, true).value == 1.0);
  }
}

TEST_CASE("one-step Gibbs probability against a quadrature oracle") {
  // g(1, x) takes three values on (-inf, -0.5), [-0.5, 0.5], (0.5, inf).
  const double a = -0.7, b = 0.4, c = 1.1, beta = 1.3;
  FunctionEnvironment env([&](int, double x) { return x < -0.5 ? a : (x <= 0.5 ? b : c); });
  // Trapezoid quadrature of phi(x) exp(beta g(x)) on [-12, 12].
  double z = 0.0, num = 0.0;
  const double h = 1e-4;
  for (double x = -12.0; x <= 12.0 + 1e-12; x += h) {
    const double g = x < -0.5 ? a : (x <= 0.5 ? b : c);
    const double w = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI) * std::exp(beta * g) * h;
    z += w;
    if (x > 0.0) num += w;
  }
  const double oracle = num / z;
  const auto e = sample_paths(12, 50000, 1, 1);
  const auto est = gibbs_expect(env, e, beta, [](const Path& p) { return p.at(1)[0] > 0.0 ? 1.0 : 0.0; }, true);
  CHECK(std::fabs(est.value - oracle) < 4.0 * est.std_error);
  CHECK(std::fabs(log_partition(env, e, beta).value - std::log(z)) < 4.0 * log_partition(env, e, beta).std_error);
}

TEST_CASE("quenched averages") {
  const auto seeds = replica_seeds(3, 10);
  CHECK(seeds.size() == 10);
  SUBCASE("constant estimator") {
    const auto q = quenched_average(seeds, [](std::size_t, std::uint64_t) { return 2.5; });
    CHECK(q.mean == 2.5);
    CHECK(q.std_error == 0.0);
    CHECK(q.values.size() == 10);
  }
  SUBCASE("log <1> at beta = 0") {
    const auto q = quenched_average(seeds, [](std::size_t, std::uint64_t s) {
      EnvironmentHandle env(grid(s));
      const auto e = sample_paths(s, 50, 5, 1);
      return std::log(gibbs_expect(env, e, 0.0, [](const Path&) { return 1.0; }).value);
    });
    CHECK(q.mean == 0.0);
    CHECK(q.std_error == 0.0);
  }
  SUBCASE("failures name the replica") {
    try {
      quenched_average(
          seeds,
          [](std::size_t r, std::uint64_t) -> double {
            if (r == 6) throw std::runtime_error("boom");
            return 0.0;
          },
          3);
      FAIL("expected ReplicaError");
    } catch (const ReplicaError& e) {
      CHECK(e.replica() == 6);
    }
  }
  SUBCASE("needs two replicas") {
    const std::vector<std::uint64_t> one{1};
    CHECK_THROWS_AS(quenched_average(one, [](std::size_t, std::uint64_t) { return 0.0; }), std::invalid_argument);
  }
  SUBCASE("threads do not change the result") {
    auto est = [](std::size_t, std::uint64_t s) {
      EnvironmentHandle env(grid(s));
      return log_partition(env, sample_paths(s, 200, 8, 1), 0.7).value;
    };
    const auto a = quenched_average(seeds, est, 1);
    const auto b = quenched_average(seeds, est, 4);
    CHECK(a.values == b.values);
  }
}

TEST_CASE("annealed bound on the quenched free energy") {
  // E log Z <= log E Z = n beta^2 sigma^2 / 2.
  const int n = 20;
  const double beta = 0.5;
  const auto seeds = replica_seeds(17, 200);
  const auto q = quenched_average(seeds, [&](std::size_t, std::uint64_t s) {
    EnvironmentHandle env(grid(s, required_reach(n)));
    return log_partition(env, sample_paths(derive_seed(s, StreamTag::replica_paths), 1000, n, 1), beta).value;
  });
  CHECK(q.mean <= 0.5 * n * beta * beta + 4.0 * q.std_error);
}

TEST_CASE("annealed identity for short polymers") {
  // E over (environment, path) of exp(beta H - n beta^2 sigma^2 / 2) is one.
  for (int n : {1, 3, 5}) {
    const double beta = 0.6;
    std::vector<double> per_env;
    for (std::uint64_t r = 0; r < 2000; ++r) {
      const std::uint64_t s = derive_seed(91, StreamTag::replica_env, {r});
      EnvironmentHandle env(grid(s, 15.0));
      const auto e = sample_paths(derive_seed(s, StreamTag::replica_paths), 20, n, 1);
      double acc = 0.0;
      for (double h : hamiltonians(env, e)) acc += std::exp(beta * h - 0.5 * n * beta * beta);
      per_env.push_back(acc / 20.0);
    }
    CHECK(std::fabs(mean(per_env) - 1.0) < 4.0 * standard_error(per_env));
  }
}

TEST_CASE("rare-event weights by tilting") {
  const int n = 16;
  const double level = 12.0;  // three standard deviations of S_n
  const double oracle = std::log(0.5 * std::erfc(level / std::sqrt(2.0 * n)));
  FunctionEnvironment zero([](int, double) { return 0.0; });
  const auto base = sample_paths(44, 4000, n, 1);
  const auto event = [&](const Path& p) { return p.at(n)[0] >= level; };
  const auto est = log_event_weight(zero, base, TiltSpec{{level}, n}, 0.0, event);
  CHECK_FALSE(est.smoothed);
  CHECK(std::fabs(est.value - oracle) < 4.0 * est.std_error);

  // No tilt: the event is never hit, so add-one smoothing applies.
  const auto none = log_event_weight(zero, base, TiltSpec{{0.0}, n}, 0.0,
                                     [](const Path& p) { return p.at(16)[0] >= 1e6; });
  CHECK(none.smoothed);
  CHECK(std::isfinite(none.value));
  CHECK(none.value <= -std::log(4001.0) + 1e-12);
}

TEST_CASE("parameter validation and grid reach") {
  GibbsParams p;
  p.beta = -1.0;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
  p.beta = 0.0;
  CHECK_NOTHROW(validate(p));
  p.paths = 0;
  CHECK_THROWS_AS(validate(p), std::invalid_argument);
  CHECK(required_reach(16) == doctest::Approx(33.0));
  CHECK(required_reach(16, -4.0) == doctest::Approx(37.0));
  PolymerSetup s;
  const auto c = s.environment(1, 20.2);
  CHECK(c.grid_halfwidth >= 20.2);
}
