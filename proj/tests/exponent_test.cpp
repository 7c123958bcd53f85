#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "polymerlab/environment.hpp"
#include "polymerlab/exponent.hpp"
#include "polymerlab/rng.hpp"

using namespace polymerlab;

namespace {

// Brute force over even multiples in a window around x.
std::vector<std::vector<int>> containing_balls(std::span<const double> x, double r, bool closed) {
  std::vector<std::vector<int>> found;
  const int d = static_cast<int>(x.size());
  std::vector<int> lo(d), j(d);
  for (int i = 0; i < d; ++i) lo[i] = 2 * static_cast<int>(std::floor(x[i] / (2.0 * r))) - 4;
  const int span = 5;  // candidates lo, lo+2, ..., lo+8
  int total = 1;
  for (int i = 0; i < d; ++i) total *= span;
  for (int code = 0; code < total; ++code) {
    int c = code;
    bool inside = true;
    for (int i = 0; i < d; ++i) {
      j[i] = lo[i] + 2 * (c % span);
      c /= span;
      const double off = x[i] - j[i] * r;
      inside = inside && (closed ? (-r <= off && off <= r) : (-r <= off && off < r));
    }
    if (inside) found.push_back(j);
  }
  return found;
}

PolymerSetup grid_setup() { return PolymerSetup{}; }

}  // namespace

TEST_CASE("ball index examples") {
  const int n = 16;
  const double alpha = 0.5;
  const double r = 4.0;
  const std::vector<double> a{2.0 * r}, b{3.0 * r}, c{0.7 * r}, e{-r}, f{r};
  CHECK(ball_index_of(a, n, alpha).j == std::vector<int>{2});
  CHECK(ball_index_of(b, n, alpha).j == std::vector<int>{4});
  CHECK(ball_index_of(c, n, alpha).central());
  CHECK(ball_index_of(e, n, alpha).central());
  CHECK(ball_index_of(f, n, alpha).j == std::vector<int>{2});
  const auto g = ball_index_of(std::vector<double>{-9.0, 5.0}, n, alpha);
  CHECK(g.j == std::vector<int>{-2, 2});
  CHECK(g.center() == std::vector<double>{-8.0, 8.0});
  CHECK(g.radius() == 4.0);
  CHECK_THROWS_AS(ball_index_of(a, 0, alpha), std::invalid_argument);
}

TEST_CASE("half-open balls partition space") {
  for (int d : {1, 2}) {
    Rng rng(100 + d);
    const int n = 9;
    const double alpha = 0.8;
    const double r = std::pow(9.0, alpha);
    for (int t = 0; t < 100000; ++t) {
      std::vector<double> x(d);
      for (auto& v : x) v = 6.0 * r * rng.normal();
      const auto b = ball_index_of(x, n, alpha);
      const auto all = containing_balls(x, r, false);
      REQUIRE(all.size() == 1);
      REQUIRE(all[0] == b.j);
      for (int i = 0; i < d; ++i) REQUIRE(std::fabs(x[i] - b.center()[i]) <= r);
    }
  }
}

TEST_CASE("closed ball multiplicity matches brute force") {
  const double r = 2.0;
  Rng rng(7);
  std::vector<std::vector<double>> points{{0.0}, {2.0}, {-2.0}, {6.0}, {3.0}, {2.0, 2.0}, {2.0, 6.0}, {0.0, 2.0},
                                          {1.0, 1.0}, {-6.0, 10.0}};
  for (int t = 0; t < 2000; ++t) {
    const int d = 1 + t % 2;
    std::vector<double> x(d);
    // Mix lattice faces and generic points.
    for (auto& v : x) v = t % 3 == 0 ? 2.0 * static_cast<double>(static_cast<int>(rng.below(11)) - 5) : 8.0 * rng.normal();
    points.push_back(x);
  }
  for (const auto& x : points) {
    int expected = 0;
    for (const auto& j : containing_balls(x, r, true)) {
      bool zero = true;
      for (int v : j) zero = zero && v == 0;
      expected += zero ? 0 : 1;
    }
    CHECK(closed_ball_multiplicity(x, r) == expected);
  }
  CHECK(closed_ball_multiplicity(std::vector<double>{2.0, 2.0}, r) == 3);
}

TEST_CASE("union bound over non-central balls dominates the tail") {
  PolymerSetup setup = grid_setup();
  for (std::uint64_t s = 1; s <= 4; ++s) {
    const int n = 16;
    EnvironmentHandle env(setup.environment(s, required_reach(n)));
    const auto ensemble = sample_paths(derive_seed(s, StreamTag::replica_paths), 500, n, 1);
    const auto weights = gibbs_weights(env, ensemble, 0.7);
    for (double alpha : {0.5, 0.6, 0.75}) {
      const auto u = union_bound_check(weights, ensemble, alpha);
      CHECK(u.tail_mass > 0.0);
      CHECK(u.tail_mass <= u.ball_sum);
    }
  }
}

TEST_CASE("scan events") {
  CHECK(parse_scan_event("endpoint") == ScanEvent::endpoint);
  CHECK(parse_scan_event("running_max") == ScanEvent::running_max);
  CHECK(parse_scan_event("running-max") == ScanEvent::running_max);
  CHECK(to_string(ScanEvent::running_max) == "running_max");
  CHECK_THROWS_AS(parse_scan_event("max"), std::invalid_argument);
}

TEST_CASE("free-walk scan against the normal law") {
  GibbsParams p;
  p.beta = 0.0;
  p.paths = 2000;
  const std::vector<double> alphas{0.5, 0.6, 0.75, 1.0};
  const std::vector<int> ns{16};
  const std::vector<ScanEvent> events{ScanEvent::endpoint, ScanEvent::running_max};
  const auto seeds = replica_seeds(3, 10);
  const auto scan = xi_scan(alphas, ns, p, seeds, grid_setup(), events);
  REQUIRE(scan.rows.size() == 8);
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    const auto& end = scan.rows[a];
    const auto& run = scan.rows[alphas.size() + a];
    CHECK(end.event == ScanEvent::endpoint);
    CHECK(run.event == ScanEvent::running_max);
    // P(|S_n| <= n^alpha) with S_n ~ N(0, n).
    const double oracle = std::erf(std::pow(16.0, alphas[a]) / std::sqrt(2.0 * 16.0));
    const double se = std::max(end.mass_stderr, std::sqrt(oracle * (1.0 - oracle) / (10.0 * p.paths)));
    CHECK(std::fabs(end.mass_mean - oracle) < 4.0 * se);
    CHECK(run.mass_mean <= end.mass_mean);
    if (a > 0) {
      CHECK(end.mass_mean >= scan.rows[a - 1].mass_mean);
      CHECK(run.mass_mean >= scan.rows[alphas.size() + a - 1].mass_mean);
    }
  }
  CHECK(scan.rows[2].mass_mean == doctest::Approx(0.9545).epsilon(0.01));
  CHECK(scan.rows[3].mass_mean >= 0.999);

  // Thread count does not change the scan.
  PolymerSetup threaded = grid_setup();
  threaded.threads = 4;
  const auto again = xi_scan(alphas, ns, p, seeds, threaded, events);
  for (std::size_t i = 0; i < scan.rows.size(); ++i) CHECK(again.rows[i].mass_mean == scan.rows[i].mass_mean);
}

TEST_CASE("disordered scan is monotone in alpha") {
  GibbsParams p;
  p.beta = 1.0;
  p.paths = 300;
  const std::vector<double> alphas{0.5, 0.7, 0.9};
  const std::vector<int> ns{8, 16};
  const std::vector<ScanEvent> events{ScanEvent::running_max};
  const auto scan = xi_scan(alphas, ns, p, replica_seeds(4, 6), grid_setup(), events);
  REQUIRE(scan.rows.size() == 6);
  for (std::size_t i = 0; i < scan.rows.size(); ++i) {
    CHECK(scan.rows[i].mass_mean >= 0.0);
    CHECK(scan.rows[i].mass_mean <= 1.0);
    if (i % 3 != 0) CHECK(scan.rows[i].mass_mean >= scan.rows[i - 1].mass_mean);
  }
  const std::vector<double> none;
  CHECK_THROWS_AS(xi_scan(none, ns, p, replica_seeds(4, 6), grid_setup(), events), std::invalid_argument);
}

TEST_CASE("spread fit on a synthetic power law") {
  const std::vector<int> ns{10, 20, 40, 80, 160};
  Rng rng(12);
  std::vector<std::vector<double>> spreads;
  for (int n : ns) {
    std::vector<double> s;
    for (int e = 0; e < 200; ++e) s.push_back(1.7 * std::pow(n, 0.65) * std::exp(0.05 * rng.normal()));
    spreads.push_back(s);
  }
  const auto fit = fit_spreads(ns, spreads, 300, 1);
  CHECK(fit.xi_hat == doctest::Approx(0.65).epsilon(0.02));
  CHECK(fit.ci_low <= fit.xi_hat);
  CHECK(fit.ci_high >= fit.xi_hat);
  CHECK(fit.ci_low > 0.6);
  CHECK(fit.ci_high < 0.7);
  const auto again = fit_spreads(ns, spreads, 300, 1);
  CHECK(again.ci_low == fit.ci_low);

  const std::vector<std::vector<double>> zeros(ns.size(), std::vector<double>(5, 0.0));
  CHECK_THROWS_AS(fit_spreads(ns, zeros, 10, 1), std::invalid_argument);
}

TEST_CASE("fluctuation fit of the free walk") {
  GibbsParams p;
  p.beta = 0.0;
  p.paths = 1000;
  const std::vector<int> ns{8, 16, 32, 64};
  const auto fit = fluctuation_fit(ns, p, replica_seeds(5, 10), grid_setup(), 200, 3);
  CHECK_FALSE(fit.informational);
  CHECK(fit.xi_hat > 0.42);
  CHECK(fit.xi_hat < 0.58);
  CHECK(fit.median_spread.size() == 4);
  for (std::size_t i = 1; i < 4; ++i) CHECK(fit.median_spread[i] > fit.median_spread[i - 1]);

  p.beta = 0.5;
  p.paths = 100;
  const std::vector<int> small{4, 6, 8, 10};
  CHECK(fluctuation_fit(small, p, replica_seeds(5, 3), grid_setup(), 20, 3).informational);

  const std::vector<int> repeated{8, 8, 16, 32};
  CHECK_THROWS_AS(fluctuation_fit(repeated, p, replica_seeds(5, 3), grid_setup()), std::invalid_argument);
  const std::vector<int> three{8, 16, 32};
  CHECK_THROWS_AS(fluctuation_fit(three, p, replica_seeds(5, 3), grid_setup()), std::invalid_argument);
}
