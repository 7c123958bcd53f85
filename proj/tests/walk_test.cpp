#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "polymerlab/stats.hpp"
#include "polymerlab/walk.hpp"

using namespace polymerlab;

namespace {

Path make_path(std::initializer_list<double> values, int d) {
  Path p(static_cast<int>(values.size()) / d, d);
  std::copy(values.begin(), values.end(), p.positions.begin());
  return p;
}

double upper_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("endpoint variance grows linearly") {
  SUBCASE("n = 1") {
    const auto e = sample_paths(1, 100000, 1, 1);
    std::vector<double> s1;
    for (const auto& p : e.paths) s1.push_back(p.at(1)[0]);
    CHECK(std::fabs(sample_variance(s1) - 1.0) < 0.02);
  }
  SUBCASE("n = 100") {
    const auto e = sample_paths(2, 100000, 100, 1);
    std::vector<double> s;
    for (const auto& p : e.paths) s.push_back(p.at(100)[0]);
    CHECK(std::fabs(sample_variance(s) - 100.0) < 2.0);
  }
}

TEST_CASE("increments are independent standard normals per coordinate") {
  const auto e = sample_paths(3, 20000, 5, 2);
  for (int coord = 0; coord < 2; ++coord) {
    for (int step = 1; step <= 5; ++step) {
      std::vector<double> inc;
      for (const auto& p : e.paths) inc.push_back(p.at(step)[coord] - (step > 1 ? p.at(step - 1)[coord] : 0.0));
      const double n = static_cast<double>(inc.size());
      CHECK(std::fabs(mean(inc)) < 4.0 / std::sqrt(n));
      CHECK(std::fabs(sample_variance(inc) - 1.0) < 4.0 * std::sqrt(2.0 / n));
    }
  }
  std::vector<double> x, y;
  for (const auto& p : e.paths) {
    x.push_back(p.at(5)[0]);
    y.push_back(p.at(5)[1]);
  }
  const auto c = sample_covariance(x, y);
  CHECK(std::fabs(c.covariance) < 4.0 * c.std_error);
}

TEST_CASE("ensembles are deterministic and thread independent") {
  const auto a = sample_paths(9, 500, 12, 2, 1);
  const auto b = sample_paths(9, 500, 12, 2, 4);
  REQUIRE(a.size() == b.size());
  for (std::size_t m = 0; m < a.size(); ++m) CHECK(a.paths[m].positions == b.paths[m].positions);
  CHECK(a.paths[17].positions == sample_path(9, 17, 12, 2).positions);
  const auto c = sample_paths(10, 500, 12, 2);
  CHECK(a.paths[0].positions != c.paths[0].positions);
  const auto flat = a.positions_at(3);
  CHECK(flat.size() == 1000);
  CHECK(flat[2] == a.paths[1].at(3)[0]);
}

TEST_CASE("ramp tilts") {
  const Path p = make_path({1.0, 2.0, 3.0, 4.0, 5.0, 6.0}, 1);
  SUBCASE("zero drift is the identity") {
    const Path q = tilt_path(p, TiltSpec{{0.0}, 3});
    CHECK(q.positions == p.positions);
  }
  SUBCASE("the ramp reaches one at the pivot and stays there") {
    const Path q = tilt_path(p, TiltSpec{{2.5}, 6});
    CHECK(q.at(6)[0] == 6.0 + 2.5);
    const Path r = tilt_path(p, TiltSpec{{8.0}, 4});
    CHECK(r.at(2)[0] == 2.0 + 4.0);
    CHECK(r.at(4)[0] == 4.0 + 8.0);
    CHECK(r.at(6)[0] == 6.0 + 8.0);
    CHECK(p.at(2)[0] == 2.0);
  }
  SUBCASE("invalid tilts") {
    CHECK_THROWS_AS(tilt_path(p, TiltSpec{{1.0}, 7}), std::invalid_argument);
    CHECK_THROWS_AS(tilt_path(p, TiltSpec{{1.0}, 0}), std::invalid_argument);
    CHECK_THROWS_AS(tilt_path(p, TiltSpec{{1.0, 1.0}, 2}), std::invalid_argument);
  }
}

TEST_CASE("running max norm") {
  CHECK(running_max_norm(make_path({1.0, -3.0, 2.0}, 1)) == 3.0);
  CHECK(running_max_norm(make_path({1.0, -4.0}, 2)) == 4.0);
  CHECK(running_max_norm(make_path({0.0, 0.0, 0.0}, 1)) == 0.0);
  CHECK(running_max_norm(Path{}) == 0.0);
}

TEST_CASE("tilted law and the exponential martingale agree") {
  // Straight tilt lambda_tilde = n lambda, pivot n: E f(S~) = E f(S) exp(lambda S_n - n lambda^2 / 2).
  const int n = 20;
  const double lambda = 0.2;
  const double a = 3.0;
  const auto f = [&](const Path& p) { return p.at(n)[0] >= a ? 1.0 : 0.0; };
  const auto shifted = tilt_ensemble(sample_paths(21, 40000, n, 1), TiltSpec{{n * lambda}, n});
  const auto free = sample_paths(22, 40000, n, 1);
  std::vector<double> lhs, rhs;
  for (const auto& p : shifted.paths) lhs.push_back(f(p));
  for (const auto& p : free.paths)
    rhs.push_back(f(p) * std::exp(lambda * p.at(n)[0] - 0.5 * n * lambda * lambda));
  const double se = std::hypot(standard_error(lhs), standard_error(rhs));
  CHECK(std::fabs(mean(lhs) - mean(rhs)) < 4.0 * se);
  // Oracle: S~_n ~ N(n lambda, n).
  CHECK(std::fabs(mean(lhs) - upper_tail((a - n * lambda) / std::sqrt(n))) < 4.0 * standard_error(lhs));
}

TEST_CASE("density ratio reweights the tilted law back to the free walk") {
  const int n = 16;
  const TiltSpec tilt{{6.0}, 10};
  const auto tilted = tilt_ensemble(sample_paths(31, 50000, n, 1), tilt);
  std::vector<double> w;
  for (const auto& p : tilted.paths) w.push_back((p.at(n)[0] >= 5.0 ? 1.0 : 0.0) * std::exp(log_density_ratio(p, tilt)));
  CHECK(std::fabs(mean(w) - upper_tail(5.0 / 4.0)) < 4.0 * standard_error(w));

  std::vector<double> ones;
  for (const auto& p : tilted.paths) ones.push_back(std::exp(log_density_ratio(p, tilt)));
  CHECK(std::fabs(mean(ones) - 1.0) < 4.0 * standard_error(ones));

  // Closed form in terms of the untilted endpoint at the pivot.
  const auto base = sample_paths(31, 3, n, 1);
  for (int m = 0; m < 3; ++m) {
    const double s = base.paths[m].at(10)[0];
    CHECK(log_density_ratio(tilted.paths[m], tilt) == doctest::Approx(-(6.0 * s + 18.0) / 10.0));
  }
}

TEST_CASE("ensemble CSV dump") {
  const auto e = sample_paths(4, 2, 3, 2);
  std::ostringstream out;
  write_ensemble_csv(out, e);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "replica,step,coordinate,value");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2 * 3 * 2);
}
