#include <doctest.h>

#include <cmath>

#include "eqt/experiments.hpp"
#include "eqt/signature.hpp"
#include "oracles.hpp"

using namespace eqt;

namespace {

Tensor vec(std::vector<double> c) {
  const int d = static_cast<int>(c.size());
  return Tensor(d, 1, +1, std::move(c));
}

// Nested cumulative Riemann quadrature of the iterated integrals
// S_k = int I_{k-1}(s) (x) x'(s) ds on a polynomial path: an independent
// route to the signature using derivatives, not segment exponentials.
std::vector<Tensor> signature_quadrature(const Eigen::MatrixXd& coeffs, int M, int steps) {
  const int d = static_cast<int>(coeffs.rows());
  std::vector<Tensor> levels;
  for (int k = 1; k <= M; ++k) levels.emplace_back(d, k, +1);
  const double h = 2.0 / steps;
  for (int s = 0; s < steps; ++s) {
    const double u = -1.0 + (s + 0.5) * h; // midpoint rule
    const Eigen::VectorXd dx = poly_deriv(coeffs, u) * h;
    std::vector<double> c(dx.data(), dx.data() + d);
    const Tensor step(d, 1, +1, std::move(c));
    for (int k = M; k >= 2; --k)
      levels[static_cast<std::size_t>(k - 1)] =
          add(levels[static_cast<std::size_t>(k - 1)], outer(levels[static_cast<std::size_t>(k - 2)], step));
    levels[0] = add(levels[0], step);
  }
  return levels;
}

} // namespace

TEST_SUITE("signature") {

TEST_CASE("constant path: all levels vanish") {
  const std::vector<Tensor> pts(5, vec({0.3, -0.2, 0.5}));
  for (const auto& s : signature_oracle(pts, 3)) CHECK(s.norm() == 0.0);
}

TEST_CASE("linear path: S_k = Delta^k / k! to 1e-12") {
  Rng rng(1);
  const int M = 4;
  std::vector<double> x0{rng.gaussian(), rng.gaussian(), rng.gaussian()};
  std::vector<double> delta{rng.gaussian(), rng.gaussian(), rng.gaussian()};
  // many collinear points: piecewise-linear signature must equal the
  // one-segment closed form regardless of the subdivision
  std::vector<Tensor> pts;
  for (int j = 0; j <= 7; ++j) {
    const double t = j / 7.0;
    pts.push_back(vec({x0[0] + t * delta[0], x0[1] + t * delta[1], x0[2] + t * delta[2]}));
  }
  const auto sig = signature_oracle(pts, M);
  const Tensor dt = vec({delta[0], delta[1], delta[2]});
  Tensor power = dt;
  double factorial = 1.0;
  for (int k = 1; k <= M; ++k) {
    factorial *= k;
    CHECK(max_abs_diff(sig[static_cast<std::size_t>(k - 1)], scale(1.0 / factorial, power)) < 1e-12);
    if (k < M) power = outer(power, dt);
  }

  // two points: single segment closed form
  const auto two = signature_oracle({pts.front(), pts.back()}, M);
  for (int k = 1; k <= M; ++k)
    CHECK(max_abs_diff(two[static_cast<std::size_t>(k - 1)], sig[static_cast<std::size_t>(k - 1)]) < 1e-12);
}

TEST_CASE("Chen concatenation identity to 1e-12") {
  Rng rng(2);
  const int M = 3;
  std::vector<Tensor> pts;
  for (int j = 0; j < 9; ++j)
    pts.push_back(vec({rng.gaussian(), rng.gaussian(), rng.gaussian()}));
  const auto whole = signature_oracle(pts, M);
  for (std::size_t split : {std::size_t{2}, std::size_t{4}, std::size_t{6}}) {
    const std::vector<Tensor> first(pts.begin(), pts.begin() + static_cast<long>(split) + 1);
    const std::vector<Tensor> second(pts.begin() + static_cast<long>(split), pts.end());
    const auto glued = chen_product(signature_oracle(first, M), signature_oracle(second, M));
    for (int k = 0; k < M; ++k)
      CHECK(max_abs_diff(whole[static_cast<std::size_t>(k)], glued[static_cast<std::size_t>(k)]) < 1e-12);
  }
}

TEST_CASE("quadrature agreement on random degree-3 paths (relative 1e-3)") {
  Rng rng(3);
  const int d = 3, M = 3;
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::MatrixXd coeffs(d, 4);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < 4; ++j) coeffs(i, j) = rng.uniform(-1.0, 1.0);

    std::vector<Tensor> pts;
    const int segments = 1000;
    for (int s = 0; s <= segments; ++s) {
      const double u = -1.0 + 2.0 * s / segments;
      const Eigen::VectorXd x = poly_eval(coeffs, u);
      pts.push_back(vec({x(0), x(1), x(2)}));
    }
    const auto sig = signature_oracle(pts, M);
    const auto quad = signature_quadrature(coeffs, M, 10000);
    for (int k = 0; k < M; ++k) {
      const double rel = max_abs_diff(sig[static_cast<std::size_t>(k)], quad[static_cast<std::size_t>(k)]) /
                         (1e-12 + quad[static_cast<std::size_t>(k)].max_abs());
      CHECK(rel < 1e-3);
    }
  }
}

TEST_CASE("discrete baseline: exact level 1; 3-point level 2; halving convergence") {
  Rng rng(4);
  // level 1 is the total increment, exactly
  std::vector<Tensor> pts{vec({0, 0}), vec({1, 0.5}), vec({1.5, -1})};
  const auto disc = discrete_signature_baseline(pts, 2);
  CHECK(max_abs_diff(disc[0], vec({1.5, -1})) < 1e-15);

  // 3 points, level 2: Delta_1 (x) Delta_2 only
  const Tensor d1 = vec({1, 0.5}), d2 = vec({0.5, -1.5});
  CHECK(max_abs_diff(disc[1], outer(d1, d2)) < 1e-15);

  // error vs the true signature roughly halves when n doubles
  Eigen::MatrixXd coeffs(2, 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) coeffs(i, j) = rng.uniform(-1.0, 1.0);
  const auto truth = [&](int n) {
    std::vector<Tensor> p;
    for (int s = 0; s <= n; ++s) {
      const double u = -1.0 + 2.0 * s / n;
      const Eigen::VectorXd x = poly_eval(coeffs, u);
      p.push_back(vec({x(0), x(1)}));
    }
    return p;
  };
  const auto exact = signature_oracle(truth(2000), 2);
  const auto err = [&](int n) {
    const auto approx = discrete_signature_baseline(truth(n), 2);
    return max_abs_diff(approx[1], exact[1]);
  };
  const double e1 = err(16), e2 = err(32), e3 = err(64);
  CHECK(e2 < 0.7 * e1);
  CHECK(e3 < 0.7 * e2);
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(signature_oracle({vec({1, 2})}, 2), std::invalid_argument);
  CHECK_THROWS_AS(signature_oracle({vec({1, 2}), vec({2, 3})}, 0), std::invalid_argument);
}

TEST_CASE("gen_poly_path: points on the polynomial, truth matches config") {
  Rng rng(5);
  const PathSample s = gen_poly_path(rng, 3, 5, 10, 3);
  CHECK(s.points.size() == 10);
  CHECK(s.truth.size() == 3);
  // endpoints evaluate the stored polynomial at u = -1 and u = 1
  const Eigen::VectorXd lo = poly_eval(s.coeffs, -1.0), hi = poly_eval(s.coeffs, 1.0);
  for (int i = 0; i < 3; ++i) {
    CHECK(s.points.front().at_offset(static_cast<std::size_t>(i)) == doctest::Approx(lo(i)));
    CHECK(s.points.back().at_offset(static_cast<std::size_t>(i)) == doctest::Approx(hi(i)));
  }
  // level-1 truth is the total increment (signature level 1 is exact)
  const Eigen::VectorXd inc = hi - lo;
  for (int i = 0; i < 3; ++i)
    CHECK(s.truth[0].at_offset(static_cast<std::size_t>(i)) == doctest::Approx(inc(i)).epsilon(1e-10));
}

TEST_CASE("signature metric: zero for perfect prediction, positive otherwise") {
  Rng rng(6);
  const PathSample s = gen_poly_path(rng, 3, 3, 6, 2);
  CHECK(signature_metric(s.truth, s.truth, 3) == 0.0);
  auto off = s.truth;
  off[0] = add(off[0], vec({0.1, 0, 0}));
  CHECK(signature_metric(s.truth, off, 3) > 0.0);
}

} // TEST_SUITE
