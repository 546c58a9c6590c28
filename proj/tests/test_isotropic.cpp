#include <doctest.h>

#include <set>

#include "eqt/groups.hpp"
#include "eqt/isotropic.hpp"
#include "oracles.hpp"

using namespace eqt;

namespace {

long double count_Gk(int k) { // k!/((k/2)! 2^(k/2))
  long double r = 1.0L;
  for (int i = 1; i <= k; ++i) r *= i;
  for (int i = 1; i <= k / 2; ++i) r /= i;
  for (int i = 0; i < k / 2; ++i) r /= 2.0L;
  return r;
}

long double count_Hk(int k, int d) { // k!/(((k-d)/2)! 2^((k-d)/2) d!)
  long double r = 1.0L;
  for (int i = 1; i <= k; ++i) r *= i;
  for (int i = 1; i <= (k - d) / 2; ++i) r /= i;
  for (int i = 0; i < (k - d) / 2; ++i) r /= 2.0L;
  for (int i = 1; i <= d; ++i) r /= i;
  return r;
}

} // namespace

TEST_SUITE("isotropic") {

TEST_CASE("G_k counts and the canonical G_4 listing") {
  CHECK(enumerate_Gk(0).size() == 1);
  CHECK(enumerate_Gk(2).size() == 1);
  CHECK(enumerate_Gk(4).size() == 3);
  CHECK(enumerate_Gk(6).size() == 15);
  CHECK(enumerate_Gk(8).size() == 105);
  for (int k : {2, 4, 6, 8}) CHECK(enumerate_Gk(k).size() == static_cast<std::size_t>(count_Gk(k)));
  CHECK_THROWS_AS(enumerate_Gk(3), std::invalid_argument);

  const auto g4 = enumerate_Gk(4);
  CHECK(perm_to_string(g4[0]) == "(1,2,3,4)");
  CHECK(perm_to_string(g4[1]) == "(1,3,2,4)");
  CHECK(perm_to_string(g4[2]) == "(1,3,4,2)");

  // all permutations distinct
  std::set<Perm> uniq(g4.begin(), g4.end());
  CHECK(uniq.size() == g4.size());
}

TEST_CASE("H_k counts") {
  CHECK(enumerate_Hk(3, 3).size() == 1);  // epsilon itself
  CHECK(enumerate_Hk(2, 2).size() == 1);
  CHECK(enumerate_Hk(4, 3).empty());      // k - d odd
  CHECK(enumerate_Hk(2, 3).empty());      // k < d
  for (int d : {2, 3}) {
    const int k = d + 2;
    CHECK(enumerate_Hk(k, d).size() == static_cast<std::size_t>((d + 1) * (d + 2) / 2));
    CHECK(enumerate_Hk(k, d).size() == static_cast<std::size_t>(count_Hk(k, d)));
  }
  CHECK(enumerate_Hk(6, 2).size() == static_cast<std::size_t>(count_Hk(6, 2)));
}

TEST_CASE("basis contents for small cases") {
  const IsotropicBasis b2 = isotropic_basis(2, +1, Metric::euclidean(3));
  REQUIRE(b2.size() == 1);
  CHECK(max_abs_diff(b2.elements[0].value, kronecker_delta(3)) == 0.0);

  CHECK(isotropic_basis(3, +1, Metric::euclidean(3)).size() == 0); // odd order vanishes
  CHECK(isotropic_basis(0, +1, Metric::euclidean(3)).size() == 1); // the scalar 1

  const IsotropicBasis b4 = isotropic_basis(4, +1, Metric::euclidean(3));
  CHECK(b4.size() == 3);
  // pairwise linear independence via the rank filter with no symmetry
  CHECK(independent_subset(b4).size() == 3);

  // parity -1: epsilon branch
  const IsotropicBasis h3 = isotropic_basis(3, -1, Metric::euclidean(3));
  REQUIRE(h3.size() == 1);
  CHECK(max_abs_diff(h3.elements[0].value, levi_civita(3)) == 0.0);
  CHECK(isotropic_basis(4, -1, Metric::euclidean(3)).size() == 0);
  CHECK(isotropic_basis(5, -1, Metric::euclidean(3)).size() ==
        static_cast<std::size_t>(count_Hk(5, 3)));
  CHECK_THROWS_AS(isotropic_basis(2, -1, Metric::minkowski(1, 4)), std::invalid_argument);
}

TEST_CASE("every basis element is invariant under 64 random group elements") {
  Rng rng(101);
  const auto check_invariance = [&](const IsotropicBasis& basis, auto sampler, double tol) {
    for (const auto& el : basis.elements) {
      double worst = 0.0;
      for (int t = 0; t < 64; ++t) {
        const GroupElement g = sampler();
        worst = std::max(worst, max_abs_diff(group_act(g, el.value), el.value));
      }
      CHECK(worst < tol);
    }
  };

  check_invariance(isotropic_basis(4, +1, Metric::euclidean(3)),
                   [&] { return sample_orthogonal(3, rng); }, 1e-9);
  check_invariance(isotropic_basis(3, -1, Metric::euclidean(3)),
                   [&] { return sample_orthogonal(3, rng); }, 1e-9);
  check_invariance(isotropic_basis(5, -1, Metric::euclidean(3)),
                   [&] { return sample_orthogonal(3, rng); }, 1e-9);
  check_invariance(isotropic_basis(4, +1, Metric::minkowski(1, 4)),
                   [&] { return sample_lorentz(rng); }, 1e-7);
  check_invariance(isotropic_basis(4, +1, Metric::symplectic(4)),
                   [&] { return sample_symplectic(4, rng); }, 1e-7);
}

TEST_CASE("brute-force invariant dimension agrees with counts where d >= k/2") {
  Rng rng(103);
  const auto sample_matrix = [](int d, Rng& r) { return sample_orthogonal(d, r).matrix(); };

  // (k, d) -> expected dimension = |G_k| whenever d >= k/2
  struct Case { int k, d, expect; };
  const Case cases[] = {
      {0, 2, 1}, {1, 2, 0}, {2, 2, 1}, {3, 2, 0}, {4, 2, 3},
      {1, 3, 0}, {2, 3, 1}, {3, 3, 0}, {4, 3, 3}, {6, 3, 15},
  };
  for (const auto& c : cases) {
    if (c.k == 0) {
      CHECK(1 == c.expect); // order-0: every scalar is invariant
      continue;
    }
    const int got = oracles::invariant_space_dim(c.d, c.k, 200, rng, sample_matrix);
    CHECK_MESSAGE(got == c.expect, "k=", c.k, " d=", c.d);
  }
}

TEST_CASE("(k=6, d=2): matchings are rank-deficient, invariant dim is 10") {
  // Below d = k/2 the 15 delta-products span less than their count; the
  // enumeration still yields 15 representatives, the invariant space has
  // dimension 10, and the rank filter finds exactly that.
  Rng rng(107);
  const IsotropicBasis b = isotropic_basis(6, +1, Metric::euclidean(2));
  CHECK(b.size() == 15);
  CHECK(independent_subset(b).size() == 10);
  const auto sample_matrix = [](int d, Rng& r) { return sample_orthogonal(d, r).matrix(); };
  CHECK(oracles::invariant_space_dim(2, 6, 200, rng, sample_matrix) == 10);
}

TEST_CASE("independent_subset: G_4 against symmetric a^2 keeps 2 of 3") {
  const IsotropicBasis b4 = isotropic_basis(4, +1, Metric::euclidean(3));
  SlotSymmetry sym;
  sym.generators.push_back(SlotSymmetry::swap(4, 0, 1)); // v (x) v input symmetry
  const IsotropicBasis kept = independent_subset(b4, &sym);
  CHECK(kept.size() == 2);
  // the survivors realize <a,a> delta and a (x) a: identity matching first
  CHECK(perm_to_string(kept.elements[0].sigma) == "(1,2,3,4)");
  CHECK(perm_to_string(kept.elements[1].sigma) == "(1,3,2,4)");
}

TEST_CASE("independent_subset: G_6 against a2 (x) a2") {
  const IsotropicBasis b6 = isotropic_basis(6, +1, Metric::euclidean(3));
  REQUIRE(b6.size() == 15);

  // input block swap only: 9 distinct maps survive
  SlotSymmetry input_only;
  input_only.generators.push_back(SlotSymmetry::block_swap(6, 0, 2));
  CHECK(independent_subset(b6, &input_only).size() == 9);

  // adding the symmetric-output reduction gives the 7 distinct terms
  SlotSymmetry with_output = input_only;
  with_output.generators.push_back(SlotSymmetry::swap(6, 4, 5));
  CHECK(independent_subset(b6, &with_output).size() == 7);

  // no symmetry declared: basis unchanged (d=3 is above the degeneracy line)
  CHECK(independent_subset(b6).size() == 15);
}

TEST_CASE("theta-product bases for the other metrics") {
  for (const Metric& m : {Metric::minkowski(1, 4), Metric::symplectic(4)}) {
    const IsotropicBasis b = isotropic_basis(2, +1, m);
    REQUIRE(b.size() == 1);
    CHECK(max_abs_diff(b.elements[0].value, metric_tensor(m)) == 0.0);
    CHECK(isotropic_basis(4, +1, m).size() == 3);
  }
}

} // TEST_SUITE
