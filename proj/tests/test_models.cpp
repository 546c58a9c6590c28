#include <doctest.h>

#include <sstream>

#include "eqt/experiments.hpp"
#include "eqt/models.hpp"
#include "oracles.hpp"

using namespace eqt;

namespace {

Tensor random_vec(int d, Rng& rng) {
  std::vector<double> c(static_cast<std::size_t>(d));
  for (auto& x : c) x = rng.gaussian();
  return Tensor(d, 1, +1, std::move(c));
}

std::vector<Tensor> random_vecs(int n, int d, Rng& rng) {
  std::vector<Tensor> v;
  for (int i = 0; i < n; ++i) v.push_back(random_vec(d, rng));
  return v;
}

// Rank of a family of maps evaluated on random inputs (each map flattened
// over many evaluations).
int map_family_rank(const std::vector<GeneralBasisMap>& maps,
                    const std::vector<std::vector<Tensor>>& inputs, double tol = 1e-9) {
  if (maps.empty()) return 0;
  std::vector<Eigen::VectorXd> rows;
  for (const auto& m : maps) {
    std::vector<double> row;
    for (const auto& in : inputs) {
      const Tensor t = apply_general_basis(m, in);
      row.insert(row.end(), t.components().begin(), t.components().end());
    }
    rows.push_back(Eigen::Map<Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(row.size())));
  }
  Eigen::MatrixXd stack(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) stack.row(static_cast<Eigen::Index>(i)) = rows[i];
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(stack);
  const auto& s = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > tol * s(0)) ++rank;
  return rank;
}

} // namespace

TEST_SUITE("models") {

TEST_CASE("term enumeration counts") {
  const Metric e3 = Metric::euclidean(3);
  CHECK(enumerate_basis_terms(1, 0, e3).size() == 1);  // pure invariant
  CHECK(enumerate_basis_terms(1, 2, e3).size() == 2);  // delta + v (x) v
  CHECK(enumerate_basis_terms(4, 2, e3).size() == 17); // 16 ordered pairs + delta
  CHECK(enumerate_basis_terms(10, 1, e3).size() == 10);
  CHECK(enumerate_basis_terms(10, 2, e3).size() == 101);
  CHECK(enumerate_basis_terms(10, 3, e3).size() == 1030);
}

TEST_CASE("path-signature model parameter count is pinned") {
  Rng rng(1);
  SignatureModel m(10, 3, Metric::euclidean(3), {32, 32, 32}, Activation::Gelu, rng);
  CHECK(m.total_terms() == 1141);
  CHECK(m.net().param_count() == 41557);
  // Lorentz variant has the same feature and term structure
  SignatureModel lm(10, 3, Metric::minkowski(1, 4), {32, 32, 32}, Activation::Gelu, rng);
  CHECK(lm.net().param_count() == 41557);
}

TEST_CASE("stress model parameter count is pinned") {
  Rng rng(2);
  EigenEquivariantModel m(3, {23, 23, 23}, Activation::Gelu, rng);
  CHECK(m.net().param_count() == 2278);
  DenseNet mlp({9, 32, 32, 32, 9}, Activation::Gelu);
  CHECK(mlp.param_count() == 2729);
}

TEST_CASE("invariant features: identities and invariance under the group") {
  Rng rng(3);
  const Metric e3 = Metric::euclidean(3);
  std::vector<Tensor> basis_vecs{Tensor::basis_vector(3, 0), Tensor::basis_vector(3, 1),
                                 Tensor::basis_vector(3, 2)};
  CHECK((invariant_features(basis_vecs, e3) - Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);

  const Metric mink = Metric::minkowski(1, 4);
  Tensor null_vec(4, 1, +1, {1.0, 1.0, 0.0, 0.0});
  CHECK(invariant_features({null_vec}, mink)(0, 0) == 0.0);

  for (const Metric& m : {Metric::euclidean(3), Metric::minkowski(1, 4), Metric::symplectic(4)}) {
    const auto vs = random_vecs(3, m.dim(), rng);
    const Eigen::MatrixXd before = invariant_features(vs, m);
    const GroupElement g = sample_group_element(m, rng);
    std::vector<Tensor> gvs;
    for (const auto& v : vs) gvs.push_back(group_act(g, v));
    const Eigen::MatrixXd after = invariant_features(gvs, m);
    CHECK((after - before).cwiseAbs().maxCoeff() < 1e-10);
    if (m.antisymmetric())
      CHECK((before + before.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    else
      CHECK((before - before.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("forward: zero net gives zero tensor; constant-delta term") {
  Rng rng(4);
  VecToTensorModel m(2, 2, Metric::euclidean(3), {8}, Activation::Gelu, rng);
  m.net().set_constant(0.0);
  const auto vs = random_vecs(2, 3, rng);
  CHECK(m.forward(vs).norm() == 0.0);

  // single delta term with constant coefficient 1: set only that output bias
  // (terms with t=1 sit at the end of the (n=1,k'=2) enumeration)
  VecToTensorModel single(1, 2, Metric::euclidean(3), {4}, Activation::Gelu, rng);
  REQUIRE(single.terms().size() == 2);
  REQUIRE(single.terms()[1].t == 1);
  single.net().set_constant(0.0);
  auto views = single.net().params();
  // last bias block, second entry = the delta-term coefficient
  views.back().data[1] = 1.0;
  const Tensor out = single.forward(random_vecs(1, 3, rng));
  CHECK(max_abs_diff(out, kronecker_delta(3)) < 1e-15);
}

TEST_CASE("forward equivariance: O(3), Lorentz, symplectic (random nets)") {
  Rng rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    VecToTensorModel o3(3, 2, Metric::euclidean(3), {16, 16}, Activation::Gelu, rng);
    CHECK(equivariance_audit(o3, rng, 8) < 1e-9);
    VecToTensorModel o3k3(2, 3, Metric::euclidean(3), {8, 8}, Activation::Gelu, rng);
    CHECK(equivariance_audit(o3k3, rng, 8) < 1e-9);
    VecToTensorModel lorentz(3, 2, Metric::minkowski(1, 4), {16, 16}, Activation::Gelu, rng);
    CHECK(equivariance_audit(lorentz, rng, 8) < 1e-7);
    VecToTensorModel symp(3, 2, Metric::symplectic(4), {16, 16}, Activation::Gelu, rng);
    CHECK(equivariance_audit(symp, rng, 8) < 1e-7);
  }
}

TEST_CASE("forward gradient matches central finite differences") {
  Rng rng(6);
  VecToTensorModel m(2, 2, Metric::euclidean(2), {6}, Activation::Gelu, rng);
  const auto vs = random_vecs(2, 2, rng);
  const Tensor target = outer(vs[0], vs[1]);

  const auto loss = [&] {
    const Tensor diff = sub(m.forward(vs), target);
    return 0.5 * diff.norm() * diff.norm();
  };
  m.net().zero_grads();
  m.backward(vs, sub(m.forward(vs), target));

  auto params = m.net().params();
  auto grads = m.net().grads();
  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t i = 0; i < params[b].size; ++i) {
      const double fd = oracles::central_diff(loss, &params[b].data[i]);
      const double an = grads[b].data[i];
      const double sc = std::max({std::abs(fd), std::abs(an), 1e-7});
      CHECK(std::abs(fd - an) / sc < 1e-5);
    }
}

TEST_CASE("forward_sym: identity and square nets, symmetry checks") {
  Rng rng(7);
  const int d = 3;
  // identity net: one linear layer with w_self = 1
  PermEquivariantNet ident({1, 1}, Activation::Gelu);
  auto views = ident.params();
  views[0].data[0] = 1.0; // w_self
  EigenEquivariantModel model(d, {}, Activation::Gelu, rng);
  model.net() = ident;

  Eigen::MatrixXd a(d, d);
  a << 2, 0.3, -0.1, 0.3, 1, 0.2, -0.1, 0.2, -0.5;
  CHECK((model.forward_sym(a) - a).cwiseAbs().maxCoeff() < 1e-10);

  // non-symmetric input rejected
  Eigen::MatrixXd bad = a;
  bad(0, 1) += 1e-6;
  CHECK_THROWS_AS(model.forward_sym(bad), std::invalid_argument);

  // eig_net = elementwise square -> A^2, through the same spectral path the
  // model uses
  const Eigen::MatrixXd asq = spectral_apply(
      a, [](const Eigen::VectorXd& lam) { return lam.array().square().matrix().eval(); });
  CHECK((asq - a * a).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("forward_sym equivariance with gapped spectra") {
  Rng rng(8);
  EigenEquivariantModel model(3, {23, 23, 23}, Activation::Gelu, rng);
  CHECK(equivariance_audit(model, rng, 16) < 1e-8);
}

TEST_CASE("eigen model parameter gradient vs finite differences") {
  Rng rng(9);
  EigenEquivariantModel model(3, {6, 6}, Activation::Gelu, rng);
  Eigen::MatrixXd a(3, 3);
  a << 1.5, 0.2, 0.1, 0.2, 0.4, -0.3, 0.1, -0.3, -0.9;
  Eigen::MatrixXd target(3, 3);
  target << 1, 0, 0, 0, 2, 0, 0, 0, 3;
  target = 0.5 * (target + target.transpose());

  const auto loss = [&] { return 0.5 * (model.forward_sym(a) - target).squaredNorm(); };
  model.net().zero_grads();
  model.backward(a, model.forward_sym(a) - target);
  auto params = model.net().params();
  auto grads = model.net().grads();
  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t i = 0; i < params[b].size; ++i) {
      const double fd = oracles::central_diff(loss, &params[b].data[i]);
      const double an = grads[b].data[i];
      const double sc = std::max({std::abs(fd), std::abs(an), 1e-7});
      CHECK(std::abs(fd - an) / sc < 1e-5);
    }
}

TEST_CASE("general basis: one vector to a matrix gives 3 maps of rank 3") {
  const int d = 2;
  const auto maps = enumerate_general_basis(d, {{1, +1}}, {2, +1}, 2);
  REQUIRE(maps.size() == 3);

  // beta = (1,0,0): the pure delta map
  Rng rng(10);
  const auto a = random_vecs(1, d, rng);
  CHECK(max_abs_diff(apply_general_basis(maps[0], a), kronecker_delta(d)) == 0.0);

  // on a = e_1: <a,a> delta = delta and a (x) a = diag(1, 0)
  const std::vector<Tensor> e1{Tensor::basis_vector(d, 0)};
  CHECK(max_abs_diff(apply_general_basis(maps[1], e1), kronecker_delta(d)) < 1e-15);
  const Tensor aa = apply_general_basis(maps[2], e1);
  CHECK(aa({0, 0}) == 1.0);
  CHECK(aa({0, 1}) == 0.0);
  CHECK(aa({1, 1}) == 0.0);

  // expressivity: rank over 50 random inputs is exactly 3
  std::vector<std::vector<Tensor>> inputs;
  for (int i = 0; i < 50; ++i) inputs.push_back(random_vecs(1, d, rng));
  CHECK(map_family_rank(maps, inputs) == 3);

  // equivariance of a random combination
  for (int trial = 0; trial < 8; ++trial) {
    const auto vs = random_vecs(1, d, rng);
    const GroupElement g = sample_orthogonal(d, rng);
    std::vector<Tensor> gvs{group_act(g, vs[0])};
    Tensor fx(d, 2, +1), fgx(d, 2, +1);
    double beta[3] = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
    for (int m = 0; m < 3; ++m) {
      fx = add(fx, scale(beta[m], apply_general_basis(maps[static_cast<std::size_t>(m)], vs)));
      fgx = add(fgx, scale(beta[m], apply_general_basis(maps[static_cast<std::size_t>(m)], gvs)));
    }
    CHECK(max_abs_diff(fgx, group_act(g, fx)) / (1.0 + fx.max_abs()) < 1e-9);
  }
}

TEST_CASE("general basis: r=1 vector input to order-2 output vanishes") {
  // only delta (r=0) and the two r=2 maps exist; no odd-order terms
  const auto maps = enumerate_general_basis(3, {{1, +1}}, {2, +1}, 1);
  CHECK(maps.size() == 1); // just the constant delta map
}

TEST_CASE("general basis: mixed vector/matrix family, counts by rank") {
  const int d = 3;
  const std::vector<TensorSpec> inputs{{1, +1}, {2, +1}};
  const auto maps = enumerate_general_basis(d, inputs, {2, +1}, 2);
  CHECK(maps.size() == 15); // input symmetry only

  const auto maps_sym = enumerate_general_basis(d, inputs, {2, +1}, 2, true);
  CHECK(maps_sym.size() == 12); // with the symmetric-output reduction

  // both families evaluate to independent maps
  Rng rng(11);
  std::vector<std::vector<Tensor>> probe;
  for (int i = 0; i < 40; ++i) {
    std::vector<Tensor> in;
    in.push_back(random_vec(d, rng));
    std::vector<double> c(9);
    for (auto& x : c) x = rng.gaussian();
    in.emplace_back(d, 2, +1, std::move(c));
    probe.push_back(std::move(in));
  }
  CHECK(map_family_rank(maps, probe) == 15);
}

TEST_CASE("general basis: order bound produces a named error") {
  CHECK_THROWS_WITH_AS(enumerate_general_basis(3, {{4, +1}}, {2, +1}, 2),
                       doctest::Contains("exceeds 8"), std::invalid_argument);
}

TEST_CASE("degree-0 coefficient model reduces to fixed basis combinations") {
  Rng rng(12);
  const int d = 3;
  // constant-coefficient vector model, one input, k' = 2
  VecToTensorModel m(1, 2, Metric::euclidean(d), {4}, Activation::Gelu, rng);
  m.net().set_constant(0.0);
  auto views = m.net().params();
  views.back().data[0] = 0.7; // v (x) v term
  views.back().data[1] = 1.3; // delta term

  const auto maps = enumerate_general_basis(d, {{1, +1}}, {2, +1}, 2);
  const auto vs = random_vecs(1, d, rng);
  const Tensor via_model = m.forward(vs);
  const Tensor via_maps =
      add(scale(1.3, apply_general_basis(maps[0], vs)), scale(0.7, apply_general_basis(maps[2], vs)));
  CHECK(max_abs_diff(via_model, via_maps) < 1e-12);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Rng rng(13);
  VecToTensorModel m(3, 2, Metric::minkowski(1, 4), {8, 8}, Activation::Gelu, rng);
  std::stringstream ss;
  write_vec_model(ss, m);
  VecToTensorModel back = read_vec_model(ss);
  const auto vs = random_vecs(3, 4, rng);
  CHECK(max_abs_diff(back.forward(vs), m.forward(vs)) == 0.0);

  EigenEquivariantModel em(3, {5, 5}, Activation::ReLU, rng);
  std::stringstream ss2;
  write_eigen_model(ss2, em);
  EigenEquivariantModel eback = read_eigen_model(ss2);
  Eigen::MatrixXd a(3, 3);
  a << 1, 0.1, 0, 0.1, 2, 0.2, 0, 0.2, 3;
  CHECK((eback.forward_sym(a) - em.forward_sym(a)).cwiseAbs().maxCoeff() == 0.0);
}

} // TEST_SUITE
