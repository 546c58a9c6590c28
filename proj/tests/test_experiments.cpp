#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "eqt/config.hpp"
#include "eqt/experiments.hpp"
#include "eqt/training.hpp"
#include "oracles.hpp"

using namespace eqt;

TEST_SUITE("experiments") {

TEST_CASE("neo-Hookean: zero point, scalar closed form, left-rotation invariance") {
  // C = I => S = 0 for any (lambda, mu)
  for (double lambda : {0.5, 1.0, 2.0})
    for (double mu : {0.3, 1.0}) {
      const Eigen::MatrixXd s = neohookean_stress(Eigen::MatrixXd::Identity(3, 3), lambda, mu);
      CHECK(s.cwiseAbs().maxCoeff() < 1e-14);
    }

  // F = c I in d=3: S = ((3 lambda ln c - mu)/c^2 + mu) I
  const double c = 1.3, lambda = 0.8, mu = 0.6;
  const Eigen::MatrixXd cc = (c * c) * Eigen::MatrixXd::Identity(3, 3);
  const Eigen::MatrixXd s = neohookean_stress(cc, lambda, mu);
  const double expect = (3.0 * lambda * std::log(c) - mu) / (c * c) + mu;
  for (int i = 0; i < 3; ++i) CHECK(s(i, i) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(std::abs(s(0, 1)) < 1e-15);

  // C(QF) = C(F): left-rotating the deformation gradient leaves (C, S) fixed
  Rng rng(1);
  {
    Eigen::MatrixXd f(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) f(i, j) = (i == j ? 1.0 : 0.0) + 0.2 * rng.gaussian();
    const GroupElement q = sample_orthogonal(3, rng);
    const Eigen::MatrixXd c1 = f.transpose() * f;
    const Eigen::MatrixXd c2 = (q.matrix() * f).transpose() * (q.matrix() * f);
    CHECK((c1 - c2).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((neohookean_stress(c1, 1.0, 1.0) - neohookean_stress(0.5 * (c2 + c2.transpose()), 1.0, 1.0))
              .cwiseAbs()
              .maxCoeff() < 1e-11);
  }

  Rng rng_copy(1); // determinism of the stream
  Rng rng_b(1);
  const NeoHookeanSample a = gen_neohookean(rng_copy, 1.0, 1.0, 0.2);
  const NeoHookeanSample b = gen_neohookean(rng_b, 1.0, 1.0, 0.2);
  CHECK(max_abs_diff(a.C, b.C) == 0.0);
  CHECK(max_abs_diff(a.S, b.S) == 0.0);

  // law holds on generated samples
  Eigen::MatrixXd cm(3, 3), sm(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      cm(i, j) = a.C({i, j});
      sm(i, j) = a.S({i, j});
    }
  CHECK((neohookean_stress(cm, 1.0, 1.0) - sm).cwiseAbs().maxCoeff() < 1e-10);

  CHECK_THROWS_AS(gen_neohookean(rng, -1.0, 1.0, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(gen_neohookean(rng, 1.0, 1.0, 0.9), std::invalid_argument);
}

TEST_CASE("sparse schemes: structural facts") {
  Rng rng(2);
  const int n = 100;
  const double eps = 0.25;

  // BR: every nonzero entry has magnitude 1/sqrt(eps n) pre-normalization
  const double mag = 1.0 / std::sqrt(eps * n);
  for (int t = 0; t < 10; ++t) {
    const Eigen::VectorXd v = sample_sparse_vector(rng, SparseScheme::BernoulliRademacher, n, eps);
    for (int i = 0; i < n; ++i)
      if (v(i) != 0.0) CHECK(std::abs(std::abs(v(i)) - mag) < 1e-15);
  }

  // AR: accepted draws satisfy the 4-norm threshold and are unit length
  for (int t = 0; t < 5; ++t) {
    const Eigen::VectorXd v = sample_sparse_vector(rng, SparseScheme::AcceptReject, n, eps);
    CHECK(std::abs(v.norm() - 1.0) < 1e-12);
    double n4 = 0.0;
    for (int i = 0; i < n; ++i) n4 += std::pow(v(i), 4);
    CHECK(n4 >= 1.0 / (eps * n));
  }
  CHECK_THROWS_AS(sample_sparse_vector(rng, SparseScheme::CorrectedBernoulliGaussian, n, 0.4),
                  std::invalid_argument);
}

TEST_CASE("sparse moments: Monte Carlo at reduced size (full scale in acceptance)") {
  Rng rng(3);
  const int n = 100, draws = 20000;
  const double eps = 0.25;
  struct Case {
    SparseScheme scheme;
    double expect4;
  };
  for (const auto& c : {Case{SparseScheme::BernoulliGaussian, 3.0 / (eps * n)},
                        Case{SparseScheme::CorrectedBernoulliGaussian, 1.0 / (eps * n)},
                        Case{SparseScheme::BernoulliRademacher, 1.0 / (eps * n)}}) {
    double sum2 = 0, sum4 = 0, sq2 = 0, sq4 = 0;
    for (int t = 0; t < draws; ++t) {
      const Eigen::VectorXd v = sample_sparse_vector(rng, c.scheme, n, eps);
      const double m2 = v.squaredNorm();
      double m4 = 0;
      for (int i = 0; i < n; ++i) m4 += std::pow(v(i), 4);
      sum2 += m2;
      sq2 += m2 * m2;
      sum4 += m4;
      sq4 += m4 * m4;
    }
    const double mean2 = sum2 / draws, mean4 = sum4 / draws;
    const double se2 = std::sqrt((sq2 / draws - mean2 * mean2) / draws);
    const double se4 = std::sqrt((sq4 / draws - mean4 * mean4) / draws);
    CHECK(std::abs(mean2 - 1.0) < 3.5 * se2);
    CHECK(std::abs(mean4 - c.expect4) < 3.5 * se4);
  }
}

TEST_CASE("gen_sparse_instance: orthonormal basis containing the target") {
  Rng rng(4);
  for (CovarianceKind cov : {CovarianceKind::Identity, CovarianceKind::Diagonal, CovarianceKind::Random}) {
    const SparseVectorInstance inst =
        gen_sparse_instance(rng, SparseScheme::BernoulliGaussian, cov, 60, 4, 0.25);
    CHECK((inst.basis.transpose() * inst.basis - Eigen::MatrixXd::Identity(4, 4))
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    CHECK(std::abs(inst.target.norm() - 1.0) < 1e-12);
    // v in the column span: projection residual below 1e-9
    const Eigen::VectorXd proj = inst.basis * (inst.basis.transpose() * inst.target);
    CHECK((proj - inst.target).norm() < 1e-9);
  }
}

TEST_CASE("SoS estimators: zero rows, vanishing coefficient, loop oracle") {
  const int n = 20, d = 4;
  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(n, d);
  CHECK(sos_h_hopkins(zeros).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::MatrixXd mao0 = sos_h_mao(zeros);
  CHECK((mao0 + (3.0 / n) * Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() == 0.0);

  // one row with ||a||^2 = d/n contributes nothing to hopkins
  Eigen::MatrixXd one = Eigen::MatrixXd::Zero(n, d);
  one(0, 0) = std::sqrt(static_cast<double>(d) / n);
  CHECK(sos_h_hopkins(one).cwiseAbs().maxCoeff() < 1e-15);

  // random instance equals a double-loop evaluation
  Rng rng(5);
  Eigen::MatrixXd basis(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) basis(i, j) = rng.gaussian();
  Eigen::MatrixXd want_h = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd want_m = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    double norm2 = 0;
    for (int j = 0; j < d; ++j) norm2 += basis(i, j) * basis(i, j);
    for (int p = 0; p < d; ++p)
      for (int q = 0; q < d; ++q) {
        want_h(p, q) += (norm2 - static_cast<double>(d) / n) * basis(i, p) * basis(i, q);
        want_m(p, q) += (norm2 - static_cast<double>(d - 1) / n) * basis(i, p) * basis(i, q);
      }
  }
  for (int p = 0; p < d; ++p) want_m(p, p) -= 3.0 / n;
  CHECK((sos_h_hopkins(basis) - want_h).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((sos_h_mao(basis) - want_m).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("estimate_sparse: diagonal h picks the matching basis column") {
  Rng rng(6);
  const SparseVectorInstance inst =
      gen_sparse_instance(rng, SparseScheme::BernoulliGaussian, CovarianceKind::Identity, 50, 4, 0.25);
  CHECK(alignment(inst.target, inst.target) == doctest::Approx(1.0).epsilon(1e-12));
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(4, 4);
  h(0, 0) = 1.0;
  const Eigen::VectorXd vhat = estimate_sparse(inst.basis, h);
  CHECK((vhat - inst.basis.col(0)).cwiseAbs().maxCoeff() < 1e-12);

  // degenerate h = I: only the contract ||vhat|| = 1, vhat in range(S)
  const Eigen::VectorXd v2 = estimate_sparse(inst.basis, Eigen::MatrixXd::Identity(4, 4));
  CHECK(std::abs(v2.norm() - 1.0) < 1e-12);
  const Eigen::VectorXd proj = inst.basis * (inst.basis.transpose() * v2);
  CHECK((proj - v2).norm() < 1e-10);

  Eigen::MatrixXd asym = Eigen::MatrixXd::Zero(4, 4);
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(estimate_sparse(inst.basis, asym), std::invalid_argument);
}

TEST_CASE("estimate_sparse is equivariant: rotating the basis fixes the metric") {
  Rng rng(7);
  const SparseVectorInstance inst =
      gen_sparse_instance(rng, SparseScheme::BernoulliRademacher, CovarianceKind::Random, 60, 5, 0.25);
  SparseHModel model(SparseHModel::Variant::Full, 60, 5, {16}, Activation::ReLU, rng);
  const double before = alignment(inst.target, estimate_sparse(inst.basis, model.h(inst.basis)));
  for (int t = 0; t < 8; ++t) {
    const GroupElement g = sample_orthogonal(5, rng);
    const Eigen::MatrixXd rotated = inst.basis * g.matrix();
    const double after = alignment(inst.target, estimate_sparse(rotated, model.h(rotated)));
    CHECK(after == doctest::Approx(before).epsilon(1e-7));
  }
}

TEST_CASE("learned_h: identity coefficients, SoS containment, equivariance") {
  Rng rng(8);
  const int n = 12, d = 5;
  Eigen::MatrixXd basis(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) basis(i, j) = rng.gaussian();

  // all q = 0 except q_I = 1 -> identity matrix
  Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(n * (n + 1) / 2 + 1);
  coeffs(coeffs.size() - 1) = 1.0;
  CHECK((SparseHModel::assemble(SparseHModel::Variant::Full, basis, coeffs) -
         Eigen::MatrixXd::Identity(d, d))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  // q_{i,i} = ||a_i||^2 - d/n, q_I = 0 reproduces the Hopkins estimator
  Eigen::VectorXd hop = Eigen::VectorXd::Zero(n * (n + 1) / 2 + 1);
  int idx = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      if (i == j) hop(idx) = basis.row(i).squaredNorm() - static_cast<double>(d) / n;
      ++idx;
    }
  CHECK((SparseHModel::assemble(SparseHModel::Variant::Full, basis, hop) - sos_h_hopkins(basis))
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  // diag variant containment as well
  Eigen::VectorXd hop_diag = Eigen::VectorXd::Zero(n + 1);
  for (int i = 0; i < n; ++i) hop_diag(i) = basis.row(i).squaredNorm() - static_cast<double>(d) / n;
  CHECK((SparseHModel::assemble(SparseHModel::Variant::Diag, basis, hop_diag) - sos_h_hopkins(basis))
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  SparseHModel full(SparseHModel::Variant::Full, n, d, {16, 16}, Activation::ReLU, rng);
  CHECK(equivariance_audit(full, rng, 16) < 1e-9);
  SparseHModel diag(SparseHModel::Variant::Diag, n, d, {16, 16}, Activation::ReLU, rng);
  CHECK(equivariance_audit(diag, rng, 16) < 1e-9);
}

TEST_CASE("sparse loss gradient vs finite differences (through the eigenvector)") {
  Rng rng(9);
  const int n = 10, d = 4;
  const SparseVectorInstance inst =
      gen_sparse_instance(rng, SparseScheme::BernoulliGaussian, CovarianceKind::Identity, 40, d, 0.25);
  SparseVectorInstance small;
  small.basis = inst.basis.topRows(n);
  small.target = inst.target;

  SparseHModel model(SparseHModel::Variant::Full, n, d, {8}, Activation::ReLU, rng);
  model.net().zero_grads();
  model.loss_and_grad(small);

  const auto loss = [&] {
    double out = 0.0;
    const Eigen::MatrixXd hm = model.h(small.basis);
    sparse_loss_h_gradient(small, hm, &out);
    return out;
  };
  auto params = model.net().params();
  auto grads = model.net().grads();
  int checked = 0;
  for (std::size_t b = 0; b < params.size() && checked < 200; ++b)
    for (std::size_t i = 0; i < params[b].size && checked < 200; i += 7, ++checked) {
      const double fd = oracles::central_diff(loss, &params[b].data[i]);
      const double an = grads[b].data[i];
      const double sc = std::max({std::abs(fd), std::abs(an), 1e-6});
      CHECK(std::abs(fd - an) / sc < 1e-4);
    }
}

TEST_CASE("dataset files round-trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "eqt_test_ds";
  fs::create_directories(dir);

  Config cfg = Config::parse("experiment = path_signature\ngroup = o3\nd = 3\n");
  const PathDataset pd = gen_path_dataset(cfg, 7, 0, 3);
  write_path_dataset(dir / "p.eqd", pd);
  const PathDataset pback = read_path_dataset(dir / "p.eqd");
  REQUIRE(pback.samples.size() == 3);
  CHECK(max_abs_diff(pback.samples[1].truth[2], pd.samples[1].truth[2]) == 0.0);
  CHECK(dataset_tag(dir / "p.eqd") == 1);

  const StressDataset sd = gen_stress_dataset(cfg, 7, 0, 4);
  write_stress_dataset(dir / "s.eqd", sd);
  const StressDataset sback = read_stress_dataset(dir / "s.eqd");
  CHECK(max_abs_diff(sback.samples[2].S, sd.samples[2].S) == 0.0);
  CHECK(dataset_tag(dir / "s.eqd") == 2);

  Config scfg = Config::parse("experiment = sparse_vector\nscheme = br\ncovariance = random\n");
  const SparseDataset vd = gen_sparse_dataset(scfg, 7, 0, 3);
  write_sparse_dataset(dir / "v.eqd", vd);
  const SparseDataset vback = read_sparse_dataset(dir / "v.eqd");
  CHECK((vback.samples[0].basis - vd.samples[0].basis).cwiseAbs().maxCoeff() == 0.0);
  CHECK(dataset_tag(dir / "v.eqd") == 3);

  fs::remove_all(dir);
}

TEST_CASE("config parsing") {
  const Config cfg = Config::parse("a = 1\n# comment\n b = hello # trailing\n\nc=2.5\n");
  CHECK(cfg.get_int("a") == 1);
  CHECK(cfg.get("b") == "hello");
  CHECK(cfg.get_double("c") == 2.5);
  CHECK(cfg.get_or("missing", "x") == "x");
  CHECK_THROWS_AS(cfg.get("missing"), std::invalid_argument);
  CHECK_THROWS_AS(Config::parse("novalue\n"), std::invalid_argument);
  CHECK_THROWS_AS(cfg.get_int("b"), std::invalid_argument);
}

TEST_CASE("per-sample substreams make generation order-independent") {
  Config cfg = Config::parse("experiment = stress_strain\n");
  const StressDataset a = gen_stress_dataset(cfg, 11, 0, 5);
  const StressDataset b = gen_stress_dataset(cfg, 11, 0, 2); // prefix
  CHECK(max_abs_diff(a.samples[1].C, b.samples[1].C) == 0.0);
}

} // TEST_SUITE
