#include <doctest.h>

#include <cmath>

#include "eqt/nn.hpp"
#include "oracles.hpp"

using namespace eqt;

namespace {

// Relative finite-difference check over every parameter of a scalar loss.
template <typename LossFn>
void gradcheck(std::vector<ParamView> params, std::vector<ParamView> grads, LossFn&& loss,
               double rel_tol = 1e-5, double abs_floor = 1e-7) {
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t i = 0; i < params[b].size; ++i) {
      const double numeric = oracles::central_diff(loss, &params[b].data[i]);
      const double analytic = grads[b].data[i];
      const double scale = std::max({std::abs(numeric), std::abs(analytic), abs_floor});
      CHECK_MESSAGE(std::abs(numeric - analytic) / scale < rel_tol,
                    "block ", b, " index ", i, " analytic=", analytic, " numeric=", numeric);
    }
  }
}

} // namespace

TEST_SUITE("nn") {

TEST_CASE("GELU closed-form values") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu_grad(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  // gelu(1) = 1 * Phi(1)
  const double phi1 = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
  CHECK(gelu(1.0) == doctest::Approx(phi1).epsilon(1e-15));
  // derivative via finite differences
  for (double x : {-1.3, -0.2, 0.7, 2.1}) {
    const double h = 1e-6;
    const double fd = (gelu(x + h) - gelu(x - h)) / (2 * h);
    CHECK(gelu_grad(x) == doctest::Approx(fd).epsilon(1e-8));
  }
}

TEST_CASE("single linear layer: gradient of 0.5||Wx - y||^2 is (Wx - y) x^T") {
  Rng rng(1);
  DenseNet net({3, 2}, Activation::Gelu); // no hidden layer: output is linear
  net.init(rng);
  Eigen::VectorXd x(3), y(2);
  for (int i = 0; i < 3; ++i) x(i) = rng.gaussian();
  for (int i = 0; i < 2; ++i) y(i) = rng.gaussian();

  DenseNet::Cache cache;
  const Eigen::VectorXd out = net.forward_batch(x.transpose(), cache).row(0).transpose();
  const Eigen::VectorXd resid = out - y;
  net.zero_grads();
  net.backward_batch(cache, resid.transpose()); // dL/dout for 0.5||.||^2

  const Eigen::MatrixXd expect = resid * x.transpose();
  auto grads = net.grads();
  // grads[0] is the weight block, row-major per Eigen default... compare via views
  const Eigen::Map<Eigen::MatrixXd> gw(grads[0].data, 2, 3);
  CHECK((gw - expect).cwiseAbs().maxCoeff() < 1e-14);
  const Eigen::Map<Eigen::VectorXd> gb(grads[1].data, 2);
  CHECK((gb - resid).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("DenseNet finite-difference gradcheck (GELU and ReLU)") {
  for (Activation act : {Activation::Gelu, Activation::ReLU}) {
    Rng rng(2);
    DenseNet net({4, 8, 6, 3}, act);
    net.init(rng);
    Eigen::MatrixXd x(5, 4), target(5, 3);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j) x(i, j) = rng.gaussian();
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 3; ++j) target(i, j) = rng.gaussian();

    const auto loss = [&] { return 0.5 * (net.forward_batch(x) - target).squaredNorm(); };
    DenseNet::Cache cache;
    const Eigen::MatrixXd out = net.forward_batch(x, cache);
    net.zero_grads();
    net.backward_batch(cache, out - target);
    gradcheck(net.params(), net.grads(), loss);
  }
}

TEST_CASE("backward_batch returns dL/dx") {
  Rng rng(3);
  DenseNet net({3, 5, 2}, Activation::Gelu);
  net.init(rng);
  Eigen::MatrixXd x(1, 3);
  for (int j = 0; j < 3; ++j) x(0, j) = rng.gaussian();
  DenseNet::Cache cache;
  const Eigen::MatrixXd out = net.forward_batch(x, cache);
  net.zero_grads();
  const Eigen::MatrixXd dx = net.backward_batch(cache, Eigen::MatrixXd::Ones(1, 2));
  for (int j = 0; j < 3; ++j) {
    const double fd = oracles::central_diff([&] { return net.forward_batch(x).sum(); }, &x(0, j));
    CHECK(dx(0, j) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("PermEquivariantNet: exact permutation equivariance (100 permutations)") {
  Rng rng(4);
  PermEquivariantNet net({1, 23, 23, 23, 1}, Activation::Gelu);
  net.init(rng);
  const int d = 7;
  Eigen::VectorXd x(d);
  for (int i = 0; i < d; ++i) x(i) = rng.gaussian();
  const Eigen::VectorXd y = net.forward(x);
  std::vector<int> perm(d);
  std::iota(perm.begin(), perm.end(), 0);
  for (int t = 0; t < 100; ++t) {
    for (int i = d - 1; i > 0; --i)
      std::swap(perm[i], perm[static_cast<int>(rng.uniform() * (i + 1))]);
    Eigen::VectorXd px(d), py(d);
    for (int i = 0; i < d; ++i) {
      px(i) = x(perm[i]);
      py(i) = y(perm[i]);
    }
    CHECK((net.forward(px) - py).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("PermEquivariantNet gradcheck") {
  Rng rng(5);
  PermEquivariantNet net({1, 6, 6, 1}, Activation::Gelu);
  net.init(rng);
  Eigen::VectorXd x(4), target(4);
  for (int i = 0; i < 4; ++i) {
    x(i) = rng.gaussian();
    target(i) = rng.gaussian();
  }
  const auto loss = [&] { return 0.5 * (net.forward(x) - target).squaredNorm(); };
  PermEquivariantNet::Cache cache;
  const Eigen::VectorXd out = net.forward(x, cache);
  net.zero_grads();
  net.backward(cache, out - target);
  gradcheck(net.params(), net.grads(), loss);
}

TEST_CASE("schedules: cosine endpoints and exponential decay") {
  OptimizerConfig cfg;
  cfg.lr = 0.1;
  cfg.schedule = Schedule::Cosine;
  cfg.total_steps = 100;
  Optimizer opt(cfg);
  CHECK(opt.current_lr() == doctest::Approx(0.1)); // lr(0) = peak

  double p = 0.0, g = 0.0;
  const std::vector<ParamView> pv{{&p, 1}}, gv{{&g, 1}};
  for (int t = 0; t < 100; ++t) opt.step(pv, gv);
  CHECK(opt.current_lr() <= 1e-3 * cfg.lr); // lr(T) below 1e-3 peak

  OptimizerConfig e;
  e.lr = 0.5;
  e.schedule = Schedule::Exponential;
  e.decay = 0.999;
  Optimizer eopt(e);
  for (int t = 0; t < 10; ++t) eopt.step(pv, gv);
  CHECK(eopt.current_lr() == doctest::Approx(0.5 * std::pow(0.999, 10)).epsilon(1e-12));
}

TEST_CASE("optimizer determinism: two identically seeded runs match bitwise") {
  const auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    DenseNet net({3, 8, 2}, Activation::Gelu);
    net.init(rng);
    OptimizerConfig cfg;
    cfg.lr = 1e-3;
    cfg.weight_decay = 1e-2;
    cfg.schedule = Schedule::Cosine;
    cfg.total_steps = 100;
    Optimizer opt(cfg);
    Eigen::MatrixXd x(4, 3), y(4, 2);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) x(i, j) = rng.gaussian();
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 2; ++j) y(i, j) = rng.gaussian();
    for (int t = 0; t < 100; ++t) {
      DenseNet::Cache cache;
      const Eigen::MatrixXd out = net.forward_batch(x, cache);
      net.zero_grads();
      net.backward_batch(cache, out - y);
      opt.step(net.params(), net.grads());
    }
    std::vector<double> flat;
    for (auto& view : net.params())
      for (std::size_t i = 0; i < view.size; ++i) flat.push_back(view.data[i]);
    return flat;
  };
  const auto a = run(99), b = run(99);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]); // bitwise
}

TEST_CASE("AdamW weight decay is decoupled") {
  // zero gradient, nonzero parameter: AdamW still shrinks it, Adam does not
  double p1 = 1.0, g1 = 0.0;
  OptimizerConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  Optimizer opt(cfg);
  opt.step({{&p1, 1}}, {{&g1, 1}});
  CHECK(p1 == doctest::Approx(1.0 - 0.1 * 0.5 * 1.0));

  double p2 = 1.0;
  OptimizerConfig plain;
  plain.lr = 0.1;
  Optimizer opt2(plain);
  opt2.step({{&p2, 1}}, {{&g1, 1}});
  CHECK(p2 == 1.0);
}

} // TEST_SUITE
