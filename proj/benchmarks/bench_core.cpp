#include <benchmark/benchmark.h>

#include "eqt/experiments.hpp"
#include "eqt/isotropic.hpp"
#include "eqt/models.hpp"
#include "eqt/rng.hpp"
#include "eqt/signature.hpp"

using namespace eqt;

namespace {

Tensor random_tensor(int d, int order, Rng& rng) {
  std::size_t n = 1;
  for (int q = 0; q < order; ++q) n *= static_cast<std::size_t>(d);
  std::vector<double> c(n);
  for (auto& x : c) x = rng.gaussian();
  return Tensor(d, order, +1, std::move(c));
}

void bm_contract(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor(d, 6, rng);
  const Metric m = Metric::euclidean(d);
  for (auto _ : state) benchmark::DoNotOptimize(contract(a, 2, m));
}
BENCHMARK(bm_contract)->Arg(3)->Arg(5);

void bm_group_act_order4(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  Rng rng(2);
  const Tensor a = random_tensor(d, 4, rng);
  const GroupElement g = sample_orthogonal(d, rng);
  for (auto _ : state) benchmark::DoNotOptimize(group_act(g, a));
}
BENCHMARK(bm_group_act_order4)->Arg(3)->Arg(5);

void bm_isotropic_basis_k6(benchmark::State& state) {
  const Metric m = Metric::euclidean(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(isotropic_basis(6, +1, m));
}
BENCHMARK(bm_isotropic_basis_k6)->Arg(3)->Arg(5);

void bm_signature_oracle(benchmark::State& state) {
  Rng rng(3);
  const int n_points = static_cast<int>(state.range(0));
  std::vector<Tensor> pts;
  for (int i = 0; i < n_points; ++i) pts.push_back(random_tensor(3, 1, rng));
  for (auto _ : state) benchmark::DoNotOptimize(signature_oracle(pts, 3));
}
BENCHMARK(bm_signature_oracle)->Arg(10)->Arg(1000);

void bm_signature_model_forward(benchmark::State& state) {
  Rng rng(4);
  SignatureModel model(10, 3, Metric::euclidean(3), {32, 32, 32}, Activation::Gelu, rng);
  std::vector<Tensor> pts;
  for (int i = 0; i < 10; ++i) pts.push_back(random_tensor(3, 1, rng));
  SignatureModel::Workspace ws;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(pts, ws));
}
BENCHMARK(bm_signature_model_forward);

void bm_sparse_h_forward(benchmark::State& state) {
  Rng rng(5);
  SparseHModel model(SparseHModel::Variant::Full, 100, 5, {128, 128}, Activation::ReLU, rng);
  const SparseVectorInstance inst = gen_sparse_instance(
      rng, SparseScheme::BernoulliRademacher, CovarianceKind::Identity, 100, 5, 0.25);
  for (auto _ : state) benchmark::DoNotOptimize(model.h(inst.basis));
}
BENCHMARK(bm_sparse_h_forward);

} // namespace

BENCHMARK_MAIN();
