#include "eqt/training.hpp"
#include "wire.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace eqt {

namespace {

constexpr std::uint64_t kTrainStream = 0;
constexpr std::uint64_t kValStream = 1'000'000;
constexpr std::uint64_t kTestStream = 2'000'000;
constexpr std::uint64_t kInitStream = 3'000'000;
constexpr std::uint64_t kShuffleStream = 4'000'000;
constexpr std::uint64_t kAugmentStream = 5'000'000;
constexpr std::uint64_t kCovarianceStream = 6'000'000;

std::vector<int> parse_widths(const std::string& csv) {
  std::vector<int> w;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    w.push_back(std::stoi(tok));
  }
  if (w.empty()) throw std::invalid_argument("widths list is empty");
  return w;
}

Metric path_metric_from(const Config& cfg) {
  const std::string group = cfg.get_or("group", "o3");
  if (group == "o3" || group == "od") return Metric::euclidean(static_cast<int>(cfg.get_int_or("d", 3)));
  if (group == "lorentz") return Metric::minkowski(1, 4);
  throw std::invalid_argument("path_signature: group must be o3 or lorentz");
}

std::filesystem::path ensure_dir(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  return dir;
}

void scale_grads(const std::vector<ParamView>& grads, double s) {
  for (const auto& g : grads)
    for (std::size_t i = 0; i < g.size; ++i) g.data[i] *= s;
}

std::vector<int> shuffled_indices(int count, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(count));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = count - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform() * (i + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(std::min(j, i))]);
  }
  return idx;
}

void check_finite_loss(double loss) {
  if (!std::isfinite(loss)) throw numerical_error("training aborted: loss is not finite");
}

} // namespace

// ======================= dataset generation =======================

PathDataset gen_path_dataset(const Config& cfg, std::uint64_t seed, std::uint64_t stream_base,
                             int count) {
  PathDataset ds;
  const Metric metric = path_metric_from(cfg);
  ds.d = metric.dim();
  ds.n_points = static_cast<int>(cfg.get_int_or("points", 10));
  ds.levels = static_cast<int>(cfg.get_int_or("levels", 3));
  ds.degree = static_cast<int>(cfg.get_int_or("degree", 5));
  const int oracle_segments = static_cast<int>(cfg.get_int_or("oracle_segments", 1000));
  const Rng base(seed);
  ds.samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng s = base.substream(stream_base + static_cast<std::uint64_t>(i));
    ds.samples.push_back(gen_poly_path(s, ds.d, ds.degree, ds.n_points, ds.levels, oracle_segments));
  }
  return ds;
}

StressDataset gen_stress_dataset(const Config& cfg, std::uint64_t seed, std::uint64_t stream_base,
                                 int count) {
  StressDataset ds;
  ds.d = static_cast<int>(cfg.get_int_or("d", 3));
  ds.lambda = cfg.get_double_or("lambda", 1.0);
  ds.mu = cfg.get_double_or("mu", 1.0);
  ds.eta = cfg.get_double_or("eta", 0.2);
  const Rng base(seed);
  ds.samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng s = base.substream(stream_base + static_cast<std::uint64_t>(i));
    ds.samples.push_back(gen_neohookean(s, ds.lambda, ds.mu, ds.eta, ds.d));
  }
  return ds;
}

SparseDataset gen_sparse_dataset(const Config& cfg, std::uint64_t seed, std::uint64_t stream_base,
                                 int count) {
  SparseDataset ds;
  ds.n = static_cast<int>(cfg.get_int_or("n", 100));
  ds.d = static_cast<int>(cfg.get_int_or("d", 5));
  ds.eps = cfg.get_double_or("epsilon", 0.25);
  ds.scheme = parse_scheme(cfg.get_or("scheme", "bg"));
  ds.covariance = parse_covariance(cfg.get_or("covariance", "identity"));
  const Rng base(seed);
  // One noise covariance per trial: train/val/test of a seed share it.
  Rng cov_stream = base.substream(kCovarianceStream);
  const NoiseCovariance cov = sample_covariance(cov_stream, ds.covariance, ds.n);
  ds.samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng s = base.substream(stream_base + static_cast<std::uint64_t>(i));
    ds.samples.push_back(gen_sparse_instance(s, ds.scheme, cov, ds.n, ds.d, ds.eps));
  }
  return ds;
}

// ======================= dataset files =======================

namespace {

void put_tensor_flat(std::ostream& os, const Tensor& t) {
  for (double x : t.components()) wire::put_f64(os, x);
}

Tensor get_tensor_flat(std::istream& is, int d, int order) {
  std::size_t n = 1;
  for (int q = 0; q < order; ++q) n *= static_cast<std::size_t>(d);
  std::vector<double> c(n);
  for (auto& x : c) x = wire::get_f64(is);
  return Tensor(d, order, +1, std::move(c));
}

} // namespace

void write_path_dataset(const std::filesystem::path& file, const PathDataset& ds) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::invalid_argument("cannot write " + file.string());
  wire::put_magic(os, "EQD1");
  wire::put_u32(os, 1);
  wire::put_u32(os, static_cast<std::uint32_t>(ds.samples.size()));
  wire::put_u32(os, static_cast<std::uint32_t>(ds.d));
  wire::put_u32(os, static_cast<std::uint32_t>(ds.n_points));
  wire::put_u32(os, static_cast<std::uint32_t>(ds.levels));
  wire::put_u32(os, static_cast<std::uint32_t>(ds.degree));
  for (const auto& s : ds.samples) {
    for (Eigen::Index i = 0; i < s.coeffs.rows(); ++i)
      for (Eigen::Index j = 0; j < s.coeffs.cols(); ++j) wire::put_f64(os, s.coeffs(i, j));
    for (const auto& p : s.points) put_tensor_flat(os, p);
    for (const auto& t : s.truth) put_tensor_flat(os, t);
  }
}

PathDataset read_path_dataset(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::invalid_argument("cannot read " + file.string());
  wire::expect_magic(is, "EQD1");
  if (wire::get_u32(is) != 1) throw std::invalid_argument("not a path-signature dataset");
  PathDataset ds;
  const std::uint32_t count = wire::get_u32(is);
  ds.d = static_cast<int>(wire::get_u32(is));
  ds.n_points = static_cast<int>(wire::get_u32(is));
  ds.levels = static_cast<int>(wire::get_u32(is));
  ds.degree = static_cast<int>(wire::get_u32(is));
  ds.samples.resize(count);
  for (auto& s : ds.samples) {
    s.coeffs.resize(ds.d, ds.degree + 1);
    for (Eigen::Index i = 0; i < s.coeffs.rows(); ++i)
      for (Eigen::Index j = 0; j < s.coeffs.cols(); ++j) s.coeffs(i, j) = wire::get_f64(is);
    for (int p = 0; p < ds.n_points; ++p) s.points.push_back(get_tensor_flat(is, ds.d, 1));
    for (int k = 1; k <= ds.levels; ++k) s.truth.push_back(get_tensor_flat(is, ds.d, k));
  }
  return ds;
}

void write_stress_dataset(const std::filesystem::path& file, const StressDataset& ds) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::invalid_argument("cannot write " + file.string());
  wire::put_magic(os, "EQD1");
  wire::put_u32(os, 2);
  wire::put_u32(os, static_cast<std::uint32_t>(ds.samples.size()));
  wire::put_u32(os, static_cast<std::uint32_t>(ds.d));
  wire::put_f64(os, ds.lambda);
  wire::put_f64(os, ds.mu);
  wire::put_f64(os, ds.eta);
  for (const auto& s : ds.samples) {
    put_tensor_flat(os, s.C);
    put_tensor_flat(os, s.S);
  }
}

StressDataset read_stress_dataset(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::invalid_argument("cannot read " + file.string());
  wire::expect_magic(is, "EQD1");
  if (wire::get_u32(is) != 2) throw std::invalid_argument("not a stress-strain dataset");
  StressDataset ds;
  const std::uint32_t count = wire::get_u32(is);
  ds.d = static_cast<int>(wire::get_u32(is));
  ds.lambda = wire::get_f64(is);
  ds.mu = wire::get_f64(is);
  ds.eta = wire::get_f64(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor c = get_tensor_flat(is, ds.d, 2);
    Tensor s = get_tensor_flat(is, ds.d, 2);
    ds.samples.push_back({std::move(c), std::move(s)});
  }
  return ds;
}

void write_sparse_dataset(const std::filesystem::path& file, const SparseDataset& ds) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::invalid_argument("cannot write " + file.string());
  wire::put_magic(os, "EQD1");
  wire::put_u32(os, 3);
  wire::put_u32(os, static_cast<std::uint32_t>(ds.samples.size()));
  wire::put_u32(os, static_cast<std::uint32_t>(ds.n));
  wire::put_u32(os, static_cast<std::uint32_t>(ds.d));
  wire::put_u32(os, static_cast<std::uint32_t>(ds.scheme));
  wire::put_u32(os, static_cast<std::uint32_t>(ds.covariance));
  wire::put_f64(os, ds.eps);
  for (const auto& s : ds.samples) {
    for (int i = 0; i < ds.n; ++i)
      for (int j = 0; j < ds.d; ++j) wire::put_f64(os, s.basis(i, j));
    for (int i = 0; i < ds.n; ++i) wire::put_f64(os, s.target(i));
  }
}

SparseDataset read_sparse_dataset(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::invalid_argument("cannot read " + file.string());
  wire::expect_magic(is, "EQD1");
  if (wire::get_u32(is) != 3) throw std::invalid_argument("not a sparse-vector dataset");
  SparseDataset ds;
  const std::uint32_t count = wire::get_u32(is);
  ds.n = static_cast<int>(wire::get_u32(is));
  ds.d = static_cast<int>(wire::get_u32(is));
  ds.scheme = static_cast<SparseScheme>(wire::get_u32(is));
  ds.covariance = static_cast<CovarianceKind>(wire::get_u32(is));
  ds.eps = wire::get_f64(is);
  for (std::uint32_t q = 0; q < count; ++q) {
    SparseVectorInstance inst;
    inst.basis.resize(ds.n, ds.d);
    for (int i = 0; i < ds.n; ++i)
      for (int j = 0; j < ds.d; ++j) inst.basis(i, j) = wire::get_f64(is);
    inst.target.resize(ds.n);
    for (int i = 0; i < ds.n; ++i) inst.target(i) = wire::get_f64(is);
    ds.samples.push_back(std::move(inst));
  }
  return ds;
}

int dataset_tag(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::invalid_argument("cannot read " + file.string());
  wire::expect_magic(is, "EQD1");
  return static_cast<int>(wire::get_u32(is));
}

// ======================= metrics =======================

void write_metrics_csv(const std::filesystem::path& file, const std::vector<MetricRow>& rows) {
  std::ofstream os(file);
  if (!os) throw std::invalid_argument("cannot write " + file.string());
  os << "epoch,split,metric,value\n";
  os << std::setprecision(17);
  for (const auto& r : rows)
    os << r.epoch << "," << r.split << "," << r.metric << "," << r.value << "\n";
}

// ======================= checkpoints for experiment models =======================

namespace {

void put_widths(std::ostream& os, const std::vector<int>& widths) {
  wire::put_u32(os, static_cast<std::uint32_t>(widths.size()));
  for (int w : widths) wire::put_u32(os, static_cast<std::uint32_t>(w));
}

std::vector<int> get_widths(std::istream& is) {
  const std::uint32_t n = wire::get_u32(is);
  std::vector<int> w(n);
  for (auto& x : w) x = static_cast<int>(wire::get_u32(is));
  return w;
}

std::vector<int> hidden_of(const std::vector<int>& widths) {
  return {widths.begin() + 1, widths.end() - 1};
}

void put_net_weights(std::ostream& os, std::vector<ParamView> views) {
  std::size_t total = 0;
  for (const auto& v : views) total += v.size;
  wire::put_u32(os, static_cast<std::uint32_t>(total));
  for (const auto& v : views)
    for (std::size_t i = 0; i < v.size; ++i) wire::put_f64(os, v.data[i]);
}

void get_net_weights(std::istream& is, std::vector<ParamView> views) {
  std::size_t total = 0;
  for (const auto& v : views) total += v.size;
  if (wire::get_u32(is) != total) throw std::invalid_argument("checkpoint: weight count mismatch");
  for (auto& v : views)
    for (std::size_t i = 0; i < v.size; ++i) v.data[i] = wire::get_f64(is);
}

void put_terms(std::ostream& os, const std::vector<BasisTerm>& terms) {
  wire::put_u32(os, static_cast<std::uint32_t>(terms.size()));
  for (const auto& t : terms) {
    wire::put_u32(os, static_cast<std::uint32_t>(t.t));
    wire::put_u32(os, static_cast<std::uint32_t>(t.sigma.size()));
    for (int v : t.sigma) wire::put_u32(os, static_cast<std::uint32_t>(v));
    wire::put_u32(os, static_cast<std::uint32_t>(t.J.size()));
    for (int v : t.J) wire::put_u32(os, static_cast<std::uint32_t>(v));
  }
}

void check_terms(std::istream& is, const std::vector<BasisTerm>& terms) {
  if (wire::get_u32(is) != terms.size()) throw std::invalid_argument("checkpoint: term count mismatch");
  for (const auto& t : terms) {
    if (static_cast<int>(wire::get_u32(is)) != t.t) throw std::invalid_argument("checkpoint: term t mismatch");
    if (wire::get_u32(is) != t.sigma.size()) throw std::invalid_argument("checkpoint: sigma size mismatch");
    for (int v : t.sigma)
      if (static_cast<int>(wire::get_u32(is)) != v) throw std::invalid_argument("checkpoint: sigma mismatch");
    if (wire::get_u32(is) != t.J.size()) throw std::invalid_argument("checkpoint: J size mismatch");
    for (int v : t.J)
      if (static_cast<int>(wire::get_u32(is)) != v) throw std::invalid_argument("checkpoint: J mismatch");
  }
}

void put_metric_info(std::ostream& os, const Metric& m) {
  wire::put_u32(os, static_cast<std::uint32_t>(m.kind()));
  wire::put_u32(os, static_cast<std::uint32_t>(m.dim()));
  wire::put_u32(os, static_cast<std::uint32_t>(m.s()));
}

Metric get_metric_info(std::istream& is) {
  const auto kind = static_cast<Metric::Kind>(wire::get_u32(is));
  const int dim = static_cast<int>(wire::get_u32(is));
  const int s = static_cast<int>(wire::get_u32(is));
  switch (kind) {
    case Metric::Kind::Euclidean: return Metric::euclidean(dim);
    case Metric::Kind::Minkowski: return Metric::minkowski(s, dim);
    case Metric::Kind::Symplectic: return Metric::symplectic(dim);
  }
  throw std::invalid_argument("checkpoint: bad metric");
}

// Checkpoint kinds: 1 vec-to-tensor, 2 eigen net, 3 signature model,
// 4 sparse h model, 5 path MLP, 6 stress eigen (net + eigenvalue stats),
// 7 stress MLP (net + component stats), 8 sparse MLP.

struct PathMlpCheckpoint {
  int n = 10, d = 3, levels = 3;
  DenseNet net;
};

struct StressEigenCheckpoint {
  EigenEquivariantModel model;
  double in_mean = 0, in_std = 1, out_mean = 0, out_std = 1;
};

struct StressMlpCheckpoint {
  int d = 3;
  DenseNet net;
  Eigen::VectorXd in_mean, in_std, out_mean, out_std;
};

struct SparseMlpCheckpoint {
  int n = 100, d = 5;
  DenseNet net;
};

void save_signature_model(const std::filesystem::path& file, const SignatureModel& m) {
  std::ofstream os(file, std::ios::binary);
  wire::put_magic(os, "EQC1");
  wire::put_u32(os, 3);
  wire::put_u32(os, static_cast<std::uint32_t>(m.n_inputs()));
  wire::put_u32(os, static_cast<std::uint32_t>(m.levels()));
  put_metric_info(os, m.metric());
  wire::put_u32(os, static_cast<std::uint32_t>(m.net().activation()));
  put_widths(os, m.net().widths());
  for (const auto& lv : m.terms_per_level()) put_terms(os, lv);
  put_net_weights(os, const_cast<SignatureModel&>(m).net().params());
}

SignatureModel load_signature_model(std::istream& is) {
  const int n = static_cast<int>(wire::get_u32(is));
  const int levels = static_cast<int>(wire::get_u32(is));
  const Metric metric = get_metric_info(is);
  const auto act = static_cast<Activation>(wire::get_u32(is));
  const auto widths = get_widths(is);
  Rng dummy(0);
  SignatureModel m(n, levels, metric, hidden_of(widths), act, dummy);
  for (const auto& lv : m.terms_per_level()) check_terms(is, lv);
  get_net_weights(is, m.net().params());
  return m;
}

void save_sparse_model(const std::filesystem::path& file, const SparseHModel& m) {
  std::ofstream os(file, std::ios::binary);
  wire::put_magic(os, "EQC1");
  wire::put_u32(os, 4);
  wire::put_u32(os, static_cast<std::uint32_t>(m.variant()));
  wire::put_u32(os, static_cast<std::uint32_t>(m.n_rows()));
  wire::put_u32(os, static_cast<std::uint32_t>(m.dim()));
  wire::put_u32(os, static_cast<std::uint32_t>(m.net().activation()));
  put_widths(os, m.net().widths());
  put_net_weights(os, const_cast<SparseHModel&>(m).net().params());
}

SparseHModel load_sparse_model(std::istream& is) {
  const auto variant = static_cast<SparseHModel::Variant>(wire::get_u32(is));
  const int n = static_cast<int>(wire::get_u32(is));
  const int d = static_cast<int>(wire::get_u32(is));
  const auto act = static_cast<Activation>(wire::get_u32(is));
  const auto widths = get_widths(is);
  Rng dummy(0);
  SparseHModel m(variant, n, d, hidden_of(widths), act, dummy);
  get_net_weights(is, m.net().params());
  return m;
}

void save_path_mlp(const std::filesystem::path& file, const PathMlpCheckpoint& m) {
  std::ofstream os(file, std::ios::binary);
  wire::put_magic(os, "EQC1");
  wire::put_u32(os, 5);
  wire::put_u32(os, static_cast<std::uint32_t>(m.n));
  wire::put_u32(os, static_cast<std::uint32_t>(m.d));
  wire::put_u32(os, static_cast<std::uint32_t>(m.levels));
  wire::put_u32(os, static_cast<std::uint32_t>(m.net.activation()));
  put_widths(os, m.net.widths());
  put_net_weights(os, const_cast<PathMlpCheckpoint&>(m).net.params());
}

PathMlpCheckpoint load_path_mlp(std::istream& is) {
  PathMlpCheckpoint m;
  m.n = static_cast<int>(wire::get_u32(is));
  m.d = static_cast<int>(wire::get_u32(is));
  m.levels = static_cast<int>(wire::get_u32(is));
  const auto act = static_cast<Activation>(wire::get_u32(is));
  const auto widths = get_widths(is);
  m.net = DenseNet(widths, act);
  get_net_weights(is, m.net.params());
  return m;
}

void save_stress_eigen(const std::filesystem::path& file, const StressEigenCheckpoint& c) {
  std::ofstream os(file, std::ios::binary);
  wire::put_magic(os, "EQC1");
  wire::put_u32(os, 6);
  wire::put_u32(os, static_cast<std::uint32_t>(c.model.dim()));
  wire::put_u32(os, static_cast<std::uint32_t>(c.model.net().activation()));
  put_widths(os, c.model.net().channels());
  wire::put_f64(os, c.in_mean);
  wire::put_f64(os, c.in_std);
  wire::put_f64(os, c.out_mean);
  wire::put_f64(os, c.out_std);
  put_net_weights(os, const_cast<StressEigenCheckpoint&>(c).model.net().params());
}

StressEigenCheckpoint load_stress_eigen(std::istream& is) {
  const int d = static_cast<int>(wire::get_u32(is));
  const auto act = static_cast<Activation>(wire::get_u32(is));
  const auto channels = get_widths(is);
  StressEigenCheckpoint c;
  Rng dummy(0);
  c.model = EigenEquivariantModel(d, hidden_of(channels), act, dummy);
  c.in_mean = wire::get_f64(is);
  c.in_std = wire::get_f64(is);
  c.out_mean = wire::get_f64(is);
  c.out_std = wire::get_f64(is);
  get_net_weights(is, c.model.net().params());
  return c;
}

void save_stress_mlp(const std::filesystem::path& file, const StressMlpCheckpoint& c) {
  std::ofstream os(file, std::ios::binary);
  wire::put_magic(os, "EQC1");
  wire::put_u32(os, 7);
  wire::put_u32(os, static_cast<std::uint32_t>(c.d));
  wire::put_u32(os, static_cast<std::uint32_t>(c.net.activation()));
  put_widths(os, c.net.widths());
  for (const auto* v : {&c.in_mean, &c.in_std, &c.out_mean, &c.out_std})
    for (Eigen::Index i = 0; i < v->size(); ++i) wire::put_f64(os, (*v)(i));
  put_net_weights(os, const_cast<StressMlpCheckpoint&>(c).net.params());
}

StressMlpCheckpoint load_stress_mlp(std::istream& is) {
  StressMlpCheckpoint c;
  c.d = static_cast<int>(wire::get_u32(is));
  const auto act = static_cast<Activation>(wire::get_u32(is));
  const auto widths = get_widths(is);
  c.net = DenseNet(widths, act);
  const int dd = c.d * c.d;
  for (auto* v : {&c.in_mean, &c.in_std, &c.out_mean, &c.out_std}) {
    v->resize(dd);
    for (int i = 0; i < dd; ++i) (*v)(i) = wire::get_f64(is);
  }
  get_net_weights(is, c.net.params());
  return c;
}

void save_sparse_mlp(const std::filesystem::path& file, const SparseMlpCheckpoint& c) {
  std::ofstream os(file, std::ios::binary);
  wire::put_magic(os, "EQC1");
  wire::put_u32(os, 8);
  wire::put_u32(os, static_cast<std::uint32_t>(c.n));
  wire::put_u32(os, static_cast<std::uint32_t>(c.d));
  wire::put_u32(os, static_cast<std::uint32_t>(c.net.activation()));
  put_widths(os, c.net.widths());
  put_net_weights(os, const_cast<SparseMlpCheckpoint&>(c).net.params());
}

SparseMlpCheckpoint load_sparse_mlp(std::istream& is) {
  SparseMlpCheckpoint c;
  c.n = static_cast<int>(wire::get_u32(is));
  c.d = static_cast<int>(wire::get_u32(is));
  const auto act = static_cast<Activation>(wire::get_u32(is));
  const auto widths = get_widths(is);
  c.net = DenseNet(widths, act);
  get_net_weights(is, c.net.params());
  return c;
}

} // namespace

// ======================= gen =======================

std::vector<std::filesystem::path> gen_experiment(const Config& cfg,
                                                  const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  const std::string experiment = cfg.get("experiment");
  const auto seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 0));
  std::vector<std::filesystem::path> files;

  const int n_train = static_cast<int>(cfg.get_int_or("train", experiment == "path_signature" ? 1024 : 2000));
  const int n_val = static_cast<int>(cfg.get_int_or("val", experiment == "path_signature" ? 256 : 500));
  const int n_test = static_cast<int>(cfg.get_int_or("test", experiment == "path_signature" ? 256 : 500));

  if (experiment == "path_signature") {
    write_path_dataset(out_dir / "train.eqd", gen_path_dataset(cfg, seed, kTrainStream, n_train));
    write_path_dataset(out_dir / "val.eqd", gen_path_dataset(cfg, seed, kValStream, n_val));
    write_path_dataset(out_dir / "test.eqd", gen_path_dataset(cfg, seed, kTestStream, n_test));
  } else if (experiment == "stress_strain") {
    write_stress_dataset(out_dir / "train.eqd", gen_stress_dataset(cfg, seed, kTrainStream, n_train));
    write_stress_dataset(out_dir / "val.eqd", gen_stress_dataset(cfg, seed, kValStream, n_val));
    write_stress_dataset(out_dir / "test.eqd", gen_stress_dataset(cfg, seed, kTestStream, n_test));
  } else if (experiment == "sparse_vector") {
    write_sparse_dataset(out_dir / "train.eqd", gen_sparse_dataset(cfg, seed, kTrainStream, n_train));
    write_sparse_dataset(out_dir / "val.eqd", gen_sparse_dataset(cfg, seed, kValStream, n_val));
    write_sparse_dataset(out_dir / "test.eqd", gen_sparse_dataset(cfg, seed, kTestStream, n_test));
  } else {
    throw std::invalid_argument("unknown experiment: " + experiment);
  }
  for (const char* name : {"train.eqd", "val.eqd", "test.eqd"}) files.push_back(out_dir / name);

  std::ofstream cfg_out(out_dir / "resolved.cfg");
  cfg_out << cfg.to_string();
  files.push_back(out_dir / "resolved.cfg");
  return files;
}

// ======================= path-signature training =======================

namespace {

double path_mlp_metric(const PathMlpCheckpoint& m, const PathDataset& ds, int metric_d);

std::vector<Tensor> path_mlp_predict(const DenseNet& net, const PathSample& s, int d, int levels) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(s.points.size()) * d);
  for (std::size_t i = 0; i < s.points.size(); ++i)
    for (int j = 0; j < d; ++j)
      x(static_cast<Eigen::Index>(i) * d + j) = s.points[i].at_offset(static_cast<std::size_t>(j));
  const Eigen::VectorXd y = net.forward(x);
  std::vector<Tensor> out;
  Eigen::Index base = 0;
  std::size_t dk = 1;
  for (int k = 1; k <= levels; ++k) {
    dk *= static_cast<std::size_t>(d);
    std::vector<double> c(y.data() + base, y.data() + base + static_cast<Eigen::Index>(dk));
    out.emplace_back(d, k, +1, std::move(c));
    base += static_cast<Eigen::Index>(dk);
  }
  return out;
}

// dLoss/dpred for the level-weighted metric (1/M) sum_k d^-k ||S_k - P_k||^2.
std::vector<Tensor> signature_metric_grad(const std::vector<Tensor>& truth,
                                          const std::vector<Tensor>& pred, int metric_d) {
  std::vector<Tensor> g;
  const int M = static_cast<int>(truth.size());
  double dk = 1.0;
  for (int k = 1; k <= M; ++k) {
    dk *= static_cast<double>(metric_d);
    g.push_back(scale(2.0 / (dk * M), sub(pred[static_cast<std::size_t>(k - 1)],
                                          truth[static_cast<std::size_t>(k - 1)])));
  }
  return g;
}

double signature_model_metric(const SignatureModel& m, const PathDataset& ds, int metric_d) {
  double total = 0.0;
  for (const auto& s : ds.samples) total += signature_metric(s.truth, m.forward(s.points), metric_d);
  return total / static_cast<double>(ds.samples.size());
}

double discrete_baseline_metric(const PathDataset& ds, int metric_d) {
  double total = 0.0;
  for (const auto& s : ds.samples)
    total += signature_metric(s.truth, discrete_signature_baseline(s.points, ds.levels), metric_d);
  return total / static_cast<double>(ds.samples.size());
}

PathDataset augment_path_dataset(const PathDataset& ds, const Metric& metric, int copies,
                                 const Rng& base) {
  PathDataset out = ds;
  out.samples.clear();
  std::uint64_t stream = kAugmentStream;
  for (const auto& s : ds.samples) {
    for (int c = 0; c < copies; ++c) {
      Rng r = base.substream(stream++);
      const GroupElement g = sample_group_element(metric, r);
      PathSample t;
      t.coeffs = s.coeffs;
      for (const auto& p : s.points) t.points.push_back(group_act(g, p));
      for (const auto& sk : s.truth) t.truth.push_back(group_act(g, sk));
      out.samples.push_back(std::move(t));
    }
  }
  return out;
}

double path_mlp_metric(const PathMlpCheckpoint& m, const PathDataset& ds, int metric_d) {
  double total = 0.0;
  for (const auto& s : ds.samples)
    total += signature_metric(s.truth, path_mlp_predict(m.net, s, ds.d, ds.levels), metric_d);
  return total / static_cast<double>(ds.samples.size());
}

int match_width_by_params(int in_dim, int out_dim, int layers, std::size_t target) {
  int best_w = 8;
  std::size_t best_err = static_cast<std::size_t>(-1);
  for (int w = 8; w <= 1024; ++w) {
    std::size_t p = static_cast<std::size_t>(in_dim) * w + w;
    for (int l = 1; l < layers; ++l) p += static_cast<std::size_t>(w) * w + w;
    p += static_cast<std::size_t>(w) * out_dim + out_dim;
    const std::size_t err = p > target ? p - target : target - p;
    if (err < best_err) {
      best_err = err;
      best_w = w;
    }
  }
  return best_w;
}

TrainResult train_path_signature(const Config& cfg, const std::filesystem::path& out_dir) {
  const auto seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 0));
  const Metric metric = path_metric_from(cfg);
  const int metric_d = static_cast<int>(cfg.get_int_or("metric_d", metric.dim()));
  const std::string model_kind = cfg.get_or("model", "equivariant");

  const int n_train = static_cast<int>(cfg.get_int_or("train", 1024));
  const int n_val = static_cast<int>(cfg.get_int_or("val", 256));
  const int n_test = static_cast<int>(cfg.get_int_or("test", 256));
  PathDataset train = gen_path_dataset(cfg, seed, kTrainStream, n_train);
  const PathDataset val = gen_path_dataset(cfg, seed, kValStream, n_val);
  const PathDataset test = gen_path_dataset(cfg, seed, kTestStream, n_test);

  const int epochs = static_cast<int>(cfg.get_int_or("epochs", 200));
  const int batch = static_cast<int>(cfg.get_int_or("batch", 32));
  const Rng base(seed);
  Rng init = base.substream(kInitStream);

  std::vector<MetricRow> rows;
  TrainResult result;
  result.extra["discrete_baseline"] = discrete_baseline_metric(test, metric_d);

  const std::vector<int> hidden = parse_widths(cfg.get_or("widths", "32,32,32"));

  if (model_kind == "equivariant") {
    SignatureModel model(train.n_points, train.levels, metric, hidden, Activation::Gelu, init);
    OptimizerConfig ocfg;
    ocfg.lr = cfg.get_double_or("lr", 5e-4);
    ocfg.weight_decay = cfg.get_double_or("wd", 1e-2);
    ocfg.schedule = Schedule::Cosine;
    const int steps_per_epoch = (n_train + batch - 1) / batch;
    ocfg.total_steps = static_cast<std::int64_t>(steps_per_epoch) * epochs;
    Optimizer opt(ocfg);

    SignatureModel::Workspace ws;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      Rng shuffle = base.substream(kShuffleStream + static_cast<std::uint64_t>(epoch));
      const auto order = shuffled_indices(n_train, shuffle);
      double epoch_loss = 0.0;
      for (int start = 0; start < n_train; start += batch) {
        const int stop = std::min(n_train, start + batch);
        model.net().zero_grads();
        for (int q = start; q < stop; ++q) {
          const PathSample& s = train.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(q)])];
          const auto pred = model.forward(s.points, ws);
          epoch_loss += signature_metric(s.truth, pred, metric_d);
          model.backward(s.points, signature_metric_grad(s.truth, pred, metric_d), ws);
        }
        scale_grads(model.net().grads(), 1.0 / static_cast<double>(stop - start));
        opt.step(model.net().params(), model.net().grads());
      }
      epoch_loss /= static_cast<double>(n_train);
      check_finite_loss(epoch_loss);
      rows.push_back({epoch, "train", "loss", epoch_loss});
      rows.push_back({epoch, "val", "loss", signature_model_metric(model, val, metric_d)});
    }
    result.final_test_metric = signature_model_metric(model, test, metric_d);
    result.checkpoint = out_dir / "model.eqc";
    save_signature_model(result.checkpoint, model);
  } else if (model_kind == "mlp_width" || model_kind == "mlp_params" ||
             model_kind == "mlp_augmented") {
    if (model_kind == "mlp_augmented")
      train = augment_path_dataset(train, metric, static_cast<int>(cfg.get_int_or("augment", 4)), base);
    const int n_eff = static_cast<int>(train.samples.size());

    const int in_dim = train.n_points * train.d;
    int out_dim = 0;
    std::size_t dk = 1;
    for (int k = 1; k <= train.levels; ++k) {
      dk *= static_cast<std::size_t>(train.d);
      out_dim += static_cast<int>(dk);
    }
    std::vector<int> widths;
    widths.push_back(in_dim);
    if (model_kind == "mlp_width") {
      for (int h : hidden) widths.push_back(h);
    } else {
      SignatureModel ref(train.n_points, train.levels, metric, hidden, Activation::Gelu, init);
      const int w = match_width_by_params(in_dim, out_dim, static_cast<int>(hidden.size()),
                                          ref.net().param_count());
      for (std::size_t l = 0; l < hidden.size(); ++l) widths.push_back(w);
    }
    widths.push_back(out_dim);
    PathMlpCheckpoint mlp;
    mlp.n = train.n_points;
    mlp.d = train.d;
    mlp.levels = train.levels;
    mlp.net = DenseNet(widths, Activation::Gelu);
    mlp.net.init(init);

    OptimizerConfig ocfg;
    ocfg.lr = cfg.get_double_or("lr", model_kind == "mlp_width" ? 5e-3 : 1e-3);
    ocfg.weight_decay = cfg.get_double_or("wd", 1e-2);
    ocfg.schedule = Schedule::Cosine;
    const int steps_per_epoch = (n_eff + batch - 1) / batch;
    ocfg.total_steps = static_cast<std::int64_t>(steps_per_epoch) * epochs;
    Optimizer opt(ocfg);

    for (int epoch = 0; epoch < epochs; ++epoch) {
      Rng shuffle = base.substream(kShuffleStream + static_cast<std::uint64_t>(epoch));
      const auto order = shuffled_indices(n_eff, shuffle);
      double epoch_loss = 0.0;
      for (int start = 0; start < n_eff; start += batch) {
        const int stop = std::min(n_eff, start + batch);
        const int bsz = stop - start;
        Eigen::MatrixXd x(bsz, in_dim);
        for (int q = 0; q < bsz; ++q) {
          const PathSample& s =
              train.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(start + q)])];
          for (std::size_t i = 0; i < s.points.size(); ++i)
            for (int j = 0; j < train.d; ++j)
              x(q, static_cast<Eigen::Index>(i) * train.d + j) =
                  s.points[i].at_offset(static_cast<std::size_t>(j));
        }
        DenseNet::Cache cache;
        const Eigen::MatrixXd y = mlp.net.forward_batch(x, cache);
        Eigen::MatrixXd dy(bsz, out_dim);
        for (int q = 0; q < bsz; ++q) {
          const PathSample& s =
              train.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(start + q)])];
          Eigen::Index basecol = 0;
          double dkf = 1.0;
          double sample_loss = 0.0;
          for (int k = 1; k <= train.levels; ++k) {
            dkf *= static_cast<double>(metric_d);
            const auto& tk = s.truth[static_cast<std::size_t>(k - 1)];
            const auto nk = static_cast<Eigen::Index>(tk.size());
            for (Eigen::Index c = 0; c < nk; ++c) {
              const double diff = y(q, basecol + c) - tk.at_offset(static_cast<std::size_t>(c));
              sample_loss += diff * diff / dkf;
              dy(q, basecol + c) = 2.0 * diff / (dkf * train.levels);
            }
            basecol += nk;
          }
          epoch_loss += sample_loss / train.levels;
        }
        mlp.net.zero_grads();
        mlp.net.backward_batch(cache, dy);
        scale_grads(mlp.net.grads(), 1.0 / static_cast<double>(bsz));
        opt.step(mlp.net.params(), mlp.net.grads());
      }
      epoch_loss /= static_cast<double>(n_eff);
      check_finite_loss(epoch_loss);
      rows.push_back({epoch, "train", "loss", epoch_loss});
      rows.push_back({epoch, "val", "loss", path_mlp_metric(mlp, val, metric_d)});
    }
    result.final_test_metric = path_mlp_metric(mlp, test, metric_d);
    result.checkpoint = out_dir / "model.eqc";
    save_path_mlp(result.checkpoint, mlp);
  } else {
    throw std::invalid_argument("path_signature: unknown model '" + model_kind + "'");
  }

  rows.push_back({epochs, "test", "loss", result.final_test_metric});
  result.metrics_csv = out_dir / "metrics.csv";
  write_metrics_csv(result.metrics_csv, rows);
  return result;
}

// ======================= stress-strain training =======================

Eigen::MatrixXd tensor_to_matrix(const Tensor& t) {
  const int d = t.dim();
  Eigen::MatrixXd m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = t.at_offset(static_cast<std::size_t>(i) * d + j);
  return m;
}

struct EigStats {
  double mean = 0, std = 1;
};

EigStats eigenvalue_stats(const StressDataset& ds, bool strain) {
  double sum = 0, sq = 0;
  long count = 0;
  for (const auto& s : ds.samples) {
    const Eigen::MatrixXd m = tensor_to_matrix(strain ? s.C : s.S);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    for (int i = 0; i < m.rows(); ++i) {
      sum += es.eigenvalues()(i);
      sq += es.eigenvalues()(i) * es.eigenvalues()(i);
      ++count;
    }
  }
  EigStats st;
  st.mean = sum / static_cast<double>(count);
  st.std = std::sqrt(std::max(1e-300, sq / static_cast<double>(count) - st.mean * st.mean));
  return st;
}

double stress_eigen_metric(const StressEigenCheckpoint& c, const StressDataset& ds) {
  const int d = ds.d;
  double total = 0.0;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
  for (const auto& s : ds.samples) {
    const Eigen::MatrixXd cin = (tensor_to_matrix(s.C) - c.in_mean * eye) / c.in_std;
    const Eigen::MatrixXd pred = c.out_std * c.model.forward_sym(cin) + c.out_mean * eye;
    total += (pred - tensor_to_matrix(s.S)).squaredNorm();
  }
  return total / static_cast<double>(ds.samples.size());
}

double stress_mlp_metric(const StressMlpCheckpoint& c, const StressDataset& ds) {
  const int dd = ds.d * ds.d;
  double total = 0.0;
  for (const auto& s : ds.samples) {
    Eigen::VectorXd x(dd);
    for (int q = 0; q < dd; ++q)
      x(q) = (s.C.at_offset(static_cast<std::size_t>(q)) - c.in_mean(q)) / c.in_std(q);
    const Eigen::VectorXd y = c.net.forward(x);
    double err = 0.0;
    for (int q = 0; q < dd; ++q) {
      const double pred = y(q) * c.out_std(q) + c.out_mean(q);
      const double diff = pred - s.S.at_offset(static_cast<std::size_t>(q));
      err += diff * diff;
    }
    total += err;
  }
  return total / static_cast<double>(ds.samples.size());
}

StressDataset augment_stress_dataset(const StressDataset& ds, int copies, const Rng& base) {
  StressDataset out = ds;
  out.samples.clear();
  std::uint64_t stream = kAugmentStream;
  for (const auto& s : ds.samples) {
    for (int c = 0; c < copies; ++c) {
      Rng r = base.substream(stream++);
      const GroupElement g = sample_orthogonal(ds.d, r);
      out.samples.push_back({group_act(g, s.C), group_act(g, s.S)});
    }
  }
  return out;
}

TrainResult train_stress_strain(const Config& cfg, const std::filesystem::path& out_dir) {
  const auto seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 0));
  const std::string model_kind = cfg.get_or("model", "eigen");

  const int n_train = static_cast<int>(cfg.get_int_or("train", 2000));
  const int n_val = static_cast<int>(cfg.get_int_or("val", 500));
  const int n_test = static_cast<int>(cfg.get_int_or("test", 500));
  StressDataset train = gen_stress_dataset(cfg, seed, kTrainStream, n_train);
  const StressDataset val = gen_stress_dataset(cfg, seed, kValStream, n_val);
  const StressDataset test = gen_stress_dataset(cfg, seed, kTestStream, n_test);
  const int d = train.d;
  const int dd = d * d;

  const int epochs = static_cast<int>(cfg.get_int_or("epochs", 400));
  const int batch = static_cast<int>(cfg.get_int_or("batch", 256));
  const Rng base(seed);
  Rng init = base.substream(kInitStream);

  std::vector<MetricRow> rows;
  TrainResult result;

  if (model_kind == "eigen") {
    const EigStats in_st = eigenvalue_stats(train, true);
    const EigStats out_st = eigenvalue_stats(train, false);
    StressEigenCheckpoint ckpt;
    ckpt.model = EigenEquivariantModel(
        d, parse_widths(cfg.get_or("widths", "23,23,23")), Activation::Gelu, init);
    ckpt.in_mean = in_st.mean;
    ckpt.in_std = in_st.std;
    ckpt.out_mean = out_st.mean;
    ckpt.out_std = out_st.std;

    OptimizerConfig ocfg;
    ocfg.lr = cfg.get_double_or("lr", 1e-3);
    ocfg.weight_decay = cfg.get_double_or("wd", 1e-2);
    ocfg.schedule = Schedule::Cosine;
    ocfg.total_steps = static_cast<std::int64_t>((n_train + batch - 1) / batch) * epochs;
    Optimizer opt(ocfg);

    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
    for (int epoch = 0; epoch < epochs; ++epoch) {
      Rng shuffle = base.substream(kShuffleStream + static_cast<std::uint64_t>(epoch));
      const auto order = shuffled_indices(n_train, shuffle);
      double epoch_loss = 0.0;
      for (int start = 0; start < n_train; start += batch) {
        const int stop = std::min(n_train, start + batch);
        ckpt.model.net().zero_grads();
        for (int q = start; q < stop; ++q) {
          const auto& s = train.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(q)])];
          const Eigen::MatrixXd cin = (tensor_to_matrix(s.C) - ckpt.in_mean * eye) / ckpt.in_std;
          const Eigen::MatrixXd starget =
              (tensor_to_matrix(s.S) - ckpt.out_mean * eye) / ckpt.out_std;
          const Eigen::MatrixXd pred = ckpt.model.forward_sym(cin);
          const Eigen::MatrixXd diff = pred - starget;
          epoch_loss += diff.squaredNorm();
          ckpt.model.backward(cin, 2.0 * diff);
        }
        scale_grads(ckpt.model.net().grads(), 1.0 / static_cast<double>(stop - start));
        opt.step(ckpt.model.net().params(), ckpt.model.net().grads());
      }
      epoch_loss /= static_cast<double>(n_train);
      check_finite_loss(epoch_loss);
      rows.push_back({epoch, "train", "loss", epoch_loss});
      rows.push_back({epoch, "val", "mse", stress_eigen_metric(ckpt, val)});
    }
    result.final_test_metric = stress_eigen_metric(ckpt, test);
    result.checkpoint = out_dir / "model.eqc";
    save_stress_eigen(result.checkpoint, ckpt);
  } else if (model_kind == "mlp" || model_kind == "mlp_augmented") {
    if (model_kind == "mlp_augmented")
      train = augment_stress_dataset(train, static_cast<int>(cfg.get_int_or("augment", 4)), base);
    const int n_eff = static_cast<int>(train.samples.size());

    StressMlpCheckpoint ckpt;
    ckpt.d = d;
    ckpt.in_mean = Eigen::VectorXd::Zero(dd);
    ckpt.in_std = Eigen::VectorXd::Ones(dd);
    ckpt.out_mean = Eigen::VectorXd::Zero(dd);
    ckpt.out_std = Eigen::VectorXd::Ones(dd);
    for (int q = 0; q < dd; ++q) {
      double csum = 0, csq = 0, ssum = 0, ssq = 0;
      for (const auto& s : train.samples) {
        csum += s.C.at_offset(static_cast<std::size_t>(q));
        csq += s.C.at_offset(static_cast<std::size_t>(q)) * s.C.at_offset(static_cast<std::size_t>(q));
        ssum += s.S.at_offset(static_cast<std::size_t>(q));
        ssq += s.S.at_offset(static_cast<std::size_t>(q)) * s.S.at_offset(static_cast<std::size_t>(q));
      }
      const double nn = static_cast<double>(n_eff);
      ckpt.in_mean(q) = csum / nn;
      ckpt.in_std(q) = std::sqrt(std::max(1e-12, csq / nn - ckpt.in_mean(q) * ckpt.in_mean(q)));
      ckpt.out_mean(q) = ssum / nn;
      ckpt.out_std(q) = std::sqrt(std::max(1e-12, ssq / nn - ckpt.out_mean(q) * ckpt.out_mean(q)));
    }

    std::vector<int> widths;
    widths.push_back(dd);
    for (int h : parse_widths(cfg.get_or("widths", "32,32,32"))) widths.push_back(h);
    widths.push_back(dd);
    ckpt.net = DenseNet(widths, Activation::Gelu);
    ckpt.net.init(init);

    OptimizerConfig ocfg;
    ocfg.lr = cfg.get_double_or("lr", 3e-3);
    ocfg.weight_decay = cfg.get_double_or("wd", 1e-2);
    ocfg.schedule = Schedule::Cosine;
    ocfg.total_steps = static_cast<std::int64_t>((n_eff + batch - 1) / batch) * epochs;
    Optimizer opt(ocfg);

    for (int epoch = 0; epoch < epochs; ++epoch) {
      Rng shuffle = base.substream(kShuffleStream + static_cast<std::uint64_t>(epoch));
      const auto order = shuffled_indices(n_eff, shuffle);
      double epoch_loss = 0.0;
      for (int start = 0; start < n_eff; start += batch) {
        const int stop = std::min(n_eff, start + batch);
        const int bsz = stop - start;
        Eigen::MatrixXd x(bsz, dd), target(bsz, dd);
        for (int q = 0; q < bsz; ++q) {
          const auto& s =
              train.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(start + q)])];
          for (int c = 0; c < dd; ++c) {
            x(q, c) = (s.C.at_offset(static_cast<std::size_t>(c)) - ckpt.in_mean(c)) / ckpt.in_std(c);
            target(q, c) =
                (s.S.at_offset(static_cast<std::size_t>(c)) - ckpt.out_mean(c)) / ckpt.out_std(c);
          }
        }
        DenseNet::Cache cache;
        const Eigen::MatrixXd y = ckpt.net.forward_batch(x, cache);
        const Eigen::MatrixXd diff = y - target;
        epoch_loss += diff.squaredNorm();
        ckpt.net.zero_grads();
        ckpt.net.backward_batch(cache, 2.0 * diff);
        scale_grads(ckpt.net.grads(), 1.0 / static_cast<double>(bsz));
        opt.step(ckpt.net.params(), ckpt.net.grads());
      }
      epoch_loss /= static_cast<double>(n_eff);
      check_finite_loss(epoch_loss);
      rows.push_back({epoch, "train", "loss", epoch_loss});
      rows.push_back({epoch, "val", "mse", stress_mlp_metric(ckpt, val)});
    }
    result.final_test_metric = stress_mlp_metric(ckpt, test);
    result.checkpoint = out_dir / "model.eqc";
    save_stress_mlp(result.checkpoint, ckpt);
  } else {
    throw std::invalid_argument("stress_strain: unknown model '" + model_kind + "'");
  }

  rows.push_back({epochs, "test", "mse", result.final_test_metric});
  result.metrics_csv = out_dir / "metrics.csv";
  write_metrics_csv(result.metrics_csv, rows);
  return result;
}

// ======================= sparse-vector training =======================

double sparse_model_metric(const SparseHModel& m, const SparseDataset& ds) {
  double total = 0.0;
  for (const auto& s : ds.samples)
    total += alignment(s.target, estimate_sparse(s.basis, m.h(s.basis)));
  return total / static_cast<double>(ds.samples.size());
}

double sparse_sos_metric(const SparseDataset& ds, bool mao) {
  double total = 0.0;
  for (const auto& s : ds.samples) {
    const Eigen::MatrixXd h = mao ? sos_h_mao(s.basis) : sos_h_hopkins(s.basis);
    total += alignment(s.target, estimate_sparse(s.basis, h));
  }
  return total / static_cast<double>(ds.samples.size());
}

Eigen::MatrixXd sparse_mlp_h(const DenseNet& net, const Eigen::MatrixXd& basis) {
  const int n = static_cast<int>(basis.rows());
  const int d = static_cast<int>(basis.cols());
  Eigen::VectorXd x(n * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i * d + j) = basis(i, j);
  const Eigen::VectorXd y = net.forward(x);
  Eigen::MatrixXd h(d, d);
  int q = 0;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      h(i, j) = y(q);
      h(j, i) = y(q);
      ++q;
    }
  return h;
}

double sparse_mlp_metric(const SparseMlpCheckpoint& c, const SparseDataset& ds) {
  double total = 0.0;
  for (const auto& s : ds.samples)
    total += alignment(s.target, estimate_sparse(s.basis, sparse_mlp_h(c.net, s.basis)));
  return total / static_cast<double>(ds.samples.size());
}

TrainResult train_sparse_vector(const Config& cfg, const std::filesystem::path& out_dir) {
  const auto seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 0));
  const std::string model_kind = cfg.get_or("model", "full");

  const int n_train = static_cast<int>(cfg.get_int_or("train", 2000));
  const int n_val = static_cast<int>(cfg.get_int_or("val", 500));
  const int n_test = static_cast<int>(cfg.get_int_or("test", 500));
  const SparseDataset train = gen_sparse_dataset(cfg, seed, kTrainStream, n_train);
  const SparseDataset val = gen_sparse_dataset(cfg, seed, kValStream, n_val);
  const SparseDataset test = gen_sparse_dataset(cfg, seed, kTestStream, n_test);
  const int n = train.n, d = train.d;

  const int epochs = static_cast<int>(cfg.get_int_or("epochs", 30));
  const int batch = static_cast<int>(cfg.get_int_or("batch", 100));
  const Rng base(seed);
  Rng init = base.substream(kInitStream);

  std::vector<MetricRow> rows;
  TrainResult result;
  result.extra["sos_hopkins"] = sparse_sos_metric(test, false);
  result.extra["sos_mao"] = sparse_sos_metric(test, true);

  const std::vector<int> hidden = parse_widths(cfg.get_or("widths", "128,128"));

  if (model_kind == "full" || model_kind == "diag") {
    const auto variant =
        model_kind == "full" ? SparseHModel::Variant::Full : SparseHModel::Variant::Diag;
    SparseHModel model(variant, n, d, hidden, Activation::ReLU, init);

    OptimizerConfig ocfg;
    ocfg.lr = cfg.get_double_or("lr", model_kind == "full" ? 3e-4 : 5e-4);
    ocfg.schedule = Schedule::Exponential;
    ocfg.decay = cfg.get_double_or("decay", 0.999);
    Optimizer opt(ocfg);

    const int feat_dim = model.net().input_dim();
    for (int epoch = 0; epoch < epochs; ++epoch) {
      Rng shuffle = base.substream(kShuffleStream + static_cast<std::uint64_t>(epoch));
      const auto order = shuffled_indices(n_train, shuffle);
      double epoch_loss = 0.0;
      for (int start = 0; start < n_train; start += batch) {
        const int stop = std::min(n_train, start + batch);
        const int bsz = stop - start;
        Eigen::MatrixXd phi(bsz, feat_dim);
        for (int q = 0; q < bsz; ++q)
          phi.row(q) = model
                           .features(train.samples[static_cast<std::size_t>(
                                                       order[static_cast<std::size_t>(start + q)])]
                                         .basis)
                           .transpose();
        DenseNet::Cache cache;
        const Eigen::MatrixXd coeff = model.net().forward_batch(phi, cache);
        Eigen::MatrixXd dcoeff(bsz, coeff.cols());
        for (int q = 0; q < bsz; ++q) {
          const auto& inst =
              train.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(start + q)])];
          const Eigen::MatrixXd hm =
              SparseHModel::assemble(variant, inst.basis, coeff.row(q).transpose());
          double loss = 0.0;
          const Eigen::MatrixXd gh = sparse_loss_h_gradient(inst, hm, &loss);
          epoch_loss += loss;
          int idx = 0;
          if (variant == SparseHModel::Variant::Full) {
            for (int i = 0; i < n; ++i) {
              const Eigen::VectorXd gai = gh * inst.basis.row(i).transpose();
              for (int j = i; j < n; ++j) dcoeff(q, idx++) = inst.basis.row(j).dot(gai);
            }
          } else {
            for (int i = 0; i < n; ++i) {
              const Eigen::VectorXd ai = inst.basis.row(i).transpose();
              dcoeff(q, idx++) = ai.dot(gh * ai);
            }
          }
          dcoeff(q, idx) = gh.trace();
        }
        model.net().zero_grads();
        model.net().backward_batch(cache, dcoeff);
        scale_grads(model.net().grads(), 1.0 / static_cast<double>(bsz));
        opt.step(model.net().params(), model.net().grads());
      }
      epoch_loss /= static_cast<double>(n_train);
      check_finite_loss(epoch_loss);
      rows.push_back({epoch, "train", "loss", epoch_loss});
      rows.push_back({epoch, "val", "alignment", sparse_model_metric(model, val)});
    }
    result.final_test_metric = sparse_model_metric(model, test);
    result.checkpoint = out_dir / "model.eqc";
    save_sparse_model(result.checkpoint, model);
  } else if (model_kind == "mlp") {
    SparseMlpCheckpoint ckpt;
    ckpt.n = n;
    ckpt.d = d;
    std::vector<int> widths;
    widths.push_back(n * d);
    for (int h : hidden) widths.push_back(h);
    widths.push_back(d * (d + 1) / 2);
    ckpt.net = DenseNet(widths, Activation::ReLU);
    ckpt.net.init(init);

    OptimizerConfig ocfg;
    ocfg.lr = cfg.get_double_or("lr", 1e-3);
    ocfg.schedule = Schedule::Exponential;
    ocfg.decay = cfg.get_double_or("decay", 0.999);
    Optimizer opt(ocfg);

    for (int epoch = 0; epoch < epochs; ++epoch) {
      Rng shuffle = base.substream(kShuffleStream + static_cast<std::uint64_t>(epoch));
      const auto order = shuffled_indices(n_train, shuffle);
      double epoch_loss = 0.0;
      for (int start = 0; start < n_train; start += batch) {
        const int stop = std::min(n_train, start + batch);
        const int bsz = stop - start;
        Eigen::MatrixXd x(bsz, n * d);
        for (int q = 0; q < bsz; ++q) {
          const auto& inst =
              train.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(start + q)])];
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) x(q, i * d + j) = inst.basis(i, j);
        }
        DenseNet::Cache cache;
        const Eigen::MatrixXd y = ckpt.net.forward_batch(x, cache);
        Eigen::MatrixXd dy(bsz, y.cols());
        for (int q = 0; q < bsz; ++q) {
          const auto& inst =
              train.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(start + q)])];
          Eigen::MatrixXd hm(d, d);
          int idx = 0;
          for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) {
              hm(i, j) = y(q, idx);
              hm(j, i) = y(q, idx);
              ++idx;
            }
          double loss = 0.0;
          const Eigen::MatrixXd gh = sparse_loss_h_gradient(inst, hm, &loss);
          epoch_loss += loss;
          idx = 0;
          for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) {
              dy(q, idx) = (i == j) ? gh(i, i) : 2.0 * gh(i, j);
              ++idx;
            }
        }
        ckpt.net.zero_grads();
        ckpt.net.backward_batch(cache, dy);
        scale_grads(ckpt.net.grads(), 1.0 / static_cast<double>(bsz));
        opt.step(ckpt.net.params(), ckpt.net.grads());
      }
      epoch_loss /= static_cast<double>(n_train);
      check_finite_loss(epoch_loss);
      rows.push_back({epoch, "train", "loss", epoch_loss});
      rows.push_back({epoch, "val", "alignment", sparse_mlp_metric(ckpt, val)});
    }
    result.final_test_metric = sparse_mlp_metric(ckpt, test);
    result.checkpoint = out_dir / "model.eqc";
    save_sparse_mlp(result.checkpoint, ckpt);
  } else {
    throw std::invalid_argument("sparse_vector: unknown model '" + model_kind + "'");
  }

  rows.push_back({epochs, "test", "alignment", result.final_test_metric});
  result.metrics_csv = out_dir / "metrics.csv";
  write_metrics_csv(result.metrics_csv, rows);
  return result;
}

} // namespace

// ======================= drivers =======================

TrainResult train_experiment(const Config& cfg, const std::filesystem::path& out_dir) {
  ensure_dir(out_dir);
  const std::string experiment = cfg.get("experiment");
  if (experiment == "path_signature") return train_path_signature(cfg, out_dir);
  if (experiment == "stress_strain") return train_stress_strain(cfg, out_dir);
  if (experiment == "sparse_vector") return train_sparse_vector(cfg, out_dir);
  throw std::invalid_argument("unknown experiment: " + experiment);
}

double eval_experiment(const std::filesystem::path& checkpoint,
                       const std::filesystem::path& dataset) {
  std::ifstream is(checkpoint, std::ios::binary);
  if (!is) throw std::invalid_argument("cannot read checkpoint " + checkpoint.string());
  wire::expect_magic(is, "EQC1");
  const std::uint32_t kind = wire::get_u32(is);
  const int tag = dataset_tag(dataset);

  switch (kind) {
    case 3: {
      if (tag != 1) throw std::invalid_argument("signature checkpoint needs a path dataset");
      const SignatureModel m = load_signature_model(is);
      const PathDataset ds = read_path_dataset(dataset);
      return signature_model_metric(m, ds, m.metric().dim());
    }
    case 5: {
      if (tag != 1) throw std::invalid_argument("path MLP checkpoint needs a path dataset");
      PathMlpCheckpoint m = load_path_mlp(is);
      const PathDataset ds = read_path_dataset(dataset);
      return path_mlp_metric(m, ds, ds.d);
    }
    case 6: {
      if (tag != 2) throw std::invalid_argument("stress checkpoint needs a stress dataset");
      const StressEigenCheckpoint c = load_stress_eigen(is);
      return stress_eigen_metric(c, read_stress_dataset(dataset));
    }
    case 7: {
      if (tag != 2) throw std::invalid_argument("stress checkpoint needs a stress dataset");
      const StressMlpCheckpoint c = load_stress_mlp(is);
      return stress_mlp_metric(c, read_stress_dataset(dataset));
    }
    case 4: {
      if (tag != 3) throw std::invalid_argument("sparse checkpoint needs a sparse dataset");
      const SparseHModel m = load_sparse_model(is);
      return sparse_model_metric(m, read_sparse_dataset(dataset));
    }
    case 8: {
      if (tag != 3) throw std::invalid_argument("sparse checkpoint needs a sparse dataset");
      const SparseMlpCheckpoint c = load_sparse_mlp(is);
      return sparse_mlp_metric(c, read_sparse_dataset(dataset));
    }
    default:
      throw std::invalid_argument("eval: unsupported checkpoint kind " + std::to_string(kind));
  }
}

} // namespace eqt
