#include "eqt/models.hpp"
#include "wire.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace eqt {

namespace {

// Canonical perfect matchings of an arbitrary ascending slot list.
void matchings_of(const std::vector<int>& slots,
                  std::vector<std::vector<std::pair<int, int>>>& out) {
  if (slots.empty()) {
    out.push_back({});
    return;
  }
  const int first = slots.front();
  for (std::size_t j = 1; j < slots.size(); ++j) {
    std::vector<int> rest;
    for (std::size_t q = 1; q < slots.size(); ++q)
      if (q != j) rest.push_back(slots[q]);
    std::vector<std::vector<std::pair<int, int>>> sub;
    matchings_of(rest, sub);
    for (auto& m : sub) {
      m.insert(m.begin(), {first, slots[j]});
      out.push_back(std::move(m));
    }
  }
}

// Lexicographic combinations of size r from {0..k-1}.
void combinations(int k, int r, std::vector<std::vector<int>>& out) {
  std::vector<int> cur;
  std::function<void(int)> rec = [&](int start) {
    if (static_cast<int>(cur.size()) == r) {
      out.push_back(cur);
      return;
    }
    for (int v = start; v < k; ++v) {
      cur.push_back(v);
      rec(v + 1);
      cur.pop_back();
    }
  };
  rec(0);
}

} // namespace

std::vector<BasisTerm> enumerate_basis_terms(int n, int k_prime, const Metric& metric) {
  (void)metric; // the term structure is metric-independent; theta enters at evaluation
  if (n < 1) throw std::invalid_argument("enumerate_basis_terms: n must be >= 1");
  if (k_prime < 0) throw std::invalid_argument("enumerate_basis_terms: k' must be >= 0");

  std::vector<BasisTerm> terms;
  for (int t = 0; 2 * t <= k_prime; ++t) {
    const int m = k_prime - 2 * t;
    std::vector<std::vector<int>> subsets;
    combinations(k_prime, 2 * t, subsets);
    for (const auto& subset : subsets) {
      std::vector<std::vector<std::pair<int, int>>> pairings;
      matchings_of(subset, pairings);

      std::vector<bool> in_subset(static_cast<std::size_t>(k_prime), false);
      for (int s : subset) in_subset[static_cast<std::size_t>(s)] = true;
      std::vector<int> free_slots;
      for (int s = 0; s < k_prime; ++s)
        if (!in_subset[static_cast<std::size_t>(s)]) free_slots.push_back(s);

      for (const auto& pairs : pairings) {
        // All labelings of the free slots, odometer over the last slot fastest.
        std::vector<int> label(static_cast<std::size_t>(m), 0);
        for (;;) {
          // Each slot->label function is one distinct term; base positions
          // are assigned in (label, slot) order so J comes out non-decreasing.
          BasisTerm term;
          term.t = t;
          term.sigma.assign(static_cast<std::size_t>(k_prime), -1);
          // Sort (label, slot) to get the non-decreasing J and base positions.
          std::vector<std::pair<int, int>> label_slot;
          for (int b = 0; b < m; ++b)
            label_slot.emplace_back(label[static_cast<std::size_t>(b)], free_slots[static_cast<std::size_t>(b)]);
          std::sort(label_slot.begin(), label_slot.end());
          for (int b = 0; b < m; ++b) {
            term.J.push_back(label_slot[static_cast<std::size_t>(b)].first);
            term.sigma[static_cast<std::size_t>(label_slot[static_cast<std::size_t>(b)].second)] = b;
          }
          for (std::size_t i = 0; i < pairs.size(); ++i) {
            term.sigma[static_cast<std::size_t>(pairs[i].first)] = m + 2 * static_cast<int>(i);
            term.sigma[static_cast<std::size_t>(pairs[i].second)] = m + 2 * static_cast<int>(i) + 1;
          }
          terms.push_back(std::move(term));

          int q = m - 1;
          for (; q >= 0; --q) {
            if (++label[static_cast<std::size_t>(q)] < n) break;
            label[static_cast<std::size_t>(q)] = 0;
          }
          if (q < 0) break;
        }
      }
    }
  }
  return terms;
}

Tensor evaluate_term(const BasisTerm& term, const std::vector<Tensor>& vectors,
                     const Metric& metric) {
  if (vectors.empty()) throw std::invalid_argument("evaluate_term: no input vectors");
  const int d = vectors.front().dim();
  const int m = static_cast<int>(term.J.size());
  const int k_prime = m + 2 * term.t;

  Tensor base = Tensor::scalar(d, 1.0);
  bool started = false;
  for (int b = 0; b < m; ++b) {
    const int j = term.J[static_cast<std::size_t>(b)];
    if (j < 0 || j >= static_cast<int>(vectors.size()))
      throw std::invalid_argument("evaluate_term: J index out of range");
    base = started ? outer(base, vectors[static_cast<std::size_t>(j)])
                   : vectors[static_cast<std::size_t>(j)];
    started = true;
  }
  if (term.t > 0) {
    const Tensor theta = metric_tensor(metric);
    for (int q = 0; q < term.t; ++q) {
      base = started ? outer(base, theta) : theta;
      started = true;
    }
  }
  if (!started) return Tensor::scalar(d, 1.0);
  if (base.order() != k_prime) throw std::invalid_argument("evaluate_term: inconsistent term");
  return permute_indices(base, term.sigma);
}

Eigen::MatrixXd invariant_features(const std::vector<Tensor>& vectors, const Metric& metric) {
  const int n = static_cast<int>(vectors.size());
  Eigen::MatrixXd gram(n, n);
  for (int i = 0; i < n; ++i) {
    if (vectors[static_cast<std::size_t>(i)].dim() != metric.dim() ||
        vectors[static_cast<std::size_t>(i)].order() != 1)
      throw std::invalid_argument("invariant_features: inputs must be order-1, metric dim");
    for (int j = 0; j < n; ++j)
      gram(i, j) = inner_product(vectors[static_cast<std::size_t>(i)],
                                 vectors[static_cast<std::size_t>(j)], metric);
  }
  return gram;
}

int feature_dim(int n, const Metric& metric) {
  return metric.antisymmetric() ? n * n : n * (n + 1) / 2;
}

Eigen::VectorXd flatten_features(const Eigen::MatrixXd& gram, const Metric& metric) {
  const int n = static_cast<int>(gram.rows());
  Eigen::VectorXd out(feature_dim(n, metric));
  const double inv_d = 1.0 / static_cast<double>(metric.dim());
  int q = 0;
  if (metric.antisymmetric()) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) out(q++) = gram(i, j) * inv_d;
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) out(q++) = gram(i, j) * inv_d;
  }
  return out;
}

// ---------- VecToTensorModel ----------

VecToTensorModel::VecToTensorModel(int n, int k_prime, const Metric& metric,
                                   std::vector<int> hidden, Activation act, Rng& rng)
    : n_(n), k_prime_(k_prime), metric_(metric),
      terms_(enumerate_basis_terms(n, k_prime, metric)) {
  std::vector<int> widths;
  widths.push_back(feature_dim(n, metric));
  for (int h : hidden) widths.push_back(h);
  widths.push_back(static_cast<int>(terms_.size()));
  net_ = DenseNet(std::move(widths), act);
  net_.init(rng);
}

Tensor VecToTensorModel::forward(const std::vector<Tensor>& vectors) const {
  if (static_cast<int>(vectors.size()) != n_)
    throw std::invalid_argument("VecToTensorModel::forward: expected " + std::to_string(n_) +
                                " vectors");
  const Eigen::VectorXd phi = flatten_features(invariant_features(vectors, metric_), metric_);
  const Eigen::VectorXd coeff = net_.forward(phi);
  Tensor out(metric_.dim(), k_prime_, +1);
  for (std::size_t i = 0; i < terms_.size(); ++i)
    out = add(out, scale(coeff(static_cast<Eigen::Index>(i)),
                         evaluate_term(terms_[i], vectors, metric_)));
  return out;
}

void VecToTensorModel::backward(const std::vector<Tensor>& vectors, const Tensor& dout) {
  const Eigen::VectorXd phi = flatten_features(invariant_features(vectors, metric_), metric_);
  DenseNet::Cache cache;
  net_.forward_batch(phi.transpose(), cache);
  Eigen::MatrixXd dcoeff(1, static_cast<Eigen::Index>(terms_.size()));
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    const Tensor ti = evaluate_term(terms_[i], vectors, metric_);
    double s = 0.0;
    for (std::size_t q = 0; q < ti.size(); ++q) s += ti.at_offset(q) * dout.at_offset(q);
    dcoeff(0, static_cast<Eigen::Index>(i)) = s;
  }
  net_.backward_batch(cache, dcoeff);
}

// ---------- EigenEquivariantModel ----------

EigenEquivariantModel::EigenEquivariantModel(int d, std::vector<int> hidden_channels,
                                             Activation act, Rng& rng)
    : d_(d) {
  std::vector<int> channels;
  channels.push_back(1);
  for (int c : hidden_channels) channels.push_back(c);
  channels.push_back(1);
  net_ = PermEquivariantNet(std::move(channels), act);
  net_.init(rng);
}

Eigen::MatrixXd spectral_apply(const Eigen::MatrixXd& a,
                               const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f) {
  if (a.rows() != a.cols()) throw std::invalid_argument("spectral_apply: matrix must be square");
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("spectral_apply: input is not symmetric (tolerance 1e-9)");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw numerical_error("spectral_apply: eigensolver failed");
  const Eigen::VectorXd mu = f(es.eigenvalues());
  const Eigen::MatrixXd r = es.eigenvectors() * mu.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (r + r.transpose());
}

Eigen::MatrixXd EigenEquivariantModel::forward_sym(const Eigen::MatrixXd& a) const {
  if (a.rows() != d_ || a.cols() != d_)
    throw std::invalid_argument("forward_sym: matrix size mismatch");
  return spectral_apply(a, [this](const Eigen::VectorXd& lam) { return net_.forward(lam); });
}

Tensor EigenEquivariantModel::forward_sym(const Tensor& a) const {
  if (a.order() != 2 || a.dim() != d_)
    throw std::invalid_argument("forward_sym: expected an order-2 tensor of matching dim");
  Eigen::MatrixXd m(d_, d_);
  for (int i = 0; i < d_; ++i)
    for (int j = 0; j < d_; ++j) m(i, j) = a.at_offset(static_cast<std::size_t>(i) * d_ + j);
  const Eigen::MatrixXd r = forward_sym(m);
  std::vector<double> c(static_cast<std::size_t>(d_) * d_);
  for (int i = 0; i < d_; ++i)
    for (int j = 0; j < d_; ++j) c[static_cast<std::size_t>(i) * d_ + j] = r(i, j);
  return Tensor(d_, 2, +1, std::move(c));
}

void EigenEquivariantModel::backward(const Eigen::MatrixXd& a, const Eigen::MatrixXd& dout) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw numerical_error("backward: eigensolver failed");
  const Eigen::MatrixXd g = 0.5 * (dout + dout.transpose());
  // d out / d mu_i = q_i q_i^T, so dL/dmu_i = q_i^T G q_i.
  Eigen::VectorXd dmu(d_);
  for (int i = 0; i < d_; ++i) {
    const Eigen::VectorXd qi = es.eigenvectors().col(i);
    dmu(i) = qi.dot(g * qi);
  }
  PermEquivariantNet::Cache cache;
  net_.forward(es.eigenvalues(), cache);
  net_.backward(cache, dmu);
}

// ---------- degree-bounded general basis ----------

std::vector<GeneralBasisMap> enumerate_general_basis(int d, const std::vector<TensorSpec>& inputs,
                                                     const TensorSpec& output, int degree,
                                                     bool symmetric_output) {
  if (symmetric_output && output.order != 2)
    throw std::invalid_argument("enumerate_general_basis: symmetric_output needs k' = 2");
  const int n = static_cast<int>(inputs.size());
  const Metric metric = Metric::euclidean(d);
  std::vector<GeneralBasisMap> maps;

  // All non-decreasing multi-indices of length 0..degree, shortest first.
  std::vector<std::vector<int>> multis;
  {
    std::vector<int> cur;
    for (int r = 0; r <= degree; ++r) {
      std::function<void(int)> gen = [&](int start) {
        if (static_cast<int>(cur.size()) == r) {
          multis.push_back(cur);
          return;
        }
        for (int v = start; v < n; ++v) {
          cur.push_back(v);
          gen(v);
          cur.pop_back();
        }
      };
      gen(0);
    }
  }

  for (const auto& ell : multis) {
    int contract_k = 0;
    int parity = output.parity;
    for (int idx : ell) {
      contract_k += inputs[static_cast<std::size_t>(idx)].order;
      parity *= inputs[static_cast<std::size_t>(idx)].parity;
    }
    const int total_order = contract_k + output.order;
    if (total_order > 8) {
      std::ostringstream msg;
      msg << "enumerate_general_basis: isotropic order " << total_order << " exceeds 8 for term (";
      for (std::size_t q = 0; q < ell.size(); ++q) msg << (q ? "," : "") << ell[q] + 1;
      msg << ")";
      throw std::invalid_argument(msg.str());
    }

    IsotropicBasis basis = isotropic_basis(total_order, parity, metric);
    if (basis.elements.empty()) continue;

    SlotSymmetry sym;
    int slot = 0;
    for (std::size_t q = 0; q < ell.size(); ++q) {
      const int len = inputs[static_cast<std::size_t>(ell[q])].order;
      if (q > 0 && ell[q] == ell[q - 1])
        sym.generators.push_back(SlotSymmetry::block_swap(total_order, slot - len, len));
      slot += len;
    }
    if (symmetric_output)
      sym.generators.push_back(SlotSymmetry::swap(total_order, contract_k, contract_k + 1));

    const IsotropicBasis reduced = independent_subset(basis, &sym);
    for (const auto& el : reduced.elements)
      maps.push_back({ell, contract_k, el.sigma, el.value});
  }
  return maps;
}

Tensor apply_general_basis(const GeneralBasisMap& map, const std::vector<Tensor>& inputs) {
  const Metric metric = Metric::euclidean(map.iso.dim());
  Tensor prod = map.iso;
  if (!map.inputs.empty()) {
    Tensor t = inputs.at(static_cast<std::size_t>(map.inputs.front()));
    for (std::size_t q = 1; q < map.inputs.size(); ++q)
      t = outer(t, inputs.at(static_cast<std::size_t>(map.inputs[q])));
    int got = 0;
    for (int idx : map.inputs) got += inputs.at(static_cast<std::size_t>(idx)).order();
    if (got != map.contract_k)
      throw std::invalid_argument("apply_general_basis: input orders do not match the map");
    prod = outer(t, map.iso);
  }
  return contract(prod, map.contract_k, metric);
}

// ---------- checkpoints ----------

namespace {

void put_metric(std::ostream& os, const Metric& m) {
  wire::put_u32(os, static_cast<std::uint32_t>(m.kind()));
  wire::put_u32(os, static_cast<std::uint32_t>(m.dim()));
  wire::put_u32(os, static_cast<std::uint32_t>(m.s()));
}

Metric get_metric(std::istream& is) {
  const auto kind = static_cast<Metric::Kind>(wire::get_u32(is));
  const int dim = static_cast<int>(wire::get_u32(is));
  const int s = static_cast<int>(wire::get_u32(is));
  switch (kind) {
    case Metric::Kind::Euclidean: return Metric::euclidean(dim);
    case Metric::Kind::Minkowski: return Metric::minkowski(s, dim);
    case Metric::Kind::Symplectic: return Metric::symplectic(dim);
  }
  throw std::invalid_argument("checkpoint: bad metric kind");
}

void put_weights(std::ostream& os, std::vector<ParamView> views) {
  std::size_t total = 0;
  for (const auto& v : views) total += v.size;
  wire::put_u32(os, static_cast<std::uint32_t>(total));
  for (const auto& v : views)
    for (std::size_t i = 0; i < v.size; ++i) wire::put_f64(os, v.data[i]);
}

void get_weights(std::istream& is, std::vector<ParamView> views) {
  std::size_t total = 0;
  for (const auto& v : views) total += v.size;
  if (wire::get_u32(is) != total)
    throw std::invalid_argument("checkpoint: weight count mismatch");
  for (auto& v : views)
    for (std::size_t i = 0; i < v.size; ++i) v.data[i] = wire::get_f64(is);
}

} // namespace

void write_vec_model(std::ostream& os, const VecToTensorModel& m) {
  wire::put_magic(os, "EQC1");
  wire::put_u32(os, 1);
  wire::put_u32(os, static_cast<std::uint32_t>(m.n_inputs()));
  wire::put_u32(os, static_cast<std::uint32_t>(m.output_order()));
  put_metric(os, m.metric());
  wire::put_u32(os, static_cast<std::uint32_t>(m.net().activation()));
  const auto& widths = m.net().widths();
  wire::put_u32(os, static_cast<std::uint32_t>(widths.size()));
  for (int w : widths) wire::put_u32(os, static_cast<std::uint32_t>(w));
  wire::put_u32(os, static_cast<std::uint32_t>(m.terms().size()));
  for (const auto& term : m.terms()) {
    wire::put_u32(os, static_cast<std::uint32_t>(term.t));
    wire::put_u32(os, static_cast<std::uint32_t>(term.sigma.size()));
    for (int v : term.sigma) wire::put_u32(os, static_cast<std::uint32_t>(v));
    wire::put_u32(os, static_cast<std::uint32_t>(term.J.size()));
    for (int v : term.J) wire::put_u32(os, static_cast<std::uint32_t>(v));
  }
  put_weights(os, const_cast<VecToTensorModel&>(m).net().params());
}

VecToTensorModel read_vec_model(std::istream& is) {
  wire::expect_magic(is, "EQC1");
  if (wire::get_u32(is) != 1) throw std::invalid_argument("checkpoint: not a vec-to-tensor model");
  const int n = static_cast<int>(wire::get_u32(is));
  const int k_prime = static_cast<int>(wire::get_u32(is));
  const Metric metric = get_metric(is);
  const auto act = static_cast<Activation>(wire::get_u32(is));
  const int nwidths = static_cast<int>(wire::get_u32(is));
  std::vector<int> widths(static_cast<std::size_t>(nwidths));
  for (auto& w : widths) w = static_cast<int>(wire::get_u32(is));
  std::vector<int> hidden(widths.begin() + 1, widths.end() - 1);

  Rng dummy(0);
  VecToTensorModel model(n, k_prime, metric, hidden, act, dummy);

  const std::size_t nterms = wire::get_u32(is);
  if (nterms != model.terms().size())
    throw std::invalid_argument("checkpoint: term count mismatch");
  for (const auto& term : model.terms()) {
    if (static_cast<int>(wire::get_u32(is)) != term.t)
      throw std::invalid_argument("checkpoint: term mismatch (t)");
    const std::size_t ns = wire::get_u32(is);
    if (ns != term.sigma.size()) throw std::invalid_argument("checkpoint: term mismatch (sigma)");
    for (int v : term.sigma)
      if (static_cast<int>(wire::get_u32(is)) != v)
        throw std::invalid_argument("checkpoint: term mismatch (sigma entries)");
    const std::size_t nj = wire::get_u32(is);
    if (nj != term.J.size()) throw std::invalid_argument("checkpoint: term mismatch (J)");
    for (int v : term.J)
      if (static_cast<int>(wire::get_u32(is)) != v)
        throw std::invalid_argument("checkpoint: term mismatch (J entries)");
  }
  get_weights(is, model.net().params());
  return model;
}

void write_eigen_model(std::ostream& os, const EigenEquivariantModel& m) {
  wire::put_magic(os, "EQC1");
  wire::put_u32(os, 2);
  wire::put_u32(os, static_cast<std::uint32_t>(m.dim()));
  wire::put_u32(os, static_cast<std::uint32_t>(m.net().activation()));
  const auto& channels = m.net().channels();
  wire::put_u32(os, static_cast<std::uint32_t>(channels.size()));
  for (int c : channels) wire::put_u32(os, static_cast<std::uint32_t>(c));
  put_weights(os, const_cast<EigenEquivariantModel&>(m).net().params());
}

EigenEquivariantModel read_eigen_model(std::istream& is) {
  wire::expect_magic(is, "EQC1");
  if (wire::get_u32(is) != 2) throw std::invalid_argument("checkpoint: not an eigen model");
  const int d = static_cast<int>(wire::get_u32(is));
  const auto act = static_cast<Activation>(wire::get_u32(is));
  const int nch = static_cast<int>(wire::get_u32(is));
  std::vector<int> channels(static_cast<std::size_t>(nch));
  for (auto& c : channels) c = static_cast<int>(wire::get_u32(is));
  std::vector<int> hidden(channels.begin() + 1, channels.end() - 1);
  Rng dummy(0);
  EigenEquivariantModel model(d, hidden, act, dummy);
  get_weights(is, model.net().params());
  return model;
}

} // namespace eqt
