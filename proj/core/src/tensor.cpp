#include "eqt/tensor.hpp"
#include "eqt/groups.hpp"
#include "wire.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace eqt {

namespace {

std::size_t checked_pow(int d, int k) {
  if (d < 1) throw std::invalid_argument("tensor dimension must be >= 1");
  if (k < 0) throw std::invalid_argument("tensor order must be >= 0");
  std::size_t n = 1;
  for (int q = 0; q < k; ++q) {
    if (n > (std::size_t{1} << 30) / static_cast<std::size_t>(d))
      throw std::invalid_argument("tensor with d^k components too large");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void check_parity(int p) {
  if (p != +1 && p != -1) throw std::invalid_argument("parity must be +1 or -1");
}

void check_finite(const std::vector<double>& c) {
  for (double x : c)
    if (!std::isfinite(x)) throw numerical_error("tensor has non-finite components");
}

} // namespace

// ---------- Metric ----------

Metric Metric::euclidean(int d) {
  if (d < 1) throw std::invalid_argument("Euclidean metric needs d >= 1");
  return Metric(Kind::Euclidean, d, d);
}

Metric Metric::minkowski(int s, int d) {
  if (!(0 < s && s < d)) throw std::invalid_argument("Minkowski signature needs 0 < s < d");
  return Metric(Kind::Minkowski, d, s);
}

Metric Metric::symplectic(int d) {
  if (d < 2 || d % 2 != 0) throw std::invalid_argument("symplectic metric needs even d >= 2");
  return Metric(Kind::Symplectic, d, 0);
}

std::vector<double> Metric::matrix() const {
  std::vector<double> m(static_cast<std::size_t>(dim_) * dim_, 0.0);
  switch (kind_) {
    case Kind::Euclidean:
      for (int i = 0; i < dim_; ++i) m[i * dim_ + i] = 1.0;
      break;
    case Kind::Minkowski:
      for (int i = 0; i < dim_; ++i) m[i * dim_ + i] = (i < s_) ? 1.0 : -1.0;
      break;
    case Kind::Symplectic: {
      const int h = dim_ / 2;
      for (int i = 0; i < h; ++i) {
        m[i * dim_ + (i + h)] = 1.0;
        m[(i + h) * dim_ + i] = -1.0;
      }
      break;
    }
  }
  return m;
}

std::string Metric::to_string() const {
  switch (kind_) {
    case Kind::Euclidean: return "euclidean:" + std::to_string(dim_);
    case Kind::Minkowski:
      return "minkowski:" + std::to_string(s_) + "," + std::to_string(dim_ - s_);
    case Kind::Symplectic: return "symplectic:" + std::to_string(dim_);
  }
  return "?";
}

// ---------- Tensor ----------

Tensor::Tensor(int dim, int order, int parity)
    : dim_(dim), order_(order), parity_(parity), c_(checked_pow(dim, order), 0.0) {
  check_parity(parity);
}

Tensor::Tensor(int dim, int order, int parity, std::vector<double> components)
    : dim_(dim), order_(order), parity_(parity), c_(std::move(components)) {
  check_parity(parity);
  if (c_.size() != checked_pow(dim, order))
    throw std::invalid_argument("component count does not equal dim^order");
  check_finite(c_);
}

Tensor Tensor::scalar(int dim, double value, int parity) {
  return Tensor(dim, 0, parity, {value});
}

Tensor Tensor::basis_vector(int dim, int i) {
  if (i < 0 || i >= dim) throw std::invalid_argument("basis vector index out of range");
  std::vector<double> c(static_cast<std::size_t>(dim), 0.0);
  c[static_cast<std::size_t>(i)] = 1.0;
  return Tensor(dim, 1, +1, std::move(c));
}

std::size_t Tensor::offset(std::span<const int> idx) const {
  if (static_cast<int>(idx.size()) != order_)
    throw std::invalid_argument("index length does not match tensor order");
  std::size_t off = 0;
  for (int q = 0; q < order_; ++q) {
    if (idx[q] < 0 || idx[q] >= dim_) throw std::invalid_argument("index out of range");
    off = off * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(idx[q]);
  }
  return off;
}

double Tensor::operator()(std::initializer_list<int> idx) const {
  std::vector<int> v(idx);
  return c_[offset(v)];
}

double Tensor::at(std::span<const int> idx) const { return c_[offset(idx)]; }

double Tensor::norm() const {
  double s = 0.0;
  for (double x : c_) s += x * x;
  return std::sqrt(s);
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double x : c_) m = std::max(m, std::abs(x));
  return m;
}

// ---------- permutations ----------

Perm perm_identity(int k) {
  Perm p(static_cast<std::size_t>(k));
  std::iota(p.begin(), p.end(), 0);
  return p;
}

Perm perm_inverse(const Perm& p) {
  Perm inv(p.size());
  for (std::size_t q = 0; q < p.size(); ++q) inv[static_cast<std::size_t>(p[q])] = static_cast<int>(q);
  return inv;
}

Perm perm_compose(const Perm& a, const Perm& b) {
  if (a.size() != b.size()) throw std::invalid_argument("permutation size mismatch");
  Perm c(a.size());
  for (std::size_t q = 0; q < a.size(); ++q) c[q] = a[static_cast<std::size_t>(b[q])];
  return c;
}

Perm perm_from_one_based(std::initializer_list<int> images) {
  Perm p;
  p.reserve(images.size());
  for (int v : images) p.push_back(v - 1);
  return p;
}

std::string perm_to_string(const Perm& p) {
  std::string s = "(";
  for (std::size_t q = 0; q < p.size(); ++q) {
    if (q) s += ",";
    s += std::to_string(p[q] + 1);
  }
  return s + ")";
}

// ---------- operations ----------

Tensor outer(const Tensor& a, const Tensor& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("outer: dimension mismatch");
  const std::size_t na = a.size(), nb = b.size();
  std::vector<double> out(na * nb);
  auto ca = a.components(), cb = b.components();
  for (std::size_t i = 0; i < na; ++i) {
    const double ai = ca[i];
    double* dst = out.data() + i * nb;
    for (std::size_t j = 0; j < nb; ++j) dst[j] = ai * cb[j];
  }
  return Tensor(a.dim(), a.order() + b.order(), a.parity() * b.parity(), std::move(out));
}

Tensor apply_axis(const Tensor& a, std::span<const double> m, int axis) {
  const int d = a.dim();
  if (static_cast<int>(m.size()) != d * d)
    throw std::invalid_argument("apply_axis: matrix size mismatch");
  if (axis < 0 || axis >= a.order()) throw std::invalid_argument("apply_axis: bad axis");
  std::size_t pre = 1, post = 1;
  for (int q = 0; q < axis; ++q) pre *= static_cast<std::size_t>(d);
  for (int q = axis + 1; q < a.order(); ++q) post *= static_cast<std::size_t>(d);

  std::vector<double> out(a.size(), 0.0);
  auto src = a.components();
  for (std::size_t p = 0; p < pre; ++p) {
    const std::size_t base = p * static_cast<std::size_t>(d) * post;
    for (int i = 0; i < d; ++i) {
      double* dst = out.data() + base + static_cast<std::size_t>(i) * post;
      for (int j = 0; j < d; ++j) {
        const double mij = m[static_cast<std::size_t>(i) * d + j];
        if (mij == 0.0) continue;
        const double* sp = src.data() + base + static_cast<std::size_t>(j) * post;
        for (std::size_t r = 0; r < post; ++r) dst[r] += mij * sp[r];
      }
    }
  }
  return Tensor(a.dim(), a.order(), a.parity(), std::move(out));
}

Tensor contract(const Tensor& a, int k, const Metric& metric) {
  if (k < 0) throw std::invalid_argument("contract: k must be >= 0");
  if (a.order() < 2 * k)
    throw std::invalid_argument("contract: order " + std::to_string(a.order()) +
                                " too small for k = " + std::to_string(k));
  if (a.dim() != metric.dim()) throw std::invalid_argument("contract: metric dimension mismatch");
  if (k == 0) return a;

  // Lower indices k..2k-1 through the metric, then identify pairs (q, k+q).
  Tensor b = a;
  if (!metric.is_euclidean()) {
    const auto m = metric.matrix();
    for (int q = 0; q < k; ++q) b = apply_axis(b, m, k + q);
  }

  const int d = a.dim();
  const int k_out = a.order() - 2 * k;
  std::size_t n_pair = 1, n_out = 1;
  for (int q = 0; q < k; ++q) n_pair *= static_cast<std::size_t>(d);
  for (int q = 0; q < k_out; ++q) n_out *= static_cast<std::size_t>(d);

  std::vector<double> out(n_out, 0.0);
  auto src = b.components();
  // offset of (I, I, J) = I*(n_pair*n_out) + I*n_out + J
  for (std::size_t i = 0; i < n_pair; ++i) {
    const double* sp = src.data() + i * (n_pair * n_out) + i * n_out;
    for (std::size_t j = 0; j < n_out; ++j) out[j] += sp[j];
  }
  return Tensor(d, k_out, a.parity(), std::move(out));
}

Tensor permute_indices(const Tensor& a, const Perm& sigma) {
  const int k = a.order();
  if (static_cast<int>(sigma.size()) != k)
    throw std::invalid_argument("permute_indices: permutation length mismatch");
  if (k <= 1) return a;

  const int d = a.dim();
  // dst[(i_1..i_k)] = src[(i_{inv(1)}..i_{inv(k)})]; build the source offset
  // stride of each destination axis once.
  const Perm inv = perm_inverse(sigma);
  std::vector<std::size_t> stride(static_cast<std::size_t>(k));
  std::size_t s = 1;
  for (int q = k - 1; q >= 0; --q) {
    stride[static_cast<std::size_t>(q)] = s;
    s *= static_cast<std::size_t>(d);
  }
  // source offset = sum_q I[inv(q)] * stride[q] = sum_t I[t] * stride[sigma(t)]
  std::vector<std::size_t> src_stride(static_cast<std::size_t>(k));
  for (int q = 0; q < k; ++q)
    src_stride[static_cast<std::size_t>(inv[static_cast<std::size_t>(q)])] =
        stride[static_cast<std::size_t>(q)];

  std::vector<double> out(a.size());
  std::vector<int> idx(static_cast<std::size_t>(k), 0);
  auto src = a.components();
  std::size_t src_off = 0;
  for (std::size_t dst_off = 0; dst_off < out.size(); ++dst_off) {
    out[dst_off] = src[src_off];
    // odometer increment
    for (int q = k - 1; q >= 0; --q) {
      auto uq = static_cast<std::size_t>(q);
      if (++idx[uq] < d) {
        src_off += src_stride[uq];
        break;
      }
      idx[uq] = 0;
      src_off -= src_stride[uq] * static_cast<std::size_t>(d - 1);
    }
  }
  return Tensor(d, k, a.parity(), std::move(out));
}

Tensor group_act(const GroupElement& g, const Tensor& a) {
  if (g.dim() != a.dim()) throw std::invalid_argument("group_act: dimension mismatch");
  Tensor out = a;
  const auto& m = g.matrix_rowmajor();
  for (int q = 0; q < a.order(); ++q) out = apply_axis(out, m, q);
  if (a.parity() == -1 && g.det_sign() == -1) out = scale(-1.0, out);
  return out;
}

// ---------- special tensors ----------

Tensor kronecker_delta(int d) {
  Tensor t(d, 2, +1);
  std::vector<double> c(t.size(), 0.0);
  for (int i = 0; i < d; ++i) c[static_cast<std::size_t>(i) * d + i] = 1.0;
  return Tensor(d, 2, +1, std::move(c));
}

namespace {
int permutation_sign(std::vector<int> p) {
  int sign = 1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (p[i] != static_cast<int>(i)) {
      std::swap(p[i], p[static_cast<std::size_t>(p[i])]);
      sign = -sign;
    }
  }
  return sign;
}
} // namespace

Tensor levi_civita(int d) {
  if (d < 2) throw std::invalid_argument("levi_civita needs d >= 2");
  Tensor shape(d, d, -1);
  std::vector<double> c(shape.size(), 0.0);
  std::vector<int> idx(static_cast<std::size_t>(d));
  std::iota(idx.begin(), idx.end(), 0);
  do {
    std::size_t off = 0;
    for (int q = 0; q < d; ++q) off = off * static_cast<std::size_t>(d) + static_cast<std::size_t>(idx[static_cast<std::size_t>(q)]);
    c[off] = permutation_sign(idx);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return Tensor(d, d, -1, std::move(c));
}

Tensor metric_tensor(const Metric& metric) {
  return Tensor(metric.dim(), 2, +1, metric.matrix());
}

// ---------- linear plumbing ----------

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape or parity mismatch");
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.at_offset(i) + b.at_offset(i);
  return Tensor(a.dim(), a.order(), a.parity(), std::move(c));
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(-1.0, b)); }

Tensor scale(double s, const Tensor& a) {
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = s * a.at_offset(i);
  return Tensor(a.dim(), a.order(), a.parity(), std::move(c));
}

double inner_product(const Tensor& u, const Tensor& v, const Metric& metric) {
  if (u.order() != 1 || v.order() != 1)
    throw std::invalid_argument("inner_product expects order-1 tensors");
  if (u.dim() != v.dim() || u.dim() != metric.dim())
    throw std::invalid_argument("inner_product: dimension mismatch");
  const int d = u.dim();
  if (metric.is_euclidean()) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += u.at_offset(i) * v.at_offset(i);
    return s;
  }
  const auto m = metric.matrix();
  double s = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      s += u.at_offset(i) * m[static_cast<std::size_t>(i) * d + j] * v.at_offset(j);
  return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.dim() != b.dim() || a.order() != b.order())
    throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.at_offset(i) - b.at_offset(i)));
  return m;
}

// ---------- serialization ----------

void write_tensor(std::ostream& os, const Tensor& t) {
  wire::put_magic(os, "EQT1");
  wire::put_u32(os, static_cast<std::uint32_t>(t.dim()));
  wire::put_u32(os, static_cast<std::uint32_t>(t.order()));
  wire::put_i8(os, static_cast<std::int8_t>(t.parity()));
  for (double x : t.components()) wire::put_f64(os, x);
}

Tensor read_tensor(std::istream& is) {
  wire::expect_magic(is, "EQT1");
  const int dim = static_cast<int>(wire::get_u32(is));
  const int order = static_cast<int>(wire::get_u32(is));
  const int p = wire::get_i8(is);
  const std::size_t n = checked_pow(dim, order);
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = wire::get_f64(is);
  return Tensor(dim, order, p, std::move(c));
}

} // namespace eqt
