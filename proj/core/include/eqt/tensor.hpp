#pragma once

#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eqt {

/// Thrown when a computation (not its inputs) goes bad: NaN loss,
/// resampling caps, failed factorizations.
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bilinear form preserved by the group: Euclidean (O(d)),
/// Minkowski signature (s, d-s) (O(s,d-s)), or symplectic (Sp(d), d even).
class Metric {
public:
  enum class Kind { Euclidean, Minkowski, Symplectic };

  static Metric euclidean(int d);
  /// Signature (s, d-s) with 0 < s < d; +1 block first.
  static Metric minkowski(int s, int d);
  static Metric symplectic(int d);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  /// Number of +1 diagonal entries (Minkowski only).
  int s() const { return s_; }

  bool is_euclidean() const { return kind_ == Kind::Euclidean; }
  bool antisymmetric() const { return kind_ == Kind::Symplectic; }

  /// Row-major d*d entries of the metric tensor (identity, I_{s,d-s}, or J_d).
  std::vector<double> matrix() const;

  std::string to_string() const;
  bool operator==(const Metric&) const = default;

private:
  Metric(Kind k, int d, int s) : kind_(k), dim_(d), s_(s) {}
  Kind kind_;
  int dim_;
  int s_;
};

/// Dense order-k tensor over R^d with a parity tag.
///
/// Components are stored flat in row-major order: index (i_1,...,i_k)
/// lives at offset sum_q i_q * d^(k-q). Order 0 is a scalar (length 1).
/// Values are immutable after construction; every operation returns a
/// fresh tensor, so sharing across threads is safe.
///
/// Parity is metadata: arithmetic ignores it except group_act, which
/// multiplies by det(M(g))^((1-p)/2), and add/sub, which refuse to mix
/// parities.
class Tensor {
public:
  /// Scalar zero in d=1.
  Tensor() : dim_(1), order_(0), parity_(+1), c_(1, 0.0) {}

  /// All-zero tensor of the given shape.
  Tensor(int dim, int order, int parity);

  /// Takes ownership of `components`; length must be dim^order and every
  /// entry finite.
  Tensor(int dim, int order, int parity, std::vector<double> components);

  static Tensor scalar(int dim, double value, int parity = +1);
  /// Standard basis vector e_i (0-based i).
  static Tensor basis_vector(int dim, int i);

  int dim() const { return dim_; }
  int order() const { return order_; }
  int parity() const { return parity_; }
  std::size_t size() const { return c_.size(); }
  std::span<const double> components() const { return c_; }

  double operator()(std::initializer_list<int> idx) const;
  double at(std::span<const int> idx) const;
  double at_offset(std::size_t off) const { return c_[off]; }

  std::size_t offset(std::span<const int> idx) const;

  double norm() const;     ///< Frobenius norm.
  double max_abs() const;

  bool same_shape(const Tensor& o) const {
    return dim_ == o.dim_ && order_ == o.order_ && parity_ == o.parity_;
  }

private:
  int dim_, order_, parity_;
  std::vector<double> c_;
};

using Perm = std::vector<int>; ///< one-line images, 0-based: perm[q] = sigma(q+1)-1

Perm perm_identity(int k);
Perm perm_inverse(const Perm&);
/// Composition acting left-to-right on slots: (a*b)(q) = a(b(q)).
Perm perm_compose(const Perm& a, const Perm& b);
Perm perm_from_one_based(std::initializer_list<int>);
/// "(1,3,2,4)" style, 1-based.
std::string perm_to_string(const Perm&);

// --- the four primitive operations ---

/// [a (x) b]_{i_1..i_{k+k'}} = [a]_{i_1..i_k} [b]_{i_{k+1}..i_{k+k'}};
/// parity multiplies.
Tensor outer(const Tensor& a, const Tensor& b);

/// k-contraction under a metric: pairs index q with index k+q for
/// q = 1..k, inserting [theta_G]_{i_q, j_q} between them (so plain index
/// identification in the Euclidean case). The metric's first slot sits on
/// the earlier index; for the antisymmetric symplectic form this order is
/// normative.
Tensor contract(const Tensor& a, int k, const Metric& metric);

/// [a^sigma]_{i_1..i_k} = [a]_{i_{sigma^-1(1)}..i_{sigma^-1(k)}}.
Tensor permute_indices(const Tensor& a, const Perm& sigma);

class GroupElement; // groups.hpp

/// Applies M(g) to every index and multiplies by the character
/// (det sign when parity is -1 for orthogonal-type groups).
Tensor group_act(const GroupElement& g, const Tensor& a);

// --- special tensors ---

Tensor kronecker_delta(int d);
/// Alternating order-d parity -1 symbol; requires d >= 2.
Tensor levi_civita(int d);
Tensor metric_tensor(const Metric& metric);

// --- linear-space plumbing ---

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(double c, const Tensor& a);
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(double c, const Tensor& a) { return scale(c, a); }

/// <u,v>_G for order-1 tensors.
double inner_product(const Tensor& u, const Tensor& v, const Metric& metric);

/// max |a - b| over components; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Applies a d x d matrix (row-major) to one tensor axis:
/// out_{..i..} = sum_j M[i,j] a_{..j..}.
Tensor apply_axis(const Tensor& a, std::span<const double> m, int axis);

// --- serialization: "EQT1" binary record ---
// magic "EQT1" | u32 dim | u32 order | i8 parity | d^k little-endian f64,
// row-major.

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

} // namespace eqt
