#pragma once

#include <vector>

#include "eqt/tensor.hpp"

namespace eqt {

/// Truncated tensor-algebra element (1, S_1, ..., S_M) over R^d: level k
/// holds d^k row-major coefficients. The workhorse behind the signature
/// oracle; signatures of concatenated paths compose by `chen_mul`.
class TruncatedSig {
public:
  TruncatedSig(int d, int levels);

  /// Signature of a single straight segment: level k = delta^(x k) / k!.
  static TruncatedSig segment(std::span<const double> delta, int levels);

  /// Graded (Chen) product this * other, truncated.
  TruncatedSig chen_mul(const TruncatedSig& other) const;

  int dim() const { return d_; }
  int levels() const { return m_; }
  const std::vector<double>& level(int k) const; ///< 1-based level
  std::vector<Tensor> to_tensors() const;

private:
  int d_, m_;
  std::vector<std::vector<double>> lv_; // lv_[k-1] has d^k entries
};

/// Exact truncated signature of the piecewise-linear path through `points`
/// (each order-1, same dim): product over segments of the segment
/// exponential. Needs >= 2 points and M >= 1.
std::vector<Tensor> signature_oracle(const std::vector<Tensor>& points, int M);

/// Chen product expressed on signature level lists (S_1..S_M each), for the
/// concatenation identity.
std::vector<Tensor> chen_product(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

/// The ordered Riemann-sum estimate on the sample points themselves:
/// S_k ~ sum over strictly increasing k-tuples of increments of their outer
/// product. Exact for k = 1.
std::vector<Tensor> discrete_signature_baseline(const std::vector<Tensor>& points, int M);

} // namespace eqt
