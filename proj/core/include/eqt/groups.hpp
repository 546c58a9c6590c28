#pragma once

#include <Eigen/Dense>

#include "eqt/rng.hpp"
#include "eqt/tensor.hpp"

namespace eqt {

/// A verified element of O(d), O(s,d-s), or Sp(d): a d x d matrix g with
/// g^T theta_G g = theta_G, tagged with its group and cached det sign.
class GroupElement {
public:
  /// Verifies membership to `tol` (max |g^T theta g - theta|); throws
  /// std::invalid_argument past it.
  static GroupElement from_matrix(Eigen::MatrixXd m, const Metric& group, double tol = 1e-10);

  static GroupElement identity(const Metric& group);

  const Eigen::MatrixXd& matrix() const { return mat_; }
  /// Row-major copy used by the tensor kernels.
  const std::vector<double>& matrix_rowmajor() const { return row_major_; }
  const Metric& group() const { return group_; }
  int dim() const { return group_.dim(); }
  /// sign(det g) for orthogonal-type groups; +1 for symplectic.
  int det_sign() const { return det_sign_; }

private:
  GroupElement(Eigen::MatrixXd m, const Metric& g, int det_sign);
  Eigen::MatrixXd mat_;
  Metric group_;
  int det_sign_;
  std::vector<double> row_major_;
};

/// max |g^T theta_G g - theta_G|.
double verify_membership(const Eigen::MatrixXd& g, const Metric& metric);
inline double verify_membership(const GroupElement& g, const Metric& metric) {
  return verify_membership(g.matrix(), metric);
}

/// Haar sample from O(d): QR of a Gaussian matrix with the R-diagonal
/// sign correction.
GroupElement sample_orthogonal(int d, Rng& rng);

/// Bounded Lorentz sample in the time-first Minkowski{1,3} convention:
/// L = T(B) Lambda(beta) R(Q) with boost entries from a truncated normal
/// on [-1/sqrt(3), 1/sqrt(3)], Q Haar on O(3), B = +-1.
GroupElement sample_lorentz(Rng& rng);

/// Pure boost matrix Lambda(beta), time-first, ||beta|| < 1.
Eigen::MatrixXd lorentz_boost(const Eigen::Vector3d& beta);

/// Sp(d) sample g = exp(J_d S), S symmetric with N(0, 1/d) entries.
/// Non-normative compact-ish sampler; residual stays below 1e-8 contract.
GroupElement sample_symplectic(int d, Rng& rng);

/// Matrix exponential by scaling-and-squaring with a Taylor kernel.
Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& a);

/// Group product g*h (verified).
GroupElement compose(const GroupElement& g, const GroupElement& h);

/// Structural inverse: g^T (Euclidean), theta g^T theta (Minkowski),
/// -J g^T J (symplectic).
GroupElement inverse(const GroupElement& g);

} // namespace eqt
