#pragma once

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <vector>

#include "eqt/groups.hpp"
#include "eqt/isotropic.hpp"
#include "eqt/nn.hpp"
#include "eqt/tensor.hpp"

namespace eqt {

/// One product term (v_{J_1} (x) ... (x) v_{J_{k'-2t}} (x) theta^t)^sigma
/// of the vectors-to-tensor parameterization: t metric-tensor factors, a
/// slot permutation from the reduced set, and a non-decreasing multi-index
/// J (0-based) into the n inputs.
struct BasisTerm {
  int t = 0;
  Perm sigma;
  std::vector<int> J;
};

/// All distinct terms for n input vectors and output order k', in a fixed
/// deterministic order (t ascending; within t, theta-slot subsets, canonical
/// matchings, then slot labelings lexicographically). Terms that coincide as
/// tensors for every input (theta^t stabilizer redundancy, equal-label slot
/// swaps) appear once. Count: sum_t C(k',2t) (2t-1)!! n^(k'-2t).
std::vector<BasisTerm> enumerate_basis_terms(int n, int k_prime, const Metric& metric);

/// (v_{J_1} (x) ... (x) theta^t)^sigma for concrete input vectors.
Tensor evaluate_term(const BasisTerm& term, const std::vector<Tensor>& vectors,
                     const Metric& metric);

/// n x n Gram matrix of <v_i, v_j>_G; symmetric for Euclidean/Minkowski,
/// antisymmetric for symplectic.
Eigen::MatrixXd invariant_features(const std::vector<Tensor>& vectors, const Metric& metric);

/// Flattened feature vector the coefficient networks consume: upper
/// triangle (with diagonal) for symmetric metrics, the full matrix for the
/// symplectic one; entries divided by d.
Eigen::VectorXd flatten_features(const Eigen::MatrixXd& gram, const Metric& metric);
int feature_dim(int n, const Metric& metric);

/// Learnable equivariant map from n vectors to an order-k' tensor:
/// f(v) = sum_terms net(features)[term] * term(v). The coefficient network
/// is shared across all terms (one output per term).
class VecToTensorModel {
public:
  VecToTensorModel() = default;
  /// `hidden` are the MLP hidden widths; input/output widths derive from n,
  /// k', and the metric.
  VecToTensorModel(int n, int k_prime, const Metric& metric, std::vector<int> hidden,
                   Activation act, Rng& rng);

  Tensor forward(const std::vector<Tensor>& vectors) const;

  /// Accumulates dLoss/dparams given dLoss/doutput.
  void backward(const std::vector<Tensor>& vectors, const Tensor& dout);

  int n_inputs() const { return n_; }
  int output_order() const { return k_prime_; }
  const Metric& metric() const { return metric_; }
  const std::vector<BasisTerm>& terms() const { return terms_; }
  DenseNet& net() { return net_; }
  const DenseNet& net() const { return net_; }

private:
  int n_ = 0;
  int k_prime_ = 0;
  Metric metric_ = Metric::euclidean(1);
  std::vector<BasisTerm> terms_;
  DenseNet net_;
};

/// Q f(Lambda) Q^T for a symmetric matrix (eigenvalues ascending): the
/// spectral calculus the eigen-route model rides on. Throws if
/// max|A - A^T| > 1e-9; output is exactly symmetrized.
Eigen::MatrixXd spectral_apply(const Eigen::MatrixXd& a,
                               const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f);

/// O(d)-equivariant map on symmetric matrices via the spectral route:
/// f(A) = Q f~(Lambda) Q^T with f~ permutation equivariant on the
/// (ascending) eigenvalues.
class EigenEquivariantModel {
public:
  EigenEquivariantModel() = default;
  EigenEquivariantModel(int d, std::vector<int> hidden_channels, Activation act, Rng& rng);

  /// Throws if max|A - A^T| > 1e-9. Output is exactly symmetrized.
  Tensor forward_sym(const Tensor& a) const;
  Eigen::MatrixXd forward_sym(const Eigen::MatrixXd& a) const;

  /// dLoss/dparams from dLoss/doutput (gradients flow through the
  /// eigenvalue path only; Q is treated as fixed, which is exact for the
  /// parameter gradient).
  void backward(const Eigen::MatrixXd& a, const Eigen::MatrixXd& dout);

  int dim() const { return d_; }
  PermEquivariantNet& net() { return net_; }
  const PermEquivariantNet& net() const { return net_; }

private:
  int d_ = 0;
  PermEquivariantNet net_;
};

/// Tensor-input spec for the degree-bounded general parameterization.
struct TensorSpec {
  int order = 1;
  int parity = +1;
};

/// One fixed map (a_1..a_n) -> contract_K(a_{l_1} (x) ... (x) a_{l_r} (x) c)
/// with c an isotropic tensor; linear combinations of these span the
/// O(d)-equivariant polynomials of degree <= R.
struct GeneralBasisMap {
  std::vector<int> inputs; ///< chosen input indices, non-decreasing, 0-based
  int contract_k = 0;      ///< total contracted order
  Perm sigma;              ///< isotropic element identifier
  Tensor iso;              ///< materialized isotropic tensor
};

/// Enumerates the maps for inputs of the given orders/parities, output
/// (k', p'), degree <= R, Euclidean metric in dimension d. Vanishing
/// parity/order combinations emit nothing. Redundant maps are dropped two
/// ways: exact block-swap symmetrization over repeated inputs plus a rank
/// filter (always), and optionally output-slot symmetrization for consumers
/// that keep only symmetric order-2 outputs. Throws when an isotropic order
/// would exceed 8.
std::vector<GeneralBasisMap> enumerate_general_basis(int d, const std::vector<TensorSpec>& inputs,
                                                     const TensorSpec& output, int degree,
                                                     bool symmetric_output = false);

Tensor apply_general_basis(const GeneralBasisMap& map, const std::vector<Tensor>& inputs);

// ---------- checkpoint format ----------
// "EQC1" | u32 model kind | model header | terms (t, sigma, J as u32
// arrays) | f64 weights; all little-endian. Round-trips bit-exactly.

void write_vec_model(std::ostream& os, const VecToTensorModel& m);
VecToTensorModel read_vec_model(std::istream& is);
void write_eigen_model(std::ostream& os, const EigenEquivariantModel& m);
EigenEquivariantModel read_eigen_model(std::istream& is);

} // namespace eqt
