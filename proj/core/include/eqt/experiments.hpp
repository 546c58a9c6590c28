#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "eqt/groups.hpp"
#include "eqt/models.hpp"
#include "eqt/nn.hpp"
#include "eqt/rng.hpp"
#include "eqt/signature.hpp"
#include "eqt/tensor.hpp"

namespace eqt {

// ======================= path signatures =======================

/// One path-regression sample: polynomial coefficients (column m = degree-m
/// coefficient vector), the n sampled points, and the truncated-signature
/// truth S_1..S_M of the finely interpolated path.
struct PathSample {
  Eigen::MatrixXd coeffs; ///< d x (degree+1)
  std::vector<Tensor> points;
  std::vector<Tensor> truth;
};

Eigen::VectorXd poly_eval(const Eigen::MatrixXd& coeffs, double u);
Eigen::VectorXd poly_deriv(const Eigen::MatrixXd& coeffs, double u);

/// Coefficients ~ U[-1,1]; n evenly spaced points on [-1,1]; truth from
/// signature_oracle on `oracle_segments` segments of the same polynomial.
PathSample gen_poly_path(Rng& rng, int d, int degree, int n_points, int M,
                         int oracle_segments = 1000);

/// (1/M) sum_k (1/d^k) ||S_k - pred_k||_F^2 with d = metric_d.
double signature_metric(const std::vector<Tensor>& truth, const std::vector<Tensor>& pred,
                        int metric_d);

/// Vectors-to-tensor model for all signature levels at once: one shared
/// coefficient MLP reads the Gram features and emits one coefficient per
/// basis term of every level k = 1..M.
class SignatureModel {
public:
  SignatureModel() = default;
  SignatureModel(int n, int M, const Metric& metric, std::vector<int> hidden, Activation act,
                 Rng& rng);

  std::vector<Tensor> forward(const std::vector<Tensor>& points) const;

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  /// Training-path forward returning the flat per-level predictions and
  /// caching term values; backward consumes the same cache.
  struct Workspace {
    DenseNet::Cache net_cache;
    Eigen::VectorXd coeff;
    // term values, flattened per level: term_values[k-1] is (#terms x d^k)
    std::vector<RowMat> term_values;
  };
  std::vector<Tensor> forward(const std::vector<Tensor>& points, Workspace& ws) const;
  void backward(const std::vector<Tensor>& points, const std::vector<Tensor>& dout,
                Workspace& ws);

  int n_inputs() const { return n_; }
  int levels() const { return m_; }
  const Metric& metric() const { return metric_; }
  const std::vector<std::vector<BasisTerm>>& terms_per_level() const { return terms_; }
  std::size_t total_terms() const;
  DenseNet& net() { return net_; }
  const DenseNet& net() const { return net_; }

private:
  int n_ = 0, m_ = 0;
  Metric metric_ = Metric::euclidean(1);
  std::vector<std::vector<BasisTerm>> terms_;
  DenseNet net_;
};

// ======================= stress-strain =======================

/// Cauchy-Green strain C = F^T F and the neo-Hookean second Piola-Kirchhoff
/// stress S = (lambda/2 log det C - mu) C^-1 + mu I.
struct NeoHookeanSample {
  Tensor C;
  Tensor S;
};

/// F = I + eta*G with G standard normal, resampled until det F > 0.2
/// (at most 100 attempts).
NeoHookeanSample gen_neohookean(Rng& rng, double lambda, double mu, double eta, int d = 3);

/// Closed-form stress from a strain matrix.
Eigen::MatrixXd neohookean_stress(const Eigen::MatrixXd& c, double lambda, double mu);

// ======================= sparse vector =======================

enum class SparseScheme { AcceptReject, BernoulliGaussian, CorrectedBernoulliGaussian,
                          BernoulliRademacher };
enum class CovarianceKind { Identity, Diagonal, Random };

SparseScheme parse_scheme(const std::string& name);
CovarianceKind parse_covariance(const std::string& name);
std::string scheme_name(SparseScheme);
std::string covariance_name(CovarianceKind);

/// Raw (pre-normalization) sparse vector draw of the given scheme.
Eigen::VectorXd sample_sparse_vector(Rng& rng, SparseScheme scheme, int n, double eps);

/// Planted-sparse-vector instance: `basis` is the n x d orthonormal-column
/// matrix observed by the solver, `target` the planted unit vector lying in
/// its column span.
struct SparseVectorInstance {
  Eigen::MatrixXd basis;
  Eigen::VectorXd target;
};

/// Noise distribution of the non-planted subspace directions. One draw per
/// experiment trial: every instance of a dataset shares it.
struct NoiseCovariance {
  CovarianceKind kind = CovarianceKind::Identity;
  Eigen::VectorXd diag_sd; ///< per-coordinate std dev (Diagonal)
  Eigen::MatrixXd chol;    ///< Cholesky factor of M M^T + 1e-5 I (Random)
};

NoiseCovariance sample_covariance(Rng& rng, CovarianceKind kind, int n);

SparseVectorInstance gen_sparse_instance(Rng& rng, SparseScheme scheme, const NoiseCovariance& cov,
                                         int n, int d, double eps);

/// Convenience form drawing a fresh covariance for this one instance.
SparseVectorInstance gen_sparse_instance(Rng& rng, SparseScheme scheme, CovarianceKind cov, int n,
                                         int d, double eps);

/// h(a_1..a_n) = sum_i (||a_i||^2 - d/n) a_i a_i^T.
Eigen::MatrixXd sos_h_hopkins(const Eigen::MatrixXd& basis);
/// h(a_1..a_n) = sum_i (||a_i||^2 - (d-1)/n) a_i a_i^T - (3/n) I.
Eigen::MatrixXd sos_h_mao(const Eigen::MatrixXd& basis);

/// v_hat = basis * (unit top eigenvector of h); the estimate's sign is
/// unconstrained (the metric <v, v_hat>^2 does not see it).
Eigen::VectorXd estimate_sparse(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& h);

inline double alignment(const Eigen::VectorXd& v, const Eigen::VectorXd& vhat) {
  const double c = v.dot(vhat);
  return c * c;
}

/// Learned symmetric h: the Full variant realizes
/// sum_{i<=j} q_ij(Gram) (a_i a_j^T + a_j a_i^T)/2 + q_I(Gram) I; the Diag
/// variant uses only the norms and the a_i a_i^T terms.
class SparseHModel {
public:
  enum class Variant { Full, Diag };

  SparseHModel() = default;
  SparseHModel(Variant variant, int n, int d, std::vector<int> hidden, Activation act, Rng& rng);

  Eigen::VectorXd features(const Eigen::MatrixXd& basis) const;
  Eigen::MatrixXd h(const Eigen::MatrixXd& basis) const;

  /// h for externally chosen coefficients (the SoS estimators are points of
  /// this class).
  static Eigen::MatrixXd assemble(Variant variant, const Eigen::MatrixXd& basis,
                                  const Eigen::VectorXd& coeffs);

  /// 1 - <v, v_hat>^2 and its parameter gradient (through the top
  /// eigenvector); returns the loss.
  double loss_and_grad(const SparseVectorInstance& inst);

  Variant variant() const { return variant_; }
  int n_rows() const { return n_; }
  int dim() const { return d_; }
  std::size_t coeff_count() const;
  DenseNet& net() { return net_; }
  const DenseNet& net() const { return net_; }

private:
  Variant variant_ = Variant::Full;
  int n_ = 0, d_ = 0;
  DenseNet net_;
};

/// dLoss/dh of 1 - <v, basis*u_top(h)>^2 at a symmetric h; eigengap terms
/// below 1e-9 are dropped.
Eigen::MatrixXd sparse_loss_h_gradient(const SparseVectorInstance& inst, const Eigen::MatrixXd& h,
                                       double* loss_out);

// ======================= equivariance audits =======================

/// Samples a group element of the model's metric: Haar O(d), the bounded
/// Lorentz recipe for Minkowski{1,3}, exp(J S) for Sp(d).
GroupElement sample_group_element(const Metric& metric, Rng& rng);

/// max over trials of ||f(g x) - g f(x)||_F / (1 + ||f(x)||_F) with fresh
/// inputs and group elements, one overload per model class.
double equivariance_audit(const VecToTensorModel& model, Rng& rng, int trials,
                          double input_scale = 1.0);
double equivariance_audit(const SignatureModel& model, Rng& rng, int trials);
double equivariance_audit(const EigenEquivariantModel& model, Rng& rng, int trials,
                          double eigen_gap = 0.1);
double equivariance_audit(const SparseHModel& model, Rng& rng, int trials);
/// Defect of an unconstrained MLP on vectors (reported, not asserted).
double equivariance_audit(const DenseNet& net, int n, int d, Rng& rng, int trials);

} // namespace eqt
