#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "eqt/rng.hpp"

namespace eqt {

enum class Activation { ReLU, Gelu };

/// Exact Gaussian-CDF GELU (not the tanh approximation), so derivative
/// tests have a closed form: gelu(x) = x Phi(x), gelu'(x) = Phi(x) + x phi(x).
double gelu(double x);
double gelu_grad(double x);

/// Mutable view over a parameter (or gradient) block.
struct ParamView {
  double* data;
  std::size_t size;
};

/// Fully connected net, float64, hidden activations only (linear output).
/// Reverse-mode gradients are exact; batched rows are samples.
class DenseNet {
public:
  DenseNet() = default;
  DenseNet(std::vector<int> widths, Activation act);

  /// Glorot-uniform: +-sqrt(6/(fan_in+fan_out)).
  void init(Rng& rng);
  /// All weights zero, biases set to `bias` (constant-output net).
  void set_constant(double bias);

  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }
  Activation activation() const { return act_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;

  struct Cache {
    std::vector<Eigen::MatrixXd> pre;  // pre-activation per layer
    std::vector<Eigen::MatrixXd> post; // post-activation (post[0] = input)
  };
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x, Cache& cache) const;
  /// Accumulates parameter gradients; returns dL/dx.
  Eigen::MatrixXd backward_batch(const Cache& cache, const Eigen::MatrixXd& dy);

  std::vector<ParamView> params();
  std::vector<ParamView> grads();
  void zero_grads();
  std::size_t param_count() const;

  const std::vector<Eigen::MatrixXd>& weights() const { return w_; }
  const std::vector<Eigen::VectorXd>& biases() const { return b_; }

private:
  std::vector<int> widths_;
  Activation act_ = Activation::Gelu;
  std::vector<Eigen::MatrixXd> w_, gw_;
  std::vector<Eigen::VectorXd> b_, gb_;
};

/// Permutation-equivariant layers on a set of d scalars with c channels:
/// y = x W_self^T + (1 rowmean(x)) W_mean^T + 1 b^T, stacked with
/// activations. net(P x) = P net(x) for every permutation matrix P.
class PermEquivariantNet {
public:
  PermEquivariantNet() = default;
  PermEquivariantNet(std::vector<int> channels, Activation act);

  void init(Rng& rng);

  /// x: d eigenvalues in, d values out (channel width 1 at both ends).
  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;

  struct Cache {
    std::vector<Eigen::MatrixXd> pre, post;
  };
  Eigen::VectorXd forward(const Eigen::VectorXd& x, Cache& cache) const;
  Eigen::VectorXd backward(const Cache& cache, const Eigen::VectorXd& dy);

  std::vector<ParamView> params();
  std::vector<ParamView> grads();
  void zero_grads();
  std::size_t param_count() const;
  const std::vector<int>& channels() const { return channels_; }
  Activation activation() const { return act_; }

private:
  std::vector<int> channels_;
  Activation act_ = Activation::Gelu;
  std::vector<Eigen::MatrixXd> wself_, wmean_, gwself_, gwmean_;
  std::vector<Eigen::VectorXd> b_, gb_;
};

enum class Schedule { Constant, Cosine, Exponential };

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;      ///< decoupled (AdamW) when nonzero
  Schedule schedule = Schedule::Constant;
  std::int64_t total_steps = 0;   ///< cosine horizon T
  double decay = 0.999;           ///< exponential factor per step
};

/// Adam/AdamW with a step-indexed schedule; step order and buffers are
/// deterministic given the parameter views.
class Optimizer {
public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  double current_lr() const;
  std::int64_t step_count() const { return t_; }

  void step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads);

private:
  OptimizerConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<double> m_, v_;
};

} // namespace eqt
