#include "eqt/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace eqt {

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  return cdf + x * phi;
}

namespace {

double act_value(Activation a, double x) {
  return a == Activation::Gelu ? gelu(x) : (x > 0.0 ? x : 0.0);
}
double act_grad(Activation a, double x) {
  return a == Activation::Gelu ? gelu_grad(x) : (x > 0.0 ? 1.0 : 0.0);
}

Eigen::MatrixXd act_value_m(Activation a, const Eigen::MatrixXd& x) {
  return x.unaryExpr([a](double v) { return act_value(a, v); });
}
Eigen::MatrixXd act_grad_m(Activation a, const Eigen::MatrixXd& x) {
  return x.unaryExpr([a](double v) { return act_grad(a, v); });
}

double glorot_bound(int fan_in, int fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

} // namespace

// ---------- DenseNet ----------

DenseNet::DenseNet(std::vector<int> widths, Activation act)
    : widths_(std::move(widths)), act_(act) {
  if (widths_.size() < 2) throw std::invalid_argument("DenseNet needs at least in/out widths");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    w_.emplace_back(Eigen::MatrixXd::Zero(widths_[l + 1], widths_[l]));
    b_.emplace_back(Eigen::VectorXd::Zero(widths_[l + 1]));
    gw_.emplace_back(Eigen::MatrixXd::Zero(widths_[l + 1], widths_[l]));
    gb_.emplace_back(Eigen::VectorXd::Zero(widths_[l + 1]));
  }
}

void DenseNet::init(Rng& rng) {
  for (std::size_t l = 0; l < w_.size(); ++l) {
    const double bound = glorot_bound(static_cast<int>(w_[l].cols()), static_cast<int>(w_[l].rows()));
    for (Eigen::Index i = 0; i < w_[l].rows(); ++i)
      for (Eigen::Index j = 0; j < w_[l].cols(); ++j) w_[l](i, j) = rng.uniform(-bound, bound);
    b_[l].setZero();
  }
}

void DenseNet::set_constant(double bias) {
  for (auto& w : w_) w.setZero();
  for (auto& b : b_) b.setZero();
  b_.back().setConstant(bias);
}

Eigen::VectorXd DenseNet::forward(const Eigen::VectorXd& x) const {
  return forward_batch(x.transpose()).row(0).transpose();
}

Eigen::MatrixXd DenseNet::forward_batch(const Eigen::MatrixXd& x) const {
  Cache cache;
  return forward_batch(x, cache);
}

Eigen::MatrixXd DenseNet::forward_batch(const Eigen::MatrixXd& x, Cache& cache) const {
  if (x.cols() != widths_.front())
    throw std::invalid_argument("DenseNet::forward: input width mismatch");
  cache.pre.clear();
  cache.post.clear();
  cache.post.push_back(x);
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    Eigen::MatrixXd z = h * w_[l].transpose();
    z.rowwise() += b_[l].transpose();
    cache.pre.push_back(z);
    h = (l + 1 < w_.size()) ? act_value_m(act_, z) : z;
    cache.post.push_back(h);
  }
  return h;
}

Eigen::MatrixXd DenseNet::backward_batch(const Cache& cache, const Eigen::MatrixXd& dy) {
  Eigen::MatrixXd dz = dy;
  for (std::size_t li = w_.size(); li-- > 0;) {
    if (li + 1 < w_.size()) {
      // dy arriving at a hidden layer output: multiply by activation grad
      dz = dz.cwiseProduct(act_grad_m(act_, cache.pre[li]));
    }
    gw_[li] += dz.transpose() * cache.post[li];
    gb_[li] += dz.colwise().sum().transpose();
    dz = (dz * w_[li]).eval();
  }
  return dz;
}

std::vector<ParamView> DenseNet::params() {
  std::vector<ParamView> v;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    v.push_back({w_[l].data(), static_cast<std::size_t>(w_[l].size())});
    v.push_back({b_[l].data(), static_cast<std::size_t>(b_[l].size())});
  }
  return v;
}

std::vector<ParamView> DenseNet::grads() {
  std::vector<ParamView> v;
  for (std::size_t l = 0; l < gw_.size(); ++l) {
    v.push_back({gw_[l].data(), static_cast<std::size_t>(gw_[l].size())});
    v.push_back({gb_[l].data(), static_cast<std::size_t>(gb_[l].size())});
  }
  return v;
}

void DenseNet::zero_grads() {
  for (auto& g : gw_) g.setZero();
  for (auto& g : gb_) g.setZero();
}

std::size_t DenseNet::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < w_.size(); ++l)
    n += static_cast<std::size_t>(w_[l].size()) + static_cast<std::size_t>(b_[l].size());
  return n;
}

// ---------- PermEquivariantNet ----------

PermEquivariantNet::PermEquivariantNet(std::vector<int> channels, Activation act)
    : channels_(std::move(channels)), act_(act) {
  if (channels_.size() < 2)
    throw std::invalid_argument("PermEquivariantNet needs at least in/out channels");
  for (std::size_t l = 0; l + 1 < channels_.size(); ++l) {
    wself_.emplace_back(Eigen::MatrixXd::Zero(channels_[l + 1], channels_[l]));
    wmean_.emplace_back(Eigen::MatrixXd::Zero(channels_[l + 1], channels_[l]));
    b_.emplace_back(Eigen::VectorXd::Zero(channels_[l + 1]));
    gwself_.emplace_back(Eigen::MatrixXd::Zero(channels_[l + 1], channels_[l]));
    gwmean_.emplace_back(Eigen::MatrixXd::Zero(channels_[l + 1], channels_[l]));
    gb_.emplace_back(Eigen::VectorXd::Zero(channels_[l + 1]));
  }
}

void PermEquivariantNet::init(Rng& rng) {
  for (std::size_t l = 0; l < wself_.size(); ++l) {
    const double bound =
        glorot_bound(static_cast<int>(wself_[l].cols()), static_cast<int>(wself_[l].rows()));
    for (Eigen::Index i = 0; i < wself_[l].rows(); ++i)
      for (Eigen::Index j = 0; j < wself_[l].cols(); ++j) {
        wself_[l](i, j) = rng.uniform(-bound, bound);
        wmean_[l](i, j) = rng.uniform(-bound, bound);
      }
    b_[l].setZero();
  }
}

Eigen::VectorXd PermEquivariantNet::forward(const Eigen::VectorXd& x) const {
  Cache cache;
  return forward(x, cache);
}

Eigen::VectorXd PermEquivariantNet::forward(const Eigen::VectorXd& x, Cache& cache) const {
  cache.pre.clear();
  cache.post.clear();
  Eigen::MatrixXd h = x; // d x 1 channels
  cache.post.push_back(h);
  for (std::size_t l = 0; l < wself_.size(); ++l) {
    const Eigen::RowVectorXd mean = h.colwise().mean();
    Eigen::MatrixXd z = h * wself_[l].transpose();
    z += Eigen::VectorXd::Ones(h.rows()) * (mean * wmean_[l].transpose());
    z.rowwise() += b_[l].transpose();
    cache.pre.push_back(z);
    h = (l + 1 < wself_.size()) ? act_value_m(act_, z) : z;
    cache.post.push_back(h);
  }
  return h.col(0);
}

Eigen::VectorXd PermEquivariantNet::backward(const Cache& cache, const Eigen::VectorXd& dy) {
  Eigen::MatrixXd dz = dy;
  const double dpts = static_cast<double>(cache.post.front().rows());
  for (std::size_t li = wself_.size(); li-- > 0;) {
    if (li + 1 < wself_.size()) dz = dz.cwiseProduct(act_grad_m(act_, cache.pre[li]));
    const Eigen::MatrixXd& h = cache.post[li];
    const Eigen::RowVectorXd mean = h.colwise().mean();
    gwself_[li] += dz.transpose() * h;
    gwmean_[li] += dz.colwise().sum().transpose() * mean;
    gb_[li] += dz.colwise().sum().transpose();
    Eigen::MatrixXd dh = dz * wself_[li];
    const Eigen::RowVectorXd dmean = (dz.colwise().sum() * wmean_[li]) / dpts;
    dh.rowwise() += dmean;
    dz = std::move(dh);
  }
  return dz.col(0);
}

std::vector<ParamView> PermEquivariantNet::params() {
  std::vector<ParamView> v;
  for (std::size_t l = 0; l < wself_.size(); ++l) {
    v.push_back({wself_[l].data(), static_cast<std::size_t>(wself_[l].size())});
    v.push_back({wmean_[l].data(), static_cast<std::size_t>(wmean_[l].size())});
    v.push_back({b_[l].data(), static_cast<std::size_t>(b_[l].size())});
  }
  return v;
}

std::vector<ParamView> PermEquivariantNet::grads() {
  std::vector<ParamView> v;
  for (std::size_t l = 0; l < gwself_.size(); ++l) {
    v.push_back({gwself_[l].data(), static_cast<std::size_t>(gwself_[l].size())});
    v.push_back({gwmean_[l].data(), static_cast<std::size_t>(gwmean_[l].size())});
    v.push_back({gb_[l].data(), static_cast<std::size_t>(gb_[l].size())});
  }
  return v;
}

void PermEquivariantNet::zero_grads() {
  for (auto& g : gwself_) g.setZero();
  for (auto& g : gwmean_) g.setZero();
  for (auto& g : gb_) g.setZero();
}

std::size_t PermEquivariantNet::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < wself_.size(); ++l)
    n += 2 * static_cast<std::size_t>(wself_[l].size()) + static_cast<std::size_t>(b_[l].size());
  return n;
}

// ---------- Optimizer ----------

double Optimizer::current_lr() const {
  switch (cfg_.schedule) {
    case Schedule::Constant: return cfg_.lr;
    case Schedule::Cosine: {
      if (cfg_.total_steps <= 0) return cfg_.lr;
      const double frac =
          std::min<double>(1.0, static_cast<double>(t_) / static_cast<double>(cfg_.total_steps));
      return 0.5 * cfg_.lr * (1.0 + std::cos(M_PI * frac));
    }
    case Schedule::Exponential: return cfg_.lr * std::pow(cfg_.decay, static_cast<double>(t_));
  }
  return cfg_.lr;
}

void Optimizer::step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("Optimizer: view count mismatch");
  std::size_t total = 0;
  for (const auto& p : params) total += p.size;
  if (m_.empty()) {
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
  } else if (m_.size() != total) {
    throw std::invalid_argument("Optimizer: parameter layout changed between steps");
  }

  const double lr = current_lr();
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

  std::size_t off = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* p = params[k].data;
    const double* g = grads[k].data;
    for (std::size_t i = 0; i < params[k].size; ++i, ++off) {
      m_[off] = cfg_.beta1 * m_[off] + (1.0 - cfg_.beta1) * g[i];
      v_[off] = cfg_.beta2 * v_[off] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m_[off] / bc1;
      const double vhat = v_[off] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i]);
    }
  }
}

} // namespace eqt
