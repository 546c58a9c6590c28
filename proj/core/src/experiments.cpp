#include "eqt/experiments.hpp"

#include <algorithm>
#include <cmath>

namespace eqt {

// ======================= path signatures =======================

Eigen::VectorXd poly_eval(const Eigen::MatrixXd& coeffs, double u) {
  const int d = static_cast<int>(coeffs.rows());
  const int deg = static_cast<int>(coeffs.cols()) - 1;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
  double up = 1.0;
  for (int m = 0; m <= deg; ++m) {
    x += coeffs.col(m) * up;
    up *= u;
  }
  return x;
}

Eigen::VectorXd poly_deriv(const Eigen::MatrixXd& coeffs, double u) {
  const int d = static_cast<int>(coeffs.rows());
  const int deg = static_cast<int>(coeffs.cols()) - 1;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
  double up = 1.0;
  for (int m = 1; m <= deg; ++m) {
    x += coeffs.col(m) * (static_cast<double>(m) * up);
    up *= u;
  }
  return x;
}

namespace {

Tensor vector_tensor(const Eigen::VectorXd& v) {
  std::vector<double> c(v.data(), v.data() + v.size());
  return Tensor(static_cast<int>(v.size()), 1, +1, std::move(c));
}

Tensor matrix_tensor(const Eigen::MatrixXd& m) {
  const int d = static_cast<int>(m.rows());
  std::vector<double> c(static_cast<std::size_t>(d) * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) c[static_cast<std::size_t>(i) * d + j] = m(i, j);
  return Tensor(d, 2, +1, std::move(c));
}

} // namespace

PathSample gen_poly_path(Rng& rng, int d, int degree, int n_points, int M, int oracle_segments) {
  if (degree < 1) throw std::invalid_argument("gen_poly_path: degree must be >= 1");
  if (n_points < 2) throw std::invalid_argument("gen_poly_path: need at least 2 points");
  PathSample s;
  s.coeffs.resize(d, degree + 1);
  for (int i = 0; i < d; ++i)
    for (int m = 0; m <= degree; ++m) s.coeffs(i, m) = rng.uniform(-1.0, 1.0);

  s.points.reserve(static_cast<std::size_t>(n_points));
  for (int j = 0; j < n_points; ++j) {
    const double u = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(n_points - 1);
    s.points.push_back(vector_tensor(poly_eval(s.coeffs, u)));
  }

  std::vector<Tensor> fine;
  fine.reserve(static_cast<std::size_t>(oracle_segments) + 1);
  for (int j = 0; j <= oracle_segments; ++j) {
    const double u = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(oracle_segments);
    fine.push_back(vector_tensor(poly_eval(s.coeffs, u)));
  }
  s.truth = signature_oracle(fine, M);
  return s;
}

double signature_metric(const std::vector<Tensor>& truth, const std::vector<Tensor>& pred,
                        int metric_d) {
  if (truth.size() != pred.size() || truth.empty())
    throw std::invalid_argument("signature_metric: level count mismatch");
  const int M = static_cast<int>(truth.size());
  double total = 0.0;
  double dk = 1.0;
  for (int k = 1; k <= M; ++k) {
    dk *= static_cast<double>(metric_d);
    const Tensor diff = sub(truth[static_cast<std::size_t>(k - 1)], pred[static_cast<std::size_t>(k - 1)]);
    const double f = diff.norm();
    total += f * f / dk;
  }
  return total / static_cast<double>(M);
}

// ---- SignatureModel ----

namespace {

// Term evaluation specialized for tight loops: entry(idx) is a product of
// vector components at assigned slots and theta entries at paired slots.
struct CompiledTerm {
  std::vector<std::pair<int, int>> vec_slots;   // (input index, slot)
  std::vector<std::pair<int, int>> theta_pairs; // (slot, slot)
};

CompiledTerm compile_term(const BasisTerm& term) {
  CompiledTerm ct;
  const Perm inv = perm_inverse(term.sigma);
  const int m = static_cast<int>(term.J.size());
  for (int b = 0; b < m; ++b)
    ct.vec_slots.emplace_back(term.J[static_cast<std::size_t>(b)], inv[static_cast<std::size_t>(b)]);
  for (int i = 0; i < term.t; ++i)
    ct.theta_pairs.emplace_back(inv[static_cast<std::size_t>(m + 2 * i)],
                                inv[static_cast<std::size_t>(m + 2 * i + 1)]);
  return ct;
}

// Writes the d^k values of the term into out (row-major over the k slots).
void eval_compiled(const CompiledTerm& ct, const std::vector<const double*>& vectors,
                   const std::vector<double>& theta, int d, int k, double* out) {
  std::vector<int> idx(static_cast<std::size_t>(k), 0);
  const std::size_t total = [&] {
    std::size_t t = 1;
    for (int q = 0; q < k; ++q) t *= static_cast<std::size_t>(d);
    return t;
  }();
  for (std::size_t off = 0; off < total; ++off) {
    double v = 1.0;
    for (const auto& [input, slot] : ct.vec_slots) v *= vectors[static_cast<std::size_t>(input)][idx[static_cast<std::size_t>(slot)]];
    for (const auto& [sa, sb] : ct.theta_pairs)
      v *= theta[static_cast<std::size_t>(idx[static_cast<std::size_t>(sa)]) * d +
                 static_cast<std::size_t>(idx[static_cast<std::size_t>(sb)])];
    out[off] = v;
    for (int q = k - 1; q >= 0; --q) {
      auto uq = static_cast<std::size_t>(q);
      if (++idx[uq] < d) break;
      idx[uq] = 0;
    }
  }
}

} // namespace

SignatureModel::SignatureModel(int n, int M, const Metric& metric, std::vector<int> hidden,
                               Activation act, Rng& rng)
    : n_(n), m_(M), metric_(metric) {
  if (M < 1) throw std::invalid_argument("SignatureModel: M must be >= 1");
  for (int k = 1; k <= M; ++k) terms_.push_back(enumerate_basis_terms(n, k, metric));
  std::vector<int> widths;
  widths.push_back(feature_dim(n, metric));
  for (int h : hidden) widths.push_back(h);
  widths.push_back(static_cast<int>(total_terms()));
  net_ = DenseNet(std::move(widths), act);
  net_.init(rng);
}

std::size_t SignatureModel::total_terms() const {
  std::size_t t = 0;
  for (const auto& lv : terms_) t += lv.size();
  return t;
}

std::vector<Tensor> SignatureModel::forward(const std::vector<Tensor>& points) const {
  Workspace ws;
  return forward(points, ws);
}

std::vector<Tensor> SignatureModel::forward(const std::vector<Tensor>& points,
                                            Workspace& ws) const {
  if (static_cast<int>(points.size()) != n_)
    throw std::invalid_argument("SignatureModel::forward: wrong number of points");
  const int d = metric_.dim();
  const Eigen::VectorXd phi = flatten_features(invariant_features(points, metric_), metric_);
  ws.coeff = net_.forward_batch(phi.transpose(), ws.net_cache).row(0).transpose();

  std::vector<const double*> vecs;
  vecs.reserve(points.size());
  for (const auto& p : points) vecs.push_back(p.components().data());
  const std::vector<double> theta = metric_.matrix();

  ws.term_values.assign(terms_.size(), {});
  std::vector<Tensor> out;
  out.reserve(terms_.size());
  Eigen::Index coeff_base = 0;
  for (int k = 1; k <= m_; ++k) {
    const auto& level_terms = terms_[static_cast<std::size_t>(k - 1)];
    std::size_t dk = 1;
    for (int q = 0; q < k; ++q) dk *= static_cast<std::size_t>(d);
    RowMat& tv = ws.term_values[static_cast<std::size_t>(k - 1)];
    tv.resize(static_cast<Eigen::Index>(level_terms.size()), static_cast<Eigen::Index>(dk));
    for (std::size_t i = 0; i < level_terms.size(); ++i) {
      const CompiledTerm ct = compile_term(level_terms[i]);
      eval_compiled(ct, vecs, theta, d, k, tv.row(static_cast<Eigen::Index>(i)).data());
    }
    const Eigen::VectorXd level_coeff =
        ws.coeff.segment(coeff_base, static_cast<Eigen::Index>(level_terms.size()));
    const Eigen::VectorXd flat = tv.transpose() * level_coeff;
    std::vector<double> comp(flat.data(), flat.data() + flat.size());
    out.emplace_back(d, k, +1, std::move(comp));
    coeff_base += static_cast<Eigen::Index>(level_terms.size());
  }
  return out;
}

void SignatureModel::backward(const std::vector<Tensor>& points, const std::vector<Tensor>& dout,
                              Workspace& ws) {
  (void)points;
  Eigen::MatrixXd dcoeff(1, static_cast<Eigen::Index>(total_terms()));
  Eigen::Index base = 0;
  for (int k = 1; k <= m_; ++k) {
    const RowMat& tv = ws.term_values[static_cast<std::size_t>(k - 1)];
    const auto& g = dout[static_cast<std::size_t>(k - 1)];
    Eigen::Map<const Eigen::VectorXd> gflat(g.components().data(),
                                            static_cast<Eigen::Index>(g.size()));
    dcoeff.block(0, base, 1, tv.rows()) = (tv * gflat).transpose();
    base += tv.rows();
  }
  net_.backward_batch(ws.net_cache, dcoeff);
}

// ======================= stress-strain =======================

Eigen::MatrixXd neohookean_stress(const Eigen::MatrixXd& c, double lambda, double mu) {
  const int d = static_cast<int>(c.rows());
  const double logdet = std::log(c.determinant());
  const Eigen::MatrixXd cinv = c.inverse();
  return (0.5 * lambda * logdet - mu) * cinv + mu * Eigen::MatrixXd::Identity(d, d);
}

NeoHookeanSample gen_neohookean(Rng& rng, double lambda, double mu, double eta, int d) {
  if (lambda <= 0 || mu <= 0) throw std::invalid_argument("gen_neohookean: lambda, mu must be > 0");
  if (!(eta > 0 && eta <= 0.5)) throw std::invalid_argument("gen_neohookean: eta must be in (0, 0.5]");
  Eigen::MatrixXd f(d, d);
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) f(i, j) = (i == j ? 1.0 : 0.0) + eta * rng.gaussian();
    ok = f.determinant() > 0.2;
  }
  if (!ok) throw numerical_error("gen_neohookean: no valid deformation gradient in 100 draws");
  Eigen::MatrixXd c = f.transpose() * f;
  c = 0.5 * (c + c.transpose());
  Eigen::MatrixXd s = neohookean_stress(c, lambda, mu);
  s = 0.5 * (s + s.transpose());
  return {matrix_tensor(c), matrix_tensor(s)};
}

// ======================= sparse vector =======================

SparseScheme parse_scheme(const std::string& name) {
  if (name == "ar" || name == "accept_reject") return SparseScheme::AcceptReject;
  if (name == "bg" || name == "bernoulli_gaussian") return SparseScheme::BernoulliGaussian;
  if (name == "cbg" || name == "corrected_bernoulli_gaussian")
    return SparseScheme::CorrectedBernoulliGaussian;
  if (name == "br" || name == "bernoulli_rademacher") return SparseScheme::BernoulliRademacher;
  throw std::invalid_argument("unknown sparse scheme: " + name);
}

CovarianceKind parse_covariance(const std::string& name) {
  if (name == "identity") return CovarianceKind::Identity;
  if (name == "diagonal") return CovarianceKind::Diagonal;
  if (name == "random") return CovarianceKind::Random;
  throw std::invalid_argument("unknown covariance kind: " + name);
}

std::string scheme_name(SparseScheme s) {
  switch (s) {
    case SparseScheme::AcceptReject: return "ar";
    case SparseScheme::BernoulliGaussian: return "bg";
    case SparseScheme::CorrectedBernoulliGaussian: return "cbg";
    case SparseScheme::BernoulliRademacher: return "br";
  }
  return "?";
}

std::string covariance_name(CovarianceKind c) {
  switch (c) {
    case CovarianceKind::Identity: return "identity";
    case CovarianceKind::Diagonal: return "diagonal";
    case CovarianceKind::Random: return "random";
  }
  return "?";
}

Eigen::VectorXd sample_sparse_vector(Rng& rng, SparseScheme scheme, int n, double eps) {
  if (eps <= 0 || eps > 1) throw std::invalid_argument("sample_sparse_vector: eps in (0,1]");
  Eigen::VectorXd v(n);
  switch (scheme) {
    case SparseScheme::AcceptReject: {
      const double threshold = 1.0 / (eps * static_cast<double>(n));
      for (int attempt = 0; attempt < 100000; ++attempt) {
        for (int i = 0; i < n; ++i) v(i) = rng.gaussian();
        v.normalize();
        double n4 = 0.0;
        for (int i = 0; i < n; ++i) n4 += v(i) * v(i) * v(i) * v(i);
        if (n4 >= threshold) return v;
      }
      throw numerical_error("sample_sparse_vector: accept/reject cap (1e5) exhausted");
    }
    case SparseScheme::BernoulliGaussian: {
      const double sd = 1.0 / std::sqrt(eps * static_cast<double>(n));
      for (int i = 0; i < n; ++i) v(i) = rng.bernoulli(eps) ? sd * rng.gaussian() : 0.0;
      return v;
    }
    case SparseScheme::CorrectedBernoulliGaussian: {
      if (eps > 1.0 / 3.0)
        throw std::invalid_argument("corrected Bernoulli-Gaussian needs eps <= 1/3");
      const double q = std::sqrt((1.0 - eps) * (1.0 - 3.0 * eps) / 3.0);
      const double sd_on = std::sqrt((eps + q) / (eps * static_cast<double>(n)));
      const double sd_off = std::sqrt((1.0 - eps - q) / ((1.0 - eps) * static_cast<double>(n)));
      for (int i = 0; i < n; ++i)
        v(i) = rng.bernoulli(eps) ? sd_on * rng.gaussian() : sd_off * rng.gaussian();
      return v;
    }
    case SparseScheme::BernoulliRademacher: {
      const double mag = 1.0 / std::sqrt(eps * static_cast<double>(n));
      for (int i = 0; i < n; ++i)
        v(i) = rng.bernoulli(eps) ? (rng.sign() > 0 ? mag : -mag) : 0.0;
      return v;
    }
  }
  throw std::invalid_argument("sample_sparse_vector: bad scheme");
}

NoiseCovariance sample_covariance(Rng& rng, CovarianceKind kind, int n) {
  NoiseCovariance cov;
  cov.kind = kind;
  switch (kind) {
    case CovarianceKind::Identity: break;
    case CovarianceKind::Diagonal: {
      cov.diag_sd.resize(n);
      for (int i = 0; i < n; ++i) cov.diag_sd(i) = std::sqrt(rng.uniform(0.5, 1.5));
      break;
    }
    case CovarianceKind::Random: {
      Eigen::MatrixXd m(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = rng.gaussian();
      Eigen::MatrixXd sigma = m * m.transpose();
      sigma.diagonal().array() += 1e-5;
      const Eigen::LLT<Eigen::MatrixXd> llt(sigma);
      if (llt.info() != Eigen::Success)
        throw numerical_error("sample_covariance: factorization failed");
      cov.chol = llt.matrixL();
      break;
    }
  }
  return cov;
}

SparseVectorInstance gen_sparse_instance(Rng& rng, SparseScheme scheme, const NoiseCovariance& cov,
                                         int n, int d, double eps) {
  if (d < 2 || n < 2 * d) throw std::invalid_argument("gen_sparse_instance: need d >= 2, n >> d");
  Eigen::VectorXd v = sample_sparse_vector(rng, scheme, n, eps);
  const double nv = v.norm();
  if (nv == 0.0) throw numerical_error("gen_sparse_instance: drew a zero sparse vector");
  v /= nv;

  Eigen::MatrixXd noise(n, d - 1);
  switch (cov.kind) {
    case CovarianceKind::Identity: {
      for (int j = 0; j + 1 < d; ++j)
        for (int i = 0; i < n; ++i) noise(i, j) = rng.gaussian();
      break;
    }
    case CovarianceKind::Diagonal: {
      for (int j = 0; j + 1 < d; ++j)
        for (int i = 0; i < n; ++i) noise(i, j) = cov.diag_sd(i) * rng.gaussian();
      break;
    }
    case CovarianceKind::Random: {
      for (int j = 0; j + 1 < d; ++j) {
        Eigen::VectorXd z(n);
        for (int i = 0; i < n; ++i) z(i) = rng.gaussian();
        noise.col(j) = cov.chol * z;
      }
      break;
    }
  }

  Eigen::MatrixXd b(n, d);
  b.col(0) = v;
  for (int j = 0; j + 1 < d; ++j) b.col(j + 1) = noise.col(j);

  const GroupElement o = sample_orthogonal(d, rng);
  const Eigen::MatrixXd bo = b * o.matrix();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(bo);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, d);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return {std::move(q), std::move(v)};
}

SparseVectorInstance gen_sparse_instance(Rng& rng, SparseScheme scheme, CovarianceKind cov, int n,
                                         int d, double eps) {
  const NoiseCovariance model = sample_covariance(rng, cov, n);
  return gen_sparse_instance(rng, scheme, model, n, d, eps);
}

Eigen::MatrixXd sos_h_hopkins(const Eigen::MatrixXd& basis) {
  const int n = static_cast<int>(basis.rows());
  const int d = static_cast<int>(basis.cols());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd a = basis.row(i).transpose();
    h += (a.squaredNorm() - static_cast<double>(d) / n) * (a * a.transpose());
  }
  return h;
}

Eigen::MatrixXd sos_h_mao(const Eigen::MatrixXd& basis) {
  const int n = static_cast<int>(basis.rows());
  const int d = static_cast<int>(basis.cols());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd a = basis.row(i).transpose();
    h += (a.squaredNorm() - static_cast<double>(d - 1) / n) * (a * a.transpose());
  }
  h -= (3.0 / static_cast<double>(n)) * Eigen::MatrixXd::Identity(d, d);
  return h;
}

Eigen::VectorXd estimate_sparse(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& h) {
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("estimate_sparse: h must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  if (es.info() != Eigen::Success) throw numerical_error("estimate_sparse: eigensolver failed");
  const Eigen::VectorXd top = es.eigenvectors().col(h.rows() - 1);
  return basis * top;
}

// ---- SparseHModel ----

SparseHModel::SparseHModel(Variant variant, int n, int d, std::vector<int> hidden, Activation act,
                           Rng& rng)
    : variant_(variant), n_(n), d_(d) {
  std::vector<int> widths;
  widths.push_back(variant == Variant::Full ? n * (n + 1) / 2 : n);
  for (int h : hidden) widths.push_back(h);
  widths.push_back(static_cast<int>(coeff_count()));
  net_ = DenseNet(std::move(widths), act);
  net_.init(rng);
}

std::size_t SparseHModel::coeff_count() const {
  return variant_ == Variant::Full ? static_cast<std::size_t>(n_) * (n_ + 1) / 2 + 1
                                   : static_cast<std::size_t>(n_) + 1;
}

Eigen::VectorXd SparseHModel::features(const Eigen::MatrixXd& basis) const {
  // Rows of an orthonormal-column basis have squared norms averaging d/n, so
  // the Gram entries are rescaled by n/d to keep first-layer activations at
  // unit scale regardless of n.
  const double scale = static_cast<double>(n_) / static_cast<double>(d_);
  if (variant_ == Variant::Diag) {
    Eigen::VectorXd f(n_);
    for (int i = 0; i < n_; ++i) f(i) = basis.row(i).squaredNorm() * scale;
    return f;
  }
  const Eigen::MatrixXd gram = basis * basis.transpose();
  Eigen::VectorXd f(n_ * (n_ + 1) / 2);
  int q = 0;
  for (int i = 0; i < n_; ++i)
    for (int j = i; j < n_; ++j) f(q++) = gram(i, j) * scale;
  return f;
}

Eigen::MatrixXd SparseHModel::assemble(Variant variant, const Eigen::MatrixXd& basis,
                                       const Eigen::VectorXd& coeffs) {
  const int n = static_cast<int>(basis.rows());
  const int d = static_cast<int>(basis.cols());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  int q = 0;
  if (variant == Variant::Full) {
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd ai = basis.row(i).transpose();
      for (int j = i; j < n; ++j) {
        const Eigen::VectorXd aj = basis.row(j).transpose();
        h += coeffs(q++) * 0.5 * (ai * aj.transpose() + aj * ai.transpose());
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd ai = basis.row(i).transpose();
      h += coeffs(q++) * (ai * ai.transpose());
    }
  }
  h += coeffs(q) * Eigen::MatrixXd::Identity(d, d);
  return h;
}

Eigen::MatrixXd SparseHModel::h(const Eigen::MatrixXd& basis) const {
  if (basis.rows() != n_ || basis.cols() != d_)
    throw std::invalid_argument("SparseHModel::h: basis shape mismatch");
  return assemble(variant_, basis, net_.forward(features(basis)));
}

Eigen::MatrixXd sparse_loss_h_gradient(const SparseVectorInstance& inst, const Eigen::MatrixXd& h,
                                       double* loss_out) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  if (es.info() != Eigen::Success) throw numerical_error("sparse loss: eigensolver failed");
  const int d = static_cast<int>(h.rows());
  const int top = d - 1;
  const Eigen::VectorXd u = es.eigenvectors().col(top);
  const double corr = inst.target.dot(inst.basis * u);
  if (loss_out) *loss_out = 1.0 - corr * corr;

  const Eigen::VectorXd gu = -2.0 * corr * (inst.basis.transpose() * inst.target);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(d, d);
  for (int j = 0; j < d; ++j) {
    if (j == top) continue;
    const double gap = es.eigenvalues()(top) - es.eigenvalues()(j);
    if (std::abs(gap) < 1e-9) continue;
    const Eigen::VectorXd uj = es.eigenvectors().col(j);
    b += (gu.dot(uj) / gap) * (u * uj.transpose());
  }
  return 0.5 * (b + b.transpose());
}

double SparseHModel::loss_and_grad(const SparseVectorInstance& inst) {
  const Eigen::VectorXd phi = features(inst.basis);
  DenseNet::Cache cache;
  const Eigen::VectorXd coeffs = net_.forward_batch(phi.transpose(), cache).row(0).transpose();
  const Eigen::MatrixXd hm = assemble(variant_, inst.basis, coeffs);

  double loss = 0.0;
  const Eigen::MatrixXd gh = sparse_loss_h_gradient(inst, hm, &loss);

  Eigen::MatrixXd dcoeff(1, static_cast<Eigen::Index>(coeff_count()));
  int q = 0;
  if (variant_ == Variant::Full) {
    for (int i = 0; i < n_; ++i) {
      const Eigen::VectorXd ai = inst.basis.row(i).transpose();
      const Eigen::VectorXd gai = gh * ai;
      for (int j = i; j < n_; ++j)
        dcoeff(0, q++) = inst.basis.row(j).dot(gai); // <gh, sym(ai aj^T)>_F
    }
  } else {
    for (int i = 0; i < n_; ++i) {
      const Eigen::VectorXd ai = inst.basis.row(i).transpose();
      dcoeff(0, q++) = ai.dot(gh * ai);
    }
  }
  dcoeff(0, q) = gh.trace();
  net_.backward_batch(cache, dcoeff);
  return loss;
}

// ======================= audits =======================

GroupElement sample_group_element(const Metric& metric, Rng& rng) {
  switch (metric.kind()) {
    case Metric::Kind::Euclidean: return sample_orthogonal(metric.dim(), rng);
    case Metric::Kind::Minkowski:
      if (metric.dim() == 4 && metric.s() == 1) return sample_lorentz(rng);
      throw std::invalid_argument("sampling is only implemented for Minkowski{1,3}");
    case Metric::Kind::Symplectic: return sample_symplectic(metric.dim(), rng);
  }
  throw std::invalid_argument("sample_group_element: bad metric");
}

namespace {

double defect(const Tensor& f_gx, const Tensor& g_fx, const Tensor& fx) {
  return sub(f_gx, g_fx).norm() / (1.0 + fx.norm());
}

std::vector<Tensor> random_vectors(int n, int d, Rng& rng, double scale) {
  std::vector<Tensor> v;
  v.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<double> c(static_cast<std::size_t>(d));
    for (auto& x : c) x = scale * rng.gaussian();
    v.emplace_back(d, 1, +1, std::move(c));
  }
  return v;
}

} // namespace

double equivariance_audit(const VecToTensorModel& model, Rng& rng, int trials,
                           double input_scale) {
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto vs = random_vectors(model.n_inputs(), model.metric().dim(), rng, input_scale);
    const GroupElement g = sample_group_element(model.metric(), rng);
    std::vector<Tensor> gvs;
    gvs.reserve(vs.size());
    for (const auto& v : vs) gvs.push_back(group_act(g, v));
    const Tensor fx = model.forward(vs);
    worst = std::max(worst, defect(model.forward(gvs), group_act(g, fx), fx));
  }
  return worst;
}

double equivariance_audit(const SignatureModel& model, Rng& rng, int trials) {
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto vs = random_vectors(model.n_inputs(), model.metric().dim(), rng, 1.0);
    const GroupElement g = sample_group_element(model.metric(), rng);
    std::vector<Tensor> gvs;
    gvs.reserve(vs.size());
    for (const auto& v : vs) gvs.push_back(group_act(g, v));
    const auto fx = model.forward(vs);
    const auto fgx = model.forward(gvs);
    for (std::size_t k = 0; k < fx.size(); ++k)
      worst = std::max(worst, defect(fgx[k], group_act(g, fx[k]), fx[k]));
  }
  return worst;
}

double equivariance_audit(const EigenEquivariantModel& model, Rng& rng, int trials,
                         double eigen_gap) {
  const int d = model.dim();
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    // Gapped spectrum keeps Q well-conditioned.
    Eigen::VectorXd lam(d);
    for (int i = 0; i < d; ++i) lam(i) = rng.uniform(-1.0, 1.0);
    std::sort(lam.data(), lam.data() + d);
    for (int i = 0; i < d; ++i) lam(i) += (eigen_gap + 0.05) * static_cast<double>(i);
    const GroupElement q = sample_orthogonal(d, rng);
    const Eigen::MatrixXd a = q.matrix() * lam.asDiagonal() * q.matrix().transpose();
    const Eigen::MatrixXd as = 0.5 * (a + a.transpose());

    const GroupElement g = sample_orthogonal(d, rng);
    const Eigen::MatrixXd ga = g.matrix() * as * g.matrix().transpose();
    const Eigen::MatrixXd fx = model.forward_sym(as);
    const Eigen::MatrixXd fgx = model.forward_sym(0.5 * (ga + ga.transpose()));
    const Eigen::MatrixXd gfx = g.matrix() * fx * g.matrix().transpose();
    worst = std::max(worst, (fgx - gfx).norm() / (1.0 + fx.norm()));
  }
  return worst;
}

double equivariance_audit(const SparseHModel& model, Rng& rng, int trials) {
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    Eigen::MatrixXd basis(model.n_rows(), model.dim());
    for (int i = 0; i < basis.rows(); ++i)
      for (int j = 0; j < basis.cols(); ++j) basis(i, j) = rng.gaussian();
    const GroupElement g = sample_orthogonal(model.dim(), rng);
    const Eigen::MatrixXd fx = model.h(basis);
    // rows transform as a_i -> M^T a_i, i.e. basis -> basis * M
    const Eigen::MatrixXd fgx = model.h(basis * g.matrix());
    const Eigen::MatrixXd gfx = g.matrix().transpose() * fx * g.matrix();
    worst = std::max(worst, (fgx - gfx).norm() / (1.0 + fx.norm()));
  }
  return worst;
}

double equivariance_audit(const DenseNet& net, int n, int d, Rng& rng, int trials) {
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const auto vs = random_vectors(n, d, rng, 1.0);
    const GroupElement g = sample_orthogonal(d, rng);
    Eigen::VectorXd x(n * d), gx(n * d);
    for (int i = 0; i < n; ++i) {
      const Tensor gv = group_act(g, vs[static_cast<std::size_t>(i)]);
      for (int j = 0; j < d; ++j) {
        x(i * d + j) = vs[static_cast<std::size_t>(i)].at_offset(static_cast<std::size_t>(j));
        gx(i * d + j) = gv.at_offset(static_cast<std::size_t>(j));
      }
    }
    // Interpret the first d outputs as a vector prediction.
    const Eigen::VectorXd fx = net.forward(x).head(d);
    const Eigen::VectorXd fgx = net.forward(gx).head(d);
    const Eigen::VectorXd gfx = g.matrix() * fx;
    worst = std::max(worst, (fgx - gfx).norm() / (1.0 + fx.norm()));
  }
  return worst;
}

} // namespace eqt
