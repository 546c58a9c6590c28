#include "eqt/groups.hpp"

#include <cmath>

namespace eqt {

namespace {

Eigen::MatrixXd metric_matrix_eigen(const Metric& m) {
  const int d = m.dim();
  const auto flat = m.matrix();
  Eigen::MatrixXd t(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) t(i, j) = flat[static_cast<std::size_t>(i) * d + j];
  return t;
}

Eigen::MatrixXd gaussian_matrix(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.gaussian();
  return m;
}

} // namespace

double verify_membership(const Eigen::MatrixXd& g, const Metric& metric) {
  const Eigen::MatrixXd theta = metric_matrix_eigen(metric);
  return (g.transpose() * theta * g - theta).cwiseAbs().maxCoeff();
}

GroupElement::GroupElement(Eigen::MatrixXd m, const Metric& g, int det_sign)
    : mat_(std::move(m)), group_(g), det_sign_(det_sign) {
  const int d = group_.dim();
  row_major_.resize(static_cast<std::size_t>(d) * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) row_major_[static_cast<std::size_t>(i) * d + j] = mat_(i, j);
}

GroupElement GroupElement::from_matrix(Eigen::MatrixXd m, const Metric& group, double tol) {
  if (m.rows() != group.dim() || m.cols() != group.dim())
    throw std::invalid_argument("GroupElement: matrix size does not match group dimension");
  const double resid = verify_membership(m, group);
  if (resid > tol)
    throw std::invalid_argument("GroupElement: membership residual " + std::to_string(resid) +
                                " exceeds tolerance");
  int det_sign = +1;
  if (group.kind() != Metric::Kind::Symplectic) det_sign = m.determinant() < 0 ? -1 : +1;
  return GroupElement(std::move(m), group, det_sign);
}

GroupElement GroupElement::identity(const Metric& group) {
  return GroupElement(Eigen::MatrixXd::Identity(group.dim(), group.dim()), group, +1);
}

GroupElement sample_orthogonal(int d, Rng& rng) {
  if (d < 1) throw std::invalid_argument("sample_orthogonal: d must be >= 1");
  const Eigen::MatrixXd a = gaussian_matrix(d, d, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  // Fix the gauge so the distribution is Haar, not QR-convention biased.
  for (int j = 0; j < d; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return GroupElement::from_matrix(std::move(q), Metric::euclidean(d), 1e-10);
}

Eigen::MatrixXd lorentz_boost(const Eigen::Vector3d& beta) {
  const double b2 = beta.squaredNorm();
  if (b2 >= 1.0) throw std::invalid_argument("lorentz_boost: ||beta|| must be < 1");
  Eigen::MatrixXd l = Eigen::MatrixXd::Identity(4, 4);
  if (b2 < 1e-300) return l;
  const double gamma = 1.0 / std::sqrt(1.0 - b2);
  l(0, 0) = gamma;
  for (int i = 0; i < 3; ++i) {
    l(0, i + 1) = -gamma * beta(i);
    l(i + 1, 0) = -gamma * beta(i);
    for (int j = 0; j < 3; ++j)
      l(i + 1, j + 1) = (i == j ? 1.0 : 0.0) + (gamma - 1.0) * beta(i) * beta(j) / b2;
  }
  return l;
}

GroupElement sample_lorentz(Rng& rng) {
  const double bound = 1.0 / std::sqrt(3.0);
  Eigen::Vector3d beta;
  for (int i = 0; i < 3; ++i) beta(i) = rng.truncated_gaussian(-bound, bound);
  const Eigen::MatrixXd boost = lorentz_boost(beta);

  const GroupElement q3 = sample_orthogonal(3, rng);
  Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(4, 4);
  rot.block<3, 3>(1, 1) = q3.matrix();

  Eigen::MatrixXd tinv = Eigen::MatrixXd::Identity(4, 4);
  tinv(0, 0) = rng.sign();

  return GroupElement::from_matrix(tinv * boost * rot, Metric::minkowski(1, 4), 1e-9);
}

Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& a) {
  const double norm = a.cwiseAbs().rowwise().sum().maxCoeff(); // inf-norm
  int squarings = 0;
  double scale = 1.0;
  while (norm * scale > 0.0625) {
    scale *= 0.5;
    ++squarings;
  }
  const Eigen::MatrixXd b = a * scale;
  Eigen::MatrixXd result = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd term = result;
  for (int k = 1; k <= 12; ++k) {
    term = (term * b) / static_cast<double>(k);
    result += term;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

GroupElement sample_symplectic(int d, Rng& rng) {
  const Metric metric = Metric::symplectic(d); // validates even d
  Eigen::MatrixXd s(d, d);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) s(i, j) = s(j, i) = sd * rng.gaussian();
  const Eigen::MatrixXd j = metric_matrix_eigen(metric);
  return GroupElement::from_matrix(matrix_exp(j * s), metric, 1e-8);
}

GroupElement compose(const GroupElement& g, const GroupElement& h) {
  if (!(g.group() == h.group())) throw std::invalid_argument("compose: different groups");
  return GroupElement::from_matrix(g.matrix() * h.matrix(), g.group(),
                                   10.0 * 1e-8);
}

GroupElement inverse(const GroupElement& g) {
  const Eigen::MatrixXd theta = metric_matrix_eigen(g.group());
  Eigen::MatrixXd inv;
  switch (g.group().kind()) {
    case Metric::Kind::Euclidean: inv = g.matrix().transpose(); break;
    case Metric::Kind::Minkowski: inv = theta * g.matrix().transpose() * theta; break;
    case Metric::Kind::Symplectic: inv = -(theta * g.matrix().transpose() * theta); break;
  }
  return GroupElement::from_matrix(std::move(inv), g.group(), 10.0 * 1e-8);
}

} // namespace eqt
