#include "eqt/signature.hpp"

#include <cmath>
#include <stdexcept>

namespace eqt {

namespace {

std::size_t pow_sz(int d, int k) {
  std::size_t n = 1;
  for (int q = 0; q < k; ++q) n *= static_cast<std::size_t>(d);
  return n;
}

} // namespace

TruncatedSig::TruncatedSig(int d, int levels) : d_(d), m_(levels) {
  if (d < 1 || levels < 1) throw std::invalid_argument("TruncatedSig: need d >= 1, levels >= 1");
  lv_.resize(static_cast<std::size_t>(levels));
  for (int k = 1; k <= levels; ++k)
    lv_[static_cast<std::size_t>(k - 1)].assign(pow_sz(d, k), 0.0);
}

TruncatedSig TruncatedSig::segment(std::span<const double> delta, int levels) {
  const int d = static_cast<int>(delta.size());
  TruncatedSig s(d, levels);
  auto& first = s.lv_.front();
  for (int i = 0; i < d; ++i) first[static_cast<std::size_t>(i)] = delta[static_cast<std::size_t>(i)];
  for (int k = 2; k <= levels; ++k) {
    const auto& prev = s.lv_[static_cast<std::size_t>(k - 2)];
    auto& cur = s.lv_[static_cast<std::size_t>(k - 1)];
    const double inv_k = 1.0 / static_cast<double>(k);
    std::size_t q = 0;
    for (double p : prev)
      for (int i = 0; i < d; ++i) cur[q++] = p * delta[static_cast<std::size_t>(i)] * inv_k;
  }
  return s;
}

TruncatedSig TruncatedSig::chen_mul(const TruncatedSig& other) const {
  if (d_ != other.d_ || m_ != other.m_)
    throw std::invalid_argument("chen_mul: shape mismatch");
  TruncatedSig out(d_, m_);
  for (int k = 1; k <= m_; ++k) {
    auto& dst = out.lv_[static_cast<std::size_t>(k - 1)];
    // scalar level-0 factors contribute the plain sum
    const auto& a = lv_[static_cast<std::size_t>(k - 1)];
    const auto& b = other.lv_[static_cast<std::size_t>(k - 1)];
    for (std::size_t q = 0; q < dst.size(); ++q) dst[q] = a[q] + b[q];
    // mixed levels i + (k-i), outer product layout matches row-major concat
    for (int i = 1; i < k; ++i) {
      const auto& ai = lv_[static_cast<std::size_t>(i - 1)];
      const auto& bj = other.lv_[static_cast<std::size_t>(k - i - 1)];
      std::size_t q = 0;
      for (double av : ai)
        for (double bv : bj) dst[q++] += av * bv;
    }
  }
  return out;
}

const std::vector<double>& TruncatedSig::level(int k) const {
  if (k < 1 || k > m_) throw std::invalid_argument("TruncatedSig::level: out of range");
  return lv_[static_cast<std::size_t>(k - 1)];
}

std::vector<Tensor> TruncatedSig::to_tensors() const {
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(m_));
  for (int k = 1; k <= m_; ++k)
    out.emplace_back(d_, k, +1, lv_[static_cast<std::size_t>(k - 1)]);
  return out;
}

std::vector<Tensor> signature_oracle(const std::vector<Tensor>& points, int M) {
  if (points.size() < 2) throw std::invalid_argument("signature_oracle: need at least 2 points");
  if (M < 1) throw std::invalid_argument("signature_oracle: M must be >= 1");
  const int d = points.front().dim();
  for (const auto& p : points)
    if (p.order() != 1 || p.dim() != d)
      throw std::invalid_argument("signature_oracle: points must be order-1 of equal dim");

  TruncatedSig acc(d, M);
  bool first = true;
  std::vector<double> delta(static_cast<std::size_t>(d));
  for (std::size_t s = 0; s + 1 < points.size(); ++s) {
    for (int i = 0; i < d; ++i)
      delta[static_cast<std::size_t>(i)] =
          points[s + 1].at_offset(static_cast<std::size_t>(i)) -
          points[s].at_offset(static_cast<std::size_t>(i));
    const TruncatedSig seg = TruncatedSig::segment(delta, M);
    acc = first ? seg : acc.chen_mul(seg);
    first = false;
  }
  return acc.to_tensors();
}

std::vector<Tensor> chen_product(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.empty() || a.size() != b.size())
    throw std::invalid_argument("chen_product: level lists must match and be non-empty");
  const int M = static_cast<int>(a.size());
  // out_k = a_k + b_k + sum_{i=1}^{k-1} a_i (x) b_{k-i} (level 0 is 1).
  std::vector<Tensor> out;
  out.reserve(a.size());
  for (int k = 1; k <= M; ++k) {
    Tensor sum = add(a[static_cast<std::size_t>(k - 1)], b[static_cast<std::size_t>(k - 1)]);
    for (int i = 1; i < k; ++i)
      sum = add(sum,
                outer(a[static_cast<std::size_t>(i - 1)], b[static_cast<std::size_t>(k - i - 1)]));
    out.push_back(std::move(sum));
  }
  return out;
}

std::vector<Tensor> discrete_signature_baseline(const std::vector<Tensor>& points, int M) {
  if (points.size() < 2)
    throw std::invalid_argument("discrete_signature_baseline: need at least 2 points");
  if (M < 1) throw std::invalid_argument("discrete_signature_baseline: M must be >= 1");
  const int d = points.front().dim();

  // A_k after processing increments 1..m equals the sum over strictly
  // increasing k-tuples; update highest level first.
  std::vector<Tensor> acc;
  acc.reserve(static_cast<std::size_t>(M));
  for (int k = 1; k <= M; ++k) acc.emplace_back(d, k, +1);

  for (std::size_t s = 0; s + 1 < points.size(); ++s) {
    const Tensor delta = sub(points[s + 1], points[s]);
    for (int k = M; k >= 2; --k)
      acc[static_cast<std::size_t>(k - 1)] =
          add(acc[static_cast<std::size_t>(k - 1)], outer(acc[static_cast<std::size_t>(k - 2)], delta));
    acc[0] = add(acc[0], delta);
  }
  return acc;
}

} // namespace eqt
