#include "eqt/isotropic.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

namespace eqt {

namespace {

// Emits canonical matchings of `slots` (ascending): the smallest unpaired
// slot pairs with each later one in turn.
void matchings_rec(std::vector<int>& slots, std::vector<std::pair<int, int>>& acc,
                   const std::function<void(const std::vector<std::pair<int, int>>&)>& emit) {
  if (slots.empty()) {
    emit(acc);
    return;
  }
  const int first = slots.front();
  for (std::size_t j = 1; j < slots.size(); ++j) {
    const int partner = slots[j];
    std::vector<int> rest;
    rest.reserve(slots.size() - 2);
    for (std::size_t q = 1; q < slots.size(); ++q)
      if (q != j) rest.push_back(slots[q]);
    acc.emplace_back(first, partner);
    matchings_rec(rest, acc, emit);
    acc.pop_back();
  }
}

// sigma with sigma(p_i) = 2i-1, sigma(q_i) = 2i (1-based), so that
// (theta^(t))^sigma has theta factors exactly on the matched slot pairs.
Perm perm_of_matching(int k, const std::vector<std::pair<int, int>>& pairs, int pair_base) {
  Perm sigma(static_cast<std::size_t>(k), -1);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    sigma[static_cast<std::size_t>(pairs[i].first)] = pair_base + 2 * static_cast<int>(i);
    sigma[static_cast<std::size_t>(pairs[i].second)] = pair_base + 2 * static_cast<int>(i) + 1;
  }
  return sigma;
}

} // namespace

std::vector<Perm> enumerate_Gk(int k) {
  if (k < 0 || k % 2 != 0)
    throw std::invalid_argument("enumerate_Gk: k must be even and non-negative");
  std::vector<Perm> out;
  std::vector<int> slots(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) slots[static_cast<std::size_t>(i)] = i;
  std::vector<std::pair<int, int>> acc;
  matchings_rec(slots, acc, [&](const std::vector<std::pair<int, int>>& pairs) {
    out.push_back(perm_of_matching(k, pairs, 0));
  });
  return out;
}

std::vector<Perm> enumerate_Hk(int k, int d) {
  if (d < 2) throw std::invalid_argument("enumerate_Hk: d must be >= 2");
  if (k < d || (k - d) % 2 != 0) return {};
  std::vector<Perm> out;
  // State: pairs among the first (k-d)/2*2 slots chosen recursively; the
  // smallest unassigned slot either starts a new delta pair or joins the
  // epsilon block (filled in ascending slot order, so each split is
  // generated once).
  struct Walker {
    int k, d;
    std::vector<Perm>& out;
    std::vector<std::pair<int, int>> pairs;
    std::vector<int> eps;

    void go(std::vector<int> remaining) {
      if (remaining.empty()) {
        if (static_cast<int>(eps.size()) != d) return;
        Perm sigma(static_cast<std::size_t>(k), -1);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
          sigma[static_cast<std::size_t>(pairs[i].first)] = 2 * static_cast<int>(i);
          sigma[static_cast<std::size_t>(pairs[i].second)] = 2 * static_cast<int>(i) + 1;
        }
        const int eps_base = k - d;
        for (std::size_t j = 0; j < eps.size(); ++j)
          sigma[static_cast<std::size_t>(eps[j])] = eps_base + static_cast<int>(j);
        out.push_back(std::move(sigma));
        return;
      }
      const int first = remaining.front();
      const int pairs_left = (k - d) / 2 - static_cast<int>(pairs.size());
      if (pairs_left > 0) {
        for (std::size_t j = 1; j < remaining.size(); ++j) {
          std::vector<int> rest;
          for (std::size_t q = 1; q < remaining.size(); ++q)
            if (q != j) rest.push_back(remaining[q]);
          pairs.emplace_back(first, remaining[j]);
          go(std::move(rest));
          pairs.pop_back();
        }
      }
      if (static_cast<int>(eps.size()) < d) {
        eps.push_back(first);
        go(std::vector<int>(remaining.begin() + 1, remaining.end()));
        eps.pop_back();
      }
    }
  };
  Walker w{k, d, out, {}, {}};
  std::vector<int> all(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) all[static_cast<std::size_t>(i)] = i;
  w.go(std::move(all));
  return out;
}

IsotropicBasis isotropic_basis(int k, int parity, const Metric& metric) {
  if (k < 0) throw std::invalid_argument("isotropic_basis: k must be >= 0");
  IsotropicBasis basis;
  basis.order = k;
  basis.parity = parity;
  basis.metric = metric;

  const int d = metric.dim();
  if (parity == +1) {
    if (k % 2 != 0) return basis; // odd order vanishes
    if (k == 0) {
      basis.elements.push_back({Perm{}, Tensor::scalar(d, 1.0)});
      return basis;
    }
    const Tensor theta = metric_tensor(metric);
    Tensor base = theta;
    for (int q = 1; q < k / 2; ++q) base = outer(base, theta);
    for (auto& sigma : enumerate_Gk(k))
      basis.elements.push_back({sigma, permute_indices(base, sigma)});
    return basis;
  }

  if (parity != -1) throw std::invalid_argument("isotropic_basis: parity must be +1 or -1");
  if (!metric.is_euclidean())
    throw std::invalid_argument(
        "isotropic_basis: parity -1 bases are only constructed for the Euclidean metric");
  if (d < 2 || k < d || (k - d) % 2 != 0) return basis; // vanishing cases

  const Tensor delta = kronecker_delta(d);
  Tensor base = levi_civita(d);
  for (int q = 0; q < (k - d) / 2; ++q) base = outer(delta, base);
  // base currently delta^(t) (x) eps with deltas first -- matches sigma's
  // base layout.
  for (auto& sigma : enumerate_Hk(k, d)) {
    Tensor value = permute_indices(base, sigma);
    basis.elements.push_back({sigma, std::move(value)});
  }
  return basis;
}

Perm SlotSymmetry::block_swap(int k, int start, int len) {
  Perm p = perm_identity(k);
  for (int q = 0; q < len; ++q) {
    p[static_cast<std::size_t>(start + q)] = start + len + q;
    p[static_cast<std::size_t>(start + len + q)] = start + q;
  }
  return p;
}

Perm SlotSymmetry::swap(int k, int a, int b) {
  Perm p = perm_identity(k);
  std::swap(p[static_cast<std::size_t>(a)], p[static_cast<std::size_t>(b)]);
  return p;
}

std::vector<Perm> SlotSymmetry::group(int k) const {
  std::set<Perm> seen;
  std::vector<Perm> frontier{perm_identity(k)};
  seen.insert(frontier.front());
  while (!frontier.empty()) {
    const Perm g = std::move(frontier.back());
    frontier.pop_back();
    for (const auto& h : generators) {
      if (static_cast<int>(h.size()) != k)
        throw std::invalid_argument("SlotSymmetry: generator length mismatch");
      Perm gh = perm_compose(h, g);
      if (seen.insert(gh).second) frontier.push_back(std::move(gh));
      if (seen.size() > 40320)
        throw std::invalid_argument("SlotSymmetry: generated group too large");
    }
  }
  return {seen.begin(), seen.end()};
}

Tensor symmetrize_slots(const Tensor& a, const SlotSymmetry* sym) {
  if (sym == nullptr || sym->generators.empty()) return a;
  const auto group = sym->group(a.order());
  Tensor acc(a.dim(), a.order(), a.parity());
  for (const auto& g : group) acc = add(acc, permute_indices(a, g));
  return scale(1.0 / static_cast<double>(group.size()), acc);
}

IsotropicBasis independent_subset(const IsotropicBasis& basis, const SlotSymmetry* sym) {
  IsotropicBasis out;
  out.order = basis.order;
  out.parity = basis.parity;
  out.metric = basis.metric;
  if (basis.elements.empty()) return out;

  const std::size_t ncomp = basis.elements.front().value.size();
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(basis.size()), static_cast<Eigen::Index>(ncomp));
  for (std::size_t e = 0; e < basis.size(); ++e) {
    const Tensor s = symmetrize_slots(basis.elements[e].value, sym);
    for (std::size_t j = 0; j < ncomp; ++j)
      rows(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(j)) = s.at_offset(j);
  }

  // sigma_max from the small Gram matrix.
  const Eigen::MatrixXd gram = rows * rows.transpose();
  const double sigma_max = std::sqrt(
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff());
  const double tol = 1e-9 * sigma_max;

  // Greedy rank filter in basis order (modified Gram-Schmidt).
  std::vector<Eigen::VectorXd> ortho;
  for (std::size_t e = 0; e < basis.size(); ++e) {
    Eigen::VectorXd r = rows.row(static_cast<Eigen::Index>(e)).transpose();
    for (const auto& q : ortho) r -= q.dot(r) * q;
    for (const auto& q : ortho) r -= q.dot(r) * q; // re-orthogonalize
    if (r.norm() > tol) {
      ortho.push_back(r / r.norm());
      out.elements.push_back(basis.elements[e]);
    }
  }
  return out;
}

} // namespace eqt
