#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "eqt/tensor.hpp"

namespace eqt {

/// Canonical representatives of the reduced permutation set G_k indexing
/// products of k/2 metric tensors: one permutation per perfect matching of
/// {1..k}, matchings emitted by recursively pairing the smallest unpaired
/// slot. Count (k-1)!! = k!/((k/2)! 2^(k/2)). Throws for odd k.
std::vector<Perm> enumerate_Gk(int k);

/// Reduced set H_k indexing delta^((k-d)/2) (x) epsilon products: one
/// permutation per (matching on k-d slots, d-subset for epsilon). Empty when
/// k < d or k-d is odd (vanishing case). Count k!/(((k-d)/2)! 2^((k-d)/2) d!).
std::vector<Perm> enumerate_Hk(int k, int d);

struct BasisElement {
  Perm sigma;
  Tensor value;
};

/// Basis of the G-isotropic tensors of a given order and parity:
/// (theta_G^(k/2))^sigma over G_k for parity +1, and the Euclidean
/// (delta^((k-d)/2) (x) epsilon)^sigma family over H_k for parity -1.
struct IsotropicBasis {
  int order = 0;
  int parity = +1;
  Metric metric = Metric::euclidean(1);
  std::vector<BasisElement> elements;

  std::size_t size() const { return elements.size(); }
};

/// Materializes the basis. Vanishing cases (odd k for parity +1; k < d or
/// k-d odd for parity -1) give an empty basis. Parity -1 with a
/// non-Euclidean metric is unsupported and throws.
IsotropicBasis isotropic_basis(int k, int parity, const Metric& metric);

/// Declared symmetries of a basis consumer, as slot-permutation generators
/// on {1..k}: e.g. the block swap when the same input appears twice, or the
/// swap of the two output slots when only symmetric outputs are kept.
struct SlotSymmetry {
  std::vector<Perm> generators;

  /// Swap of two contiguous blocks [start, start+len) and
  /// [start+len, start+2len), 0-based slots.
  static Perm block_swap(int k, int start, int len);
  /// Transposition of slots a and b (0-based).
  static Perm swap(int k, int a, int b);

  /// Full group generated (identity included).
  std::vector<Perm> group(int k) const;
};

/// Maximal linearly independent subset of the basis after symmetrizing each
/// element over the declared slot symmetries. Independence is decided by the
/// rank of the vectorized (symmetrized) element matrix with singular-value
/// threshold 1e-9 * sigma_max; elements are kept greedily in basis order,
/// with their original (unsymmetrized) values.
IsotropicBasis independent_subset(const IsotropicBasis& basis,
                                  const SlotSymmetry* symmetrize_under = nullptr);

/// Average of a^g over the group generated by the symmetry (identity when
/// null).
Tensor symmetrize_slots(const Tensor& a, const SlotSymmetry* sym);

} // namespace eqt
