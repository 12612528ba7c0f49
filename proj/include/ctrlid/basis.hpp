#pragma once

// Truncated function families used to expand each entry g_js of the control
// field (and each drift component) as a linear combination of features.
//
//  fourier, 1-D:   [1, cos(k t), sin(k t)], k = 1..L, t = 2 pi (x - lo) / (hi - lo)
//  fourier, n-D:   [1] + {cos(k pi y_d), sin(k pi y_d)} for d = 1..n, k = 1..L,
//                  y the state rescaled to [-1, 1]
//  legendre:       orthonormal Legendre products of total degree <= L on y
//  monomial:       plain monomials of total degree <= L on the raw state
//
// Multi-indices of equal total degree are ordered by descending largest
// exponent, then lexicographically descending, so degree 2 in R^3 reads
// x1^2, x2^2, x3^2, x1 x2, x1 x3, x2 x3.

#include "ctrlid/types.hpp"

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace ctrlid {

enum class BasisFamily { fourier, legendre, monomial };

std::string_view to_string(BasisFamily family);
BasisFamily parse_basis_family(std::string_view name);

struct BasisSpec {
  BasisFamily family = BasisFamily::monomial;
  int order = 0;
  Box domain;
  /// Optional per-entry orders L_js, row-major n x m. Empty means `order` everywhere.
  std::vector<int> entry_orders;

  Index dimension() const { return domain.dim(); }
  /// Spec with the single order used for entry (j, s) of an n x m field.
  BasisSpec for_entry(Index j, Index s, Index input_dim) const;
  void validate() const;
};

using FeatureVector = Vector;

FeatureVector eval_basis(const BasisSpec& spec, const Vector& x);
Index feature_count(const BasisSpec& spec);
/// Human-readable feature names in evaluation order, e.g. "x1*x3", "cos(2*t)".
std::vector<std::string> feature_labels(const BasisSpec& spec);
/// x inside the spec's domain (features outside it are extrapolations).
bool in_basis_domain(const BasisSpec& spec, const Vector& x);

/// x -> coefficients . eval_basis(spec, x).
std::function<double(const Vector&)> expand(const BasisSpec& spec, const Vector& coefficients);

/// Orthonormal Legendre polynomial sqrt(k + 1/2) P_k(y) on [-1, 1].
double normalized_legendre(int degree, double y);

/// Exponent tuples of total degree <= order in the ordering described above.
std::vector<std::vector<int>> total_degree_exponents(Index dimension, int order);

}  // namespace ctrlid
