#include "ctrlid/basis.hpp"

#include "ctrlid/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

namespace ctrlid {

std::string_view to_string(BasisFamily family) {
  switch (family) {
    case BasisFamily::fourier: return "fourier";
    case BasisFamily::legendre: return "legendre";
    case BasisFamily::monomial: return "monomial";
  }
  return "unknown";
}

BasisFamily parse_basis_family(std::string_view name) {
  if (name == "fourier") return BasisFamily::fourier;
  if (name == "legendre") return BasisFamily::legendre;
  if (name == "monomial") return BasisFamily::monomial;
  throw InvalidArgument("unknown basis family '" + std::string(name) + "'");
}

void BasisSpec::validate() const {
  if (order < 0) throw InvalidArgument("basis order must be nonnegative");
  if (domain.dim() < 1) throw InvalidArgument("basis domain is empty");
  if (!(domain.side_lengths().array() > 0.0).all()) {
    throw InvalidArgument("basis domain must have positive side lengths");
  }
  for (int L : entry_orders) {
    if (L < 0) throw InvalidArgument("per-entry basis orders must be nonnegative");
  }
}

BasisSpec BasisSpec::for_entry(Index j, Index s, Index input_dim) const {
  BasisSpec out = *this;
  out.entry_orders.clear();
  if (!entry_orders.empty()) {
    const Index idx = j * input_dim + s;
    if (idx < 0 || idx >= static_cast<Index>(entry_orders.size())) {
      throw InvalidArgument("per-entry orders do not cover entry (" + std::to_string(j) + ", " +
                            std::to_string(s) + ")");
    }
    out.order = entry_orders[static_cast<std::size_t>(idx)];
  }
  return out;
}

double normalized_legendre(int degree, double y) {
  if (degree < 0) throw InvalidArgument("Legendre degree must be nonnegative");
  double prev = 1.0;
  double cur = y;
  if (degree == 0) return std::sqrt(0.5);
  for (int k = 1; k < degree; ++k) {
    const double next = ((2.0 * k + 1.0) * y * cur - double(k) * prev) / double(k + 1);
    prev = cur;
    cur = next;
  }
  return std::sqrt(degree + 0.5) * cur;
}

namespace {

void exponents_of_degree(Index dim, int remaining, std::vector<int>& current,
                         std::vector<std::vector<int>>& out) {
  const auto pos = static_cast<Index>(current.size());
  if (pos == dim - 1) {
    current.push_back(remaining);
    out.push_back(current);
    current.pop_back();
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    current.push_back(e);
    exponents_of_degree(dim, remaining - e, current, out);
    current.pop_back();
  }
}

// Rescales each coordinate of x from the domain box onto [-1, 1].
Vector to_unit_cube(const Box& box, const Vector& x) {
  return (2.0 * (x - box.lower).array() / box.side_lengths().array() - 1.0).matrix();
}

void check_input(const BasisSpec& spec, const Vector& x) {
  if (x.size() != spec.dimension()) {
    throw InvalidArgument("basis evaluated at a point of length " + std::to_string(x.size()) +
                          ", expected " + std::to_string(spec.dimension()));
  }
}

}  // namespace

std::vector<std::vector<int>> total_degree_exponents(Index dimension, int order) {
  if (dimension < 1) throw InvalidArgument("dimension must be positive");
  if (order < 0) throw InvalidArgument("order must be nonnegative");
  std::vector<std::vector<int>> all;
  for (int d = 0; d <= order; ++d) {
    std::vector<std::vector<int>> level;
    std::vector<int> current;
    exponents_of_degree(dimension, d, current, level);
    std::stable_sort(level.begin(), level.end(), [](const auto& a, const auto& b) {
      const int ma = *std::max_element(a.begin(), a.end());
      const int mb = *std::max_element(b.begin(), b.end());
      if (ma != mb) return ma > mb;
      return a > b;
    });
    all.insert(all.end(), level.begin(), level.end());
  }
  return all;
}

Index feature_count(const BasisSpec& spec) {
  spec.validate();
  const Index n = spec.dimension();
  const Index L = spec.order;
  switch (spec.family) {
    case BasisFamily::fourier:
      return 1 + 2 * n * L;
    case BasisFamily::legendre:
    case BasisFamily::monomial: {
      // C(n + L, L)
      Index count = 1;
      for (Index k = 1; k <= L; ++k) count = count * (n + k) / k;
      return count;
    }
  }
  return 0;
}

FeatureVector eval_basis(const BasisSpec& spec, const Vector& x) {
  spec.validate();
  check_input(spec, x);
  const Index n = spec.dimension();
  const int L = spec.order;
  FeatureVector phi(feature_count(spec));

  switch (spec.family) {
    case BasisFamily::fourier: {
      phi[0] = 1.0;
      Index idx = 1;
      if (n == 1) {
        const double t = 2.0 * std::numbers::pi * (x[0] - spec.domain.lower[0]) /
                         (spec.domain.upper[0] - spec.domain.lower[0]);
        for (int k = 1; k <= L; ++k) {
          phi[idx++] = std::cos(k * t);
          phi[idx++] = std::sin(k * t);
        }
      } else {
        const Vector y = to_unit_cube(spec.domain, x);
        for (Index d = 0; d < n; ++d) {
          for (int k = 1; k <= L; ++k) {
            phi[idx++] = std::cos(k * std::numbers::pi * y[d]);
            phi[idx++] = std::sin(k * std::numbers::pi * y[d]);
          }
        }
      }
      break;
    }
    case BasisFamily::legendre: {
      const Vector y = to_unit_cube(spec.domain, x);
      Matrix table(n, L + 1);
      for (Index d = 0; d < n; ++d) {
        for (int k = 0; k <= L; ++k) table(d, k) = normalized_legendre(k, y[d]);
      }
      Index idx = 0;
      for (const auto& e : total_degree_exponents(n, L)) {
        double v = 1.0;
        for (Index d = 0; d < n; ++d) v *= table(d, e[static_cast<std::size_t>(d)]);
        phi[idx++] = v;
      }
      break;
    }
    case BasisFamily::monomial: {
      Index idx = 0;
      for (const auto& e : total_degree_exponents(n, L)) {
        double v = 1.0;
        for (Index d = 0; d < n; ++d) {
          for (int p = 0; p < e[static_cast<std::size_t>(d)]; ++p) v *= x[d];
        }
        phi[idx++] = v;
      }
      break;
    }
  }
  return phi;
}

std::vector<std::string> feature_labels(const BasisSpec& spec) {
  spec.validate();
  const Index n = spec.dimension();
  const int L = spec.order;
  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(feature_count(spec)));
  auto var = [n](Index d, const char* base) {
    return n == 1 ? std::string(base) : std::string(base) + std::to_string(d + 1);
  };

  switch (spec.family) {
    case BasisFamily::fourier:
      labels.emplace_back("1");
      if (n == 1) {
        for (int k = 1; k <= L; ++k) {
          labels.push_back("cos(" + std::to_string(k) + "*t)");
          labels.push_back("sin(" + std::to_string(k) + "*t)");
        }
      } else {
        for (Index d = 0; d < n; ++d) {
          for (int k = 1; k <= L; ++k) {
            labels.push_back("cos(" + std::to_string(k) + "*pi*" + var(d, "y") + ")");
            labels.push_back("sin(" + std::to_string(k) + "*pi*" + var(d, "y") + ")");
          }
        }
      }
      break;
    case BasisFamily::legendre:
    case BasisFamily::monomial: {
      const bool leg = spec.family == BasisFamily::legendre;
      for (const auto& e : total_degree_exponents(n, L)) {
        std::string label;
        for (Index d = 0; d < n; ++d) {
          const int p = e[static_cast<std::size_t>(d)];
          if (p == 0) continue;
          if (!label.empty()) label += "*";
          if (leg) {
            label += "P" + std::to_string(p) + "(" + var(d, "y") + ")";
          } else {
            label += var(d, "x");
            if (p > 1) label += "^" + std::to_string(p);
          }
        }
        labels.push_back(label.empty() ? (leg ? "P0" : "1") : label);
      }
      break;
    }
  }
  return labels;
}

bool in_basis_domain(const BasisSpec& spec, const Vector& x) {
  return spec.domain.contains(x);
}

std::function<double(const Vector&)> expand(const BasisSpec& spec, const Vector& coefficients) {
  if (coefficients.size() != feature_count(spec)) {
    throw InvalidArgument("expansion has " + std::to_string(coefficients.size()) +
                          " coefficients, basis has " + std::to_string(feature_count(spec)) +
                          " features");
  }
  return [spec, coefficients](const Vector& x) { return coefficients.dot(eval_basis(spec, x)); };
}

}  // namespace ctrlid
