#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace ctrlid {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Axis-aligned box in R^n.
struct Box {
  Vector lower;
  Vector upper;

  Box() = default;
  Box(Vector lo, Vector hi);

  static Box cube(Index n, double lo, double hi);

  Index dim() const { return lower.size(); }
  Vector side_lengths() const { return upper - lower; }
  bool contains(const Vector& x, double tol = 1e-12) const;
};

}  // namespace ctrlid
