#include "ctrlid/types.hpp"

#include "ctrlid/errors.hpp"

#include <utility>

namespace ctrlid {

Box::Box(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size())
    throw InvalidArgument("box bounds have mismatched dimensions");
  for (Index i = 0; i < lower.size(); ++i) {
    if (!(upper[i] > lower[i]))
      throw InvalidArgument("box side " + std::to_string(i) + " has non-positive length");
  }
}

Box Box::cube(Index n, double lo, double hi) {
  return Box(Vector::Constant(n, lo), Vector::Constant(n, hi));
}

bool Box::contains(const Vector& x, double tol) const {
  if (x.size() != dim()) return false;
  for (Index i = 0; i < x.size(); ++i) {
    if (x[i] < lower[i] - tol || x[i] > upper[i] + tol) return false;
  }
  return true;
}

StageError::StageError(std::string stage, std::optional<int> anchor, std::optional<int> input,
                       const std::string& cause)
    : Error([&] {
        std::string msg = stage + " failed";
        if (anchor) msg += " at anchor " + std::to_string(*anchor);
        if (input) msg += ", input " + std::to_string(*input);
        return msg + ": " + cause;
      }()),
      stage_(std::move(stage)),
      anchor_(anchor),
      input_(input),
      cause_(cause) {}

}  // namespace ctrlid
