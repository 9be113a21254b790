#pragma once

#include <cmath>

#include "igdm/errors.hpp"
#include "igdm/matrix.hpp"
#include "igdm/rng.hpp"

namespace igdm {

// Xavier (Glorot) uniform: entries i.i.d. on [-b, b], b = sqrt(6/(fan_in+fan_out)).
inline DenseMatrix xavier_uniform(int rows, int cols, Rng& rng) {
  if (rows < 1 || cols < 1) {
    throw ContractError("xavier_uniform: shape must be at least 1x1, got " +
                        std::to_string(rows) + "x" + std::to_string(cols));
  }
  const double bound = std::sqrt(6.0 / (rows + cols));
  DenseMatrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}

}  // namespace igdm
