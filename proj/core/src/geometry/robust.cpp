#include "vps/geometry/robust.hpp"

#include <cmath>

namespace vps {

HuberResult huber(double residual_norm, double delta) {
  const double n = std::abs(residual_norm);
  if (n <= delta) return {0.5 * n * n, 1.0};
  return {delta * (n - 0.5 * delta), delta / n};
}

}  // namespace vps
