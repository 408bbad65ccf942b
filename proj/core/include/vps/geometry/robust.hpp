#pragma once

namespace vps {

struct HuberResult {
  double loss = 0.0;
  // IRLS weight min(1, delta / norm).
  double weight = 1.0;
};

// Huber loss of a residual norm: norm^2 / 2 inside delta, delta * (norm - delta / 2)
// beyond. Requires delta > 0.
HuberResult huber(double residual_norm, double delta);

// Default Huber thresholds.
inline constexpr double kReprojectionHuberPx = 2.0;
inline constexpr double kSyncHuberMeters = 0.5;

}  // namespace vps
