#include "vps/geometry/absolute_pose.hpp"

#include <cmath>
#include <limits>

#include "vps/geometry/least_squares.hpp"

namespace vps {

namespace {

// Penalty (pixels) per axis for points behind the camera.
constexpr double kBehindPenalty = 1e3;

Pose unpack(const Eigen::VectorXd& x) {
  return Pose(Quat(x(0), x(1), x(2), x(3)), Vec3(x(4), x(5), x(6)));
}

Eigen::VectorXd pack(const Pose& p) {
  Eigen::VectorXd x(7);
  const Quat& q = p.rotation();
  x << q.w(), q.x(), q.y(), q.z(), p.translation();
  return x;
}

class PoseProblem : public LeastSquaresProblem {
 public:
  PoseProblem(std::span<const Vec3> points, std::span<const Vec2> pixels,
              std::span<const Vec3> bearings, const Camera* camera, double huber)
      : points_(points), pixels_(pixels), bearings_(bearings), camera_(camera), huber_(huber) {}

  Eigen::Index parameter_size() const override { return 7; }
  Eigen::Index tangent_size() const override { return 6; }
  Eigen::Index residual_size() const override {
    return static_cast<Eigen::Index>(points_.size()) * (camera_ ? 2 : 3);
  }
  bool analytic_jacobian() const override { return true; }

  Eigen::VectorXd plus(const Eigen::VectorXd& x, const Eigen::VectorXd& d) const override {
    return pack(unpack(x).retract(d));
  }

  std::vector<ResidualBlock> residual_blocks() const override {
    std::vector<ResidualBlock> blocks;
    const Eigen::Index dim = camera_ ? 2 : 3;
    for (size_t i = 0; i < points_.size(); ++i) {
      blocks.push_back({static_cast<Eigen::Index>(i) * dim, dim, huber_, 1.0});
    }
    return blocks;
  }

  void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r, Triplets* jac) const override {
    const Pose pose = unpack(x);
    const Mat3 rt = pose.rotation_matrix().transpose();
    for (size_t i = 0; i < points_.size(); ++i) {
      const int row = static_cast<int>(i) * (camera_ ? 2 : 3);
      if (camera_) {
        const auto pj = project_with_jacobian(points_[i], pose, *camera_);
        if (!pj) {
          r.segment<2>(row).setConstant(kBehindPenalty);
          continue;
        }
        r.segment<2>(row) = pj->pixel - pixels_[i];
        if (jac) append(*jac, row, pj->d_pose);
      } else {
        const Vec3 pc = rt * (points_[i] - pose.translation());
        const double n = pc.norm();
        if (n < 1e-12) {
          r.segment<3>(row).setZero();
          continue;
        }
        const Vec3 u = pc / n;
        r.segment<3>(row) = u - bearings_[i];
        if (jac) {
          const Mat3 du = (Mat3::Identity() - u * u.transpose()) / n;
          Eigen::Matrix<double, 3, 6> d;
          d.leftCols<3>() = du * skew(pc);
          d.rightCols<3>() = -du * rt;
          append(*jac, row, d);
        }
      }
    }
  }

 private:
  template <int Rows>
  static void append(Triplets& jac, int row, const Eigen::Matrix<double, Rows, 6>& d) {
    for (int a = 0; a < Rows; ++a) {
      for (int b = 0; b < 6; ++b) jac.emplace_back(row + a, b, d(a, b));
    }
  }

  std::span<const Vec3> points_;
  std::span<const Vec2> pixels_;
  std::span<const Vec3> bearings_;
  const Camera* camera_;
  double huber_;
};

PoseFit run(const PoseProblem& problem, const Pose& initial, int max_iterations) {
  SolverOptions options;
  options.max_iterations = max_iterations;
  const SolverResult result = solve_least_squares(problem, pack(initial), options);
  return {unpack(result.parameters), result.final_cost, result.iterations};
}

}  // namespace

Quat gravity_aligned_rotation(double heading, const Vec3& gravity_camera) {
  const Quat tilt = Quat::FromTwoVectors(gravity_camera.normalized(), Vec3(0, 1, 0));
  return (camera_rotation_from_heading(heading) * tilt).normalized();
}

PoseFit refine_pose_pixels(const Pose& initial, std::span<const Vec3> points,
                           std::span<const Vec2> pixels, const Camera& camera, double huber_px,
                           int max_iterations) {
  const PoseProblem problem(points, pixels, {}, &camera, huber_px);
  return run(problem, initial, max_iterations);
}

PoseFit refine_pose_bearings(const Pose& initial, std::span<const Vec3> points,
                             std::span<const Vec3> bearings, double huber, int max_iterations) {
  const PoseProblem problem(points, {}, bearings, nullptr, huber);
  return run(problem, initial, max_iterations);
}

PoseFit fit_pose_from_position(const Vec3& position, const Vec3& gravity_camera,
                               std::span<const Vec3> points, std::span<const Vec3> bearings,
                               int yaw_samples) {
  PoseFit best;
  best.cost = std::numeric_limits<double>::infinity();
  for (int k = 0; k < yaw_samples; ++k) {
    const double heading = 2.0 * M_PI * k / yaw_samples;
    const Pose init(gravity_aligned_rotation(heading, gravity_camera), position);
    const PoseFit fit = refine_pose_bearings(init, points, bearings, 0.05, 30);
    if (fit.cost < best.cost) best = fit;
  }
  return best;
}

}  // namespace vps
