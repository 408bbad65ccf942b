#include <algorithm>
#include <cmath>
#include <random>

#include "acceptance.hpp"
#include "test_util.hpp"
#include "vps/geometry/camera.hpp"
#include "vps/geometry/least_squares.hpp"
#include "vps/geometry/robust.hpp"

namespace vps::acceptance {

namespace {

constexpr double kGroupTolerance = 1e-9;  // relative
constexpr double kJacobianTolerance = 1e-5;  // relative
constexpr double kRosenbrockTolerance = 1e-6;

double group_law_error() {
  std::mt19937_64 rng(21);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const Sim3 a = testing::random_sim3(rng), b = testing::random_sim3(rng), c = testing::random_sim3(rng);
    const Vec3 x = testing::random_vec3(rng, 50.0);
    const double scale = std::max(1.0, x.norm());
    const Vec3 composed = (a * b).apply(x), nested = a.apply(b.apply(x));
    worst = std::max(worst, (composed - nested).norm() / std::max(1.0, nested.norm()));
    const Vec3 left = ((a * b) * c).apply(x), right = (a * (b * c)).apply(x);
    worst = std::max(worst, (left - right).norm() / std::max(1.0, right.norm()));
    worst = std::max(worst, (a.inverse().apply(a.apply(x)) - x).norm() / scale);
    worst = std::max(worst, (Sim3().apply(x) - x).norm() / scale);
    if (!(a.scale() > 0.0)) worst = 1.0;
  }
  return worst;
}

double huber_error() {
  // Closed forms: r <= d gives r^2 / 2 with weight 1, otherwise d (r - d / 2)
  // with weight d / r.
  double worst = 0.0;
  for (double d : {0.1, 0.5, 2.0}) {
    for (double r : {0.0, 0.05, 0.5, 1.0, 3.0, 10.0}) {
      const auto h = huber(r, d);
      const double loss = r <= d ? 0.5 * r * r : d * (r - 0.5 * d);
      const double weight = r <= d ? 1.0 : d / r;
      worst = std::max({worst, std::abs(h.loss - loss), std::abs(h.weight - weight)});
    }
  }
  return worst;
}

double projection_jacobian_error() {
  std::mt19937_64 rng(31);
  Camera cam;
  cam.focal = 500.0;
  cam.principal_point = Vec2(320.0, 240.0);
  cam.image_size = Vec2(640.0, 480.0);
  double worst = 0.0;
  int checked = 0;
  while (checked < 200) {
    const Pose pose = testing::random_pose(rng, 5.0);
    const Vec3 local = Vec3(testing::random_vec3(rng, 2.0).head<2>().x(), testing::random_vec3(rng, 2.0).y(),
                            5.0 + std::abs(testing::random_vec3(rng, 5.0).z()));
    const Vec3 x = pose.apply(local);
    const auto j = project_with_jacobian(x, pose, cam);
    if (!j) continue;
    const double h = 1e-6;
    Eigen::Matrix<double, 2, 6> fd_pose;
    bool inside = true;
    for (int k = 0; k < 6 && inside; ++k) {
      Vec6 d = Vec6::Zero();
      d(k) = h;
      const auto p = project(x, pose.retract(d), cam);
      d(k) = -h;
      const auto m = project(x, pose.retract(d), cam);
      inside = p && m;
      if (inside) fd_pose.col(k) = (*p - *m) / (2 * h);
    }
    Eigen::Matrix<double, 2, 3> fd_point;
    for (int k = 0; k < 3 && inside; ++k) {
      Vec3 d = Vec3::Zero();
      d(k) = h;
      const auto p = project(x + d, pose, cam), m = project(x - d, pose, cam);
      inside = p && m;
      if (inside) fd_point.col(k) = (*p - *m) / (2 * h);
    }
    if (!inside) continue;
    worst = std::max(worst, (j->d_pose - fd_pose).norm() / std::max(1.0, fd_pose.norm()));
    worst = std::max(worst, (j->d_point - fd_point).norm() / std::max(1.0, fd_point.norm()));
    ++checked;
  }
  return worst;
}

}  // namespace

Outcome geometry_invariants() {
  Outcome out;
  const double group = group_law_error();
  out.check("Sim3 composition, associativity, inverse and identity", group < kGroupTolerance,
            "worst relative " + fmt(group) + " over 500 samples");
  const double h = huber_error();
  out.check("Huber loss and weight closed forms", h < 1e-12, "worst " + fmt(h));
  const double jac = projection_jacobian_error();
  out.check("projection Jacobians against central differences", jac < kJacobianTolerance,
            "worst relative " + fmt(jac) + " over 200 points");

  FunctionProblem rosenbrock(
      2, 2,
      [](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
        r(0) = 1.0 - x(0);
        r(1) = 10.0 * (x(1) - x(0) * x(0));
      },
      [](const Eigen::VectorXd& x, Triplets& j) {
        j.emplace_back(0, 0, -1.0);
        j.emplace_back(1, 0, -20.0 * x(0));
        j.emplace_back(1, 1, 10.0);
      });
  Eigen::VectorXd x0(2);
  x0 << -1.2, 1.0;
  const auto result = solve_least_squares(rosenbrock, x0);
  const double dist = (result.parameters - Eigen::Vector2d(1.0, 1.0)).norm();
  bool monotone = true;
  for (size_t i = 1; i < result.cost_history.size(); ++i) monotone = monotone && result.cost_history[i] <= result.cost_history[i - 1];
  out.check("solver reaches the Rosenbrock minimum", result.converged && dist < kRosenbrockTolerance,
            "distance " + fmt(dist) + " after " + std::to_string(result.cost_history.size()) + " accepted costs");
  out.check("solver cost never increases", monotone);
  return out;
}

}  // namespace vps::acceptance
