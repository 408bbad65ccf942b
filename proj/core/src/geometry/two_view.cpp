#include "vps/geometry/two_view.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/SVD>

#include "vps/random.hpp"

namespace vps {

namespace {

using Mat9 = Eigen::Matrix<double, Eigen::Dynamic, 9>;

std::optional<Mat3> eight_point(std::span<const Vec3> b1, std::span<const Vec3> b2,
                                const std::vector<int>& idx) {
  if (idx.size() < 8) return std::nullopt;
  Mat9 a(static_cast<Eigen::Index>(idx.size()), 9);
  for (size_t r = 0; r < idx.size(); ++r) {
    const Vec3& p = b1[static_cast<size_t>(idx[r])];
    const Vec3& q = b2[static_cast<size_t>(idx[r])];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) a(static_cast<Eigen::Index>(r), 3 * i + j) = p(i) * q(j);
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> e = svd.matrixV().col(8);
  Mat3 m;
  m << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
  Eigen::JacobiSVD<Mat3> s(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return s.matrixU() * Vec3(1, 1, 0).asDiagonal() * s.matrixV().transpose();
}

double epipolar_error(const Mat3& e, const Vec3& p, const Vec3& q) {
  const Vec3 n1 = e * q;
  const Vec3 n2 = e.transpose() * p;
  const double v = std::abs(p.dot(n1));
  const double a = n1.norm() > 0 ? v / n1.norm() : 1.0;
  const double b = n2.norm() > 0 ? v / n2.norm() : 1.0;
  return std::max(a, b);
}

// Depths of a correspondence along both rays for pose (R, t).
std::pair<double, double> depths(const Mat3& r, const Vec3& t, const Vec3& p, const Vec3& q) {
  // s1 p = s2 R q + t  ->  [p, -Rq] [s1 s2]^T = t
  Eigen::Matrix<double, 3, 2> a;
  a.col(0) = p;
  a.col(1) = -(r * q);
  const Eigen::Vector2d s = a.colPivHouseholderQr().solve(t);
  return {s(0), s(1)};
}

}  // namespace

std::optional<RelativePose> estimate_relative_pose(std::span<const Vec3> b1,
                                                   std::span<const Vec3> b2, int iterations,
                                                   double threshold, uint64_t seed) {
  const int n = static_cast<int>(b1.size());
  if (n < 8 || b2.size() != b1.size()) return std::nullopt;
  std::mt19937_64 rng(derive_seed({seed, 0xe55}));
  std::vector<int> all(static_cast<size_t>(n));
  std::iota(all.begin(), all.end(), 0);

  std::vector<int> best_inliers;
  for (int it = 0; it < iterations; ++it) {
    std::vector<int> sample;
    std::sample(all.begin(), all.end(), std::back_inserter(sample), 8, rng);
    const auto e = eight_point(b1, b2, sample);
    if (!e) continue;
    std::vector<int> inliers;
    for (int i = 0; i < n; ++i) {
      if (epipolar_error(*e, b1[static_cast<size_t>(i)], b2[static_cast<size_t>(i)]) < threshold) {
        inliers.push_back(i);
      }
    }
    if (inliers.size() > best_inliers.size()) best_inliers = std::move(inliers);
  }
  if (best_inliers.size() < 8) return std::nullopt;
  const auto e = eight_point(b1, b2, best_inliers);
  if (!e) return std::nullopt;

  Eigen::JacobiSVD<Mat3> svd(*e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU(), v = svd.matrixV();
  if (u.determinant() < 0) u = -u;
  if (v.determinant() < 0) v = -v;
  Mat3 w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Mat3 rs[2] = {u * w * v.transpose(), u * w.transpose() * v.transpose()};
  const Vec3 ts[2] = {u.col(2), -u.col(2)};

  int best_front = -1;
  RelativePose out;
  for (const auto& r : rs) {
    for (const auto& t : ts) {
      int front = 0;
      for (int i : best_inliers) {
        const auto [s1, s2] = depths(r, t, b1[static_cast<size_t>(i)], b2[static_cast<size_t>(i)]);
        if (s1 > 0 && s2 > 0) ++front;
      }
      if (front > best_front) {
        best_front = front;
        out.rotation = Quat(r).normalized();
        out.translation = t.normalized();
      }
    }
  }
  for (int i : best_inliers) {
    const auto [s1, s2] =
        depths(out.rotation.toRotationMatrix(), out.translation, b1[static_cast<size_t>(i)], b2[static_cast<size_t>(i)]);
    if (s1 > 0 && s2 > 0) out.inliers.push_back(i);
  }
  return out;
}

std::optional<Vec3> triangulate_midpoint(std::span<const Vec3> centers,
                                         std::span<const Vec3> directions) {
  if (centers.size() < 2 || centers.size() != directions.size()) return std::nullopt;
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (size_t i = 0; i < centers.size(); ++i) {
    const Vec3 d = directions[i].normalized();
    const Mat3 p = Mat3::Identity() - d * d.transpose();
    a += p;
    b += p * centers[i];
  }
  Eigen::JacobiSVD<Mat3> svd(a);
  const auto sv = svd.singularValues();
  if (sv(2) < 1e-12 * sv(0)) return std::nullopt;
  return a.ldlt().solve(b);
}

double max_ray_angle(std::span<const Vec3> directions) {
  double best = 0.0;
  for (size_t i = 0; i < directions.size(); ++i) {
    for (size_t j = i + 1; j < directions.size(); ++j) {
      const Vec3 a = directions[i].normalized(), b = directions[j].normalized();
      best = std::max(best, std::atan2(a.cross(b).norm(), a.dot(b)));
    }
  }
  return best;
}

}  // namespace vps
