#include "hddf/geometry.hpp"

#include <Eigen/Eigenvalues>

#include "hddf/errors.hpp"

namespace hddf {

double wrap_angle(double theta) {
  theta = std::fmod(theta, 2.0 * M_PI);
  if (theta > M_PI) theta -= 2.0 * M_PI;
  if (theta <= -M_PI) theta += 2.0 * M_PI;
  return theta;
}

Pose2 compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  return Pose2(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y,
               a.theta + b.theta);
}

Pose2 inverse(const Pose2& p) {
  const double c = std::cos(p.theta);
  const double s = std::sin(p.theta);
  return Pose2(-(c * p.x + s * p.y), -(-s * p.x + c * p.y), -p.theta);
}

Pose2 between(const Pose2& a, const Pose2& b) {
  return compose(inverse(a), b);
}

Vec3 local_diff(const Pose2& p, const Pose2& base) {
  return Vec3(p.x - base.x, p.y - base.y, wrap_angle(p.theta - base.theta));
}

Pose2 retract(const Pose2& p, const Vec3& delta) {
  return Pose2(p.x + delta(0), p.y + delta(1), p.theta + delta(2));
}

double distance_xy(const Pose2& a, const Pose2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

void check_noise_covariance(const Mat3& cov) {
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw ConfigError("noise covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  if (es.eigenvalues().minCoeff() < -1e-12) {
    throw ConfigError("noise covariance has a negative eigenvalue");
  }
}

Pose2 sample_pose_noise(const Mat3& cov, std::mt19937_64& rng) {
  check_noise_covariance(cov);
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 scale = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  std::normal_distribution<double> n01;
  Vec3 z;
  for (int i = 0; i < 3; ++i) z(i) = n01(rng);
  const Vec3 d = es.eigenvectors() * scale.asDiagonal() * z;
  return Pose2(d(0), d(1), d(2));
}

}  // namespace hddf
