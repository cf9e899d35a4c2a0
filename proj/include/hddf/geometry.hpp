#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>

namespace hddf {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

// Wrap an angle to (-pi, pi].
double wrap_angle(double theta);

// SE(2) pose (x, y, yaw). Yaw is kept in (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2() = default;
  Pose2(double x_, double y_, double theta_)
      : x(x_), y(y_), theta(wrap_angle(theta_)) {}

  Vec3 vec() const { return Vec3(x, y, theta); }
};

Pose2 compose(const Pose2& a, const Pose2& b);
Pose2 inverse(const Pose2& p);

// Relative pose rel with compose(a, rel) == b. The yaw component is the
// relative orientation consumed by the classifier model.
Pose2 between(const Pose2& a, const Pose2& b);

// Coordinate-wise difference (x, y, wrapped yaw). This is the tangent
// parameterization used by the information-form machinery.
Vec3 local_diff(const Pose2& p, const Pose2& base);

// p shifted by a tangent increment (x, y, wrapped yaw).
Pose2 retract(const Pose2& p, const Vec3& delta);

double distance_xy(const Pose2& a, const Pose2& b);

// Throws ConfigError unless cov is symmetric positive semi-definite.
void check_noise_covariance(const Mat3& cov);

// Zero-mean Gaussian pose perturbation with covariance cov, to be applied
// on the right (body frame) of a pose. Deterministic under a fixed rng.
Pose2 sample_pose_noise(const Mat3& cov, std::mt19937_64& rng);

}  // namespace hddf
