#pragma once

#include <Eigen/Dense>
#include <compare>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "hddf/geometry.hpp"

namespace hddf {

// Identifies one 3-dof pose variable. Object IDs are globally unique across
// robots (shared reference frame); robot poses are keyed by (robot, step).
struct VariableKey {
  enum class Kind : std::uint8_t { RobotPose = 0, ObjectPose = 1 };

  Kind kind = Kind::RobotPose;
  std::uint32_t owner = 0;  // robot id; 0 for object poses
  std::uint64_t index = 0;  // time step, or object id

  static VariableKey robot_pose(std::uint32_t robot, std::uint64_t step) {
    return {Kind::RobotPose, robot, step};
  }
  static VariableKey object_pose(std::uint64_t object_id) {
    return {Kind::ObjectPose, 0, object_id};
  }

  auto operator<=>(const VariableKey&) const = default;
  std::string str() const;
};

// Gaussian over named pose variables in information (canonical) form:
// exp(-1/2 d' L d + eta' d) up to scale, where d is the stacked tangent
// displacement from the per-variable linearization points. Fusion is block
// addition; down-dating is block subtraction. May be indefinite when used
// as a factor; density-only operations (sample, evaluate, mean) require
// positive definiteness.
class GaussianDensity {
 public:
  GaussianDensity() = default;
  GaussianDensity(std::vector<VariableKey> vars, Eigen::MatrixXd lambda,
                  Eigen::VectorXd eta, std::vector<Pose2> lin);

  // Block-diagonal isotropic density, the usual weak-prior constructor.
  static GaussianDensity isotropic_prior(const VariableKey& var,
                                         const Pose2& center, double sigma);

  int num_vars() const { return static_cast<int>(vars_.size()); }
  int dim() const { return 3 * num_vars(); }
  bool empty() const { return vars_.empty(); }

  const std::vector<VariableKey>& vars() const { return vars_; }
  const Eigen::MatrixXd& lambda() const { return lambda_; }
  const Eigen::VectorXd& eta() const { return eta_; }
  const std::vector<Pose2>& lin_points() const { return lin_; }

  bool has(const VariableKey& v) const;
  int index_of(const VariableKey& v) const;  // -1 if absent
  const Pose2& lin_point(const VariableKey& v) const;

  // Shifts the linearization point of one variable by first-order transport
  // of (lambda, eta).
  void relinearize_to(const VariableKey& v, const Pose2& target);

  bool is_positive_definite() const;

  // Mean poses (requires positive definite lambda).
  Pose2 mean_pose(const VariableKey& v) const;
  std::vector<Pose2> mean_all() const;
  Eigen::MatrixXd covariance() const;

  // Log-density of a normalized Gaussian with these parameters at `point`,
  // which must cover every variable.
  double evaluate_log_density(const std::map<VariableKey, Pose2>& point) const;

  // n joint samples, aligned with vars(). Deterministic under rng state.
  std::vector<std::vector<Pose2>> sample(int n, std::mt19937_64& rng) const;

 private:
  std::vector<VariableKey> vars_;
  Eigen::MatrixXd lambda_;
  Eigen::VectorXd eta_;
  std::vector<Pose2> lin_;
};

// Union of variables; information added on aligned blocks. Lin-point
// mismatches on shared variables are resolved by transporting b onto a's
// points.
GaussianDensity multiply(const GaussianDensity& a, const GaussianDensity& b);

// Information subtracted on the denominator's blocks. Denominator variables
// must be a subset of the numerator's. The result is a factor and may be
// indefinite.
GaussianDensity divide(const GaussianDensity& numerator,
                       const GaussianDensity& denominator);

// Schur-complement marginal over `keep` (must be a non-empty subset).
GaussianDensity marginalize(const GaussianDensity& d,
                            const std::vector<VariableKey>& keep);

}  // namespace hddf
