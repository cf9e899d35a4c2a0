#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <random>
#include <string>

#include "hddf/geometry.hpp"

namespace hddf {

// Class labels are 1..M (closed set).
using ClassLabel = int;

// Classifier output: a probability vector over the M classes, tagged with
// the externally-determined object association.
struct SemanticMeasurement {
  std::uint64_t object_id = 0;
  Eigen::VectorXd probs;
};

// Gaussian model of classifier output whose mean (and covariance) depend on
// the object class and the relative robot-to-object viewpoint. psi is the
// yaw of the relative pose; theta is a secondary viewpoint angle used by
// lookup-table models (zero in the planar simulation).
class ViewpointModel {
 public:
  virtual ~ViewpointModel() = default;

  virtual int num_classes() const = 0;
  virtual bool viewpoint_dependent() const = 0;
  virtual Eigen::VectorXd mean(ClassLabel c, double psi, double theta) const = 0;
  virtual Eigen::MatrixXd covariance(ClassLabel c, double psi,
                                     double theta) const = 0;

  // d mean / d psi; default is a central difference over mean().
  virtual Eigen::VectorXd mean_dpsi(ClassLabel c, double psi,
                                    double theta) const;

 protected:
  void check_class(ClassLabel c) const;
};

// The perceptual-aliasing simulation model (M = 2): mean components are
// affine in sin(psi), with both classes identical at psi = -90 degrees.
class AliasingSimulationModel : public ViewpointModel {
 public:
  AliasingSimulationModel();
  explicit AliasingSimulationModel(const Eigen::Matrix2d& sqrt_info);

  int num_classes() const override { return 2; }
  bool viewpoint_dependent() const override { return true; }
  Eigen::VectorXd mean(ClassLabel c, double psi, double theta) const override;
  Eigen::MatrixXd covariance(ClassLabel c, double psi,
                             double theta) const override;
  Eigen::VectorXd mean_dpsi(ClassLabel c, double psi,
                            double theta) const override;

 private:
  Eigen::Matrix2d cov_;
};

// Viewpoint-independent model with fixed per-class means. Used for oracle
// comparisons where the discrete update has a closed form.
class ConstantModel : public ViewpointModel {
 public:
  ConstantModel(std::vector<Eigen::VectorXd> means, Eigen::MatrixXd cov);

  int num_classes() const override { return static_cast<int>(means_.size()); }
  bool viewpoint_dependent() const override { return false; }
  Eigen::VectorXd mean(ClassLabel c, double psi, double theta) const override;
  Eigen::MatrixXd covariance(ClassLabel c, double psi,
                             double theta) const override;
  Eigen::VectorXd mean_dpsi(ClassLabel c, double psi,
                            double theta) const override;

 private:
  std::vector<Eigen::VectorXd> means_;
  Eigen::MatrixXd cov_;
};

// Bilinear interpolation over a (psi, theta) grid of trained mean vectors.
class LookupModel : public ViewpointModel {
 public:
  LookupModel(std::vector<double> psi_deg, std::vector<double> theta_deg,
              std::vector<std::vector<Eigen::VectorXd>> values,
              Eigen::MatrixXd cov);

  int num_classes() const override { return static_cast<int>(values_.size()); }
  bool viewpoint_dependent() const override { return true; }
  Eigen::VectorXd mean(ClassLabel c, double psi, double theta) const override;
  Eigen::MatrixXd covariance(ClassLabel c, double psi,
                             double theta) const override;

  // Interpolated value before simplex renormalization (test hook).
  Eigen::VectorXd raw_mean(ClassLabel c, double psi, double theta) const;

 private:
  std::vector<double> psi_deg_;
  std::vector<double> theta_deg_;
  // values_[class-1][i_psi * n_theta + i_theta]
  std::vector<std::vector<Eigen::VectorXd>> values_;
  Eigen::MatrixXd cov_;
};

// CSV with header (class, psi_deg, theta_deg, p1..pM), one row per node.
// The grid must cover psi in [-180, 180] for every class; rows must be on
// the simplex within 1e-3.
std::unique_ptr<LookupModel> load_lookup_model(const std::string& path,
                                               const Eigen::MatrixXd& cov);
std::unique_ptr<LookupModel> load_lookup_model(const std::string& path);

struct SemanticPrediction {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

SemanticPrediction predict(const ViewpointModel& model, ClassLabel c,
                           const Pose2& rel);

double semantic_log_likelihood(const ViewpointModel& model,
                               const Eigen::VectorXd& z, ClassLabel c,
                               const Pose2& robot, const Pose2& object);

// Draw from the Gaussian, clamp to [0, 1] and renormalize to the simplex.
SemanticMeasurement sample_semantic(const ViewpointModel& model, ClassLabel c,
                                    const Pose2& rel, std::uint64_t object_id,
                                    std::mt19937_64& rng);

// Default measurement covariance via a square-root information matrix R,
// cov = (R'R)^-1.
Eigen::Matrix2d default_semantic_covariance();

}  // namespace hddf
