#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "hddf/classifier_model.hpp"
#include "hddf/factor_graph.hpp"
#include "hddf/gaussian.hpp"

namespace hddf {

// One class label per known object; the discrete hypothesis index.
// Canonically ordered by object ID.
struct ClassRealization {
  std::map<std::uint64_t, ClassLabel> classes;

  bool operator==(const ClassRealization&) const = default;
  auto operator<=>(const ClassRealization&) const = default;

  ClassRealization restricted_to(const std::set<std::uint64_t>& ids) const;
  std::uint64_t hash() const;
  std::string str() const;
};

struct Hypothesis {
  ClassRealization realization;
  GaussianDensity belief;  // conditional continuous belief
  double log_weight = 0.0;
};

struct GeometricMeasurement {
  std::uint64_t object_id = 0;
  Pose2 measured;
  Mat3 cov;
};

// All local inputs of one time step.
struct StepInputs {
  Pose2 odometry;
  Mat3 odometry_cov;
  std::vector<GeometricMeasurement> geo;
  std::vector<SemanticMeasurement> sem;
  std::shared_ptr<const ViewpointModel> model;
  int n_samples = 100;
  std::uint64_t seed = 0;
};

// Externally received update terms, resolved per class realization by the
// fusion layer. The continuous part is an information-form factor over
// object poses; the discrete part is a log weight increment.
struct ExternalTerm {
  GaussianDensity continuous;
  double log_discrete = 0.0;
};
using ExternalResolver = std::function<ExternalTerm(const ClassRealization&)>;

// Per-robot hybrid belief: one conditional Gaussian per class realization
// with a log weight. Weights are normalized after every public update.
class HybridBelief {
 public:
  HybridBelief(std::uint32_t robot_id, int num_classes, const Pose2& initial,
               const Mat3& initial_cov);

  std::uint32_t robot_id() const { return robot_id_; }
  int num_classes() const { return m_; }
  std::uint64_t current_step() const { return step_; }
  VariableKey current_pose_key() const {
    return VariableKey::robot_pose(robot_id_, step_);
  }
  const std::set<std::uint64_t>& known_objects() const { return objects_; }
  const std::vector<Hypothesis>& hypotheses() const { return hypotheses_; }

  const GaussianDensity& object_pose_prior(std::uint64_t id) const;
  const Eigen::VectorXd& class_prior(std::uint64_t id) const;

  // Cartesian expansion of the hypothesis set over the new objects' class
  // options; beliefs gain the (weak) pose priors, weights the class prior.
  void expand_for_new_objects(
      const std::vector<std::uint64_t>& new_ids,
      const Eigen::VectorXd& class_prior,
      const std::map<std::uint64_t, GaussianDensity>& pose_priors);

  // Advance one step from local measurements only.
  void local_update(const StepInputs& in);

  // Advance one step, additionally folding in external terms resolved per
  // realization. Realizations must already cover every object referenced by
  // the resolver's continuous factors (expand first).
  void distributed_update(const StepInputs& in,
                          const ExternalResolver& external);

  void prune(double ratio_threshold);

  Eigen::VectorXd class_marginal(std::uint64_t object_id) const;

  // Weighted mean over hypotheses; positions averaged in Euclidean space,
  // angles via circular mean.
  std::map<VariableKey, Pose2> weighted_mean_poses() const;

  // Weighted average over hypotheses of sqrt of the mean position variance
  // of one variable's marginal.
  double weighted_position_sqrt_cov(const VariableKey& v) const;

 private:
  std::uint32_t robot_id_;
  int m_;
  std::uint64_t step_ = 0;
  std::set<std::uint64_t> objects_;
  std::vector<Hypothesis> hypotheses_;
  std::map<std::uint64_t, GaussianDensity> pose_priors_;
  std::map<std::uint64_t, Eigen::VectorXd> class_priors_;

  void update_step(const StepInputs& in, const ExternalResolver* external);
  void normalize();
};

}  // namespace hddf
