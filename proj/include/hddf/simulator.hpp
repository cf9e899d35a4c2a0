#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hddf/fusion.hpp"
#include "hddf/hybrid_belief.hpp"
#include "hddf/metrics.hpp"

namespace hddf {

enum class Mode { Local, Distributed, DoubleCount };
std::string mode_name(Mode m);

struct RobotConfig {
  std::uint32_t id = 0;
  Pose2 start;
  std::vector<Eigen::Vector2d> waypoints;
  double speed = 1.0;  // meters per step
};

struct ObjectConfig {
  std::uint64_t id = 0;
  Pose2 pose;
  ClassLabel true_class = 1;
};

struct ScenarioConfig {
  std::vector<RobotConfig> robots;
  std::vector<ObjectConfig> objects;
  int num_classes = 2;
  int steps = 1;
  double sensing_range_m = 10.0;
  double comm_range_m = 10.0;
  Mat3 odometry_cov = Mat3::Zero();
  Mat3 geometric_cov = Mat3::Zero();
  std::shared_ptr<const ViewpointModel> model;
  double prune_ratio = 0.0;
  int n_samples = 100;
  std::uint64_t seed = 0;
  // Expansion prior for newly detected objects.
  double new_object_sigma_m = 1000.0;
  // Anchor prior on each robot's initial pose.
  double initial_sigma_xy_m = 1e-3;
  double initial_sigma_theta_rad = 1e-3;

  void validate() const;  // throws ConfigError
};

// Parses the JSON scenario document (see docs/scenario_schema.md). Relative
// classifier lookup paths resolve against the scenario file's directory.
ScenarioConfig load_scenario(const std::string& path);

struct RobotStepRecord {
  Pose2 odometry;
  std::vector<GeometricMeasurement> geo;
  std::vector<SemanticMeasurement> sem;
};

struct StepRecord {
  std::map<std::uint32_t, RobotStepRecord> robots;
  // Stored once per unordered pair with first < second.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> comm_pairs;
};

struct GroundTruth {
  std::map<std::uint32_t, Pose2> robot_poses;
  std::map<std::uint32_t, std::size_t> waypoint_index;
};

GroundTruth initial_ground_truth(const ScenarioConfig& cfg);
void advance_ground_truth(const ScenarioConfig& cfg, GroundTruth& gt);

// Noisy measurements and the communication schedule of step k, given the
// true poses before and after the motion.
StepRecord generate_step(const ScenarioConfig& cfg, const GroundTruth& prev,
                         const GroundTruth& cur, std::uint64_t k,
                         std::uint64_t seed);

struct StepMetrics {
  double msde = std::numeric_limits<double>::quiet_NaN();
  double robot_pos_err = std::numeric_limits<double>::quiet_NaN();
  double obj_pos_err = std::numeric_limits<double>::quiet_NaN();
  double sqrt_cov = std::numeric_limits<double>::quiet_NaN();
};

struct RunResult {
  Mode mode = Mode::Local;
  std::uint64_t seed = 0;
  // Indexed [step-1][robot id].
  std::vector<std::map<std::uint32_t, StepMetrics>> metrics;
  std::vector<std::map<std::uint32_t, std::map<std::uint32_t, std::uint64_t>>>
      stack_timestamps;
  std::vector<std::map<std::uint32_t, std::map<std::uint64_t, Eigen::VectorXd>>>
      class_marginals;
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> comm_pairs;
  std::map<std::uint32_t, std::map<VariableKey, Pose2>> final_means;
  int pruning_mismatches = 0;
  double wall_time_s = 0.0;

  std::vector<MetricRow> rows() const;
};

RunResult run(const ScenarioConfig& cfg, Mode mode);
RunResult run(const ScenarioConfig& cfg, Mode mode, std::uint64_t seed);

}  // namespace hddf
