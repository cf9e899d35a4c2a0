#include "hddf/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "hddf/errors.hpp"
#include "hddf/rng.hpp"

namespace hddf {

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::Local:
      return "local";
    case Mode::Distributed:
      return "distributed";
    case Mode::DoubleCount:
      return "double-count";
  }
  throw ContractViolation("unknown mode");
}

void ScenarioConfig::validate() const {
  if (robots.empty()) throw ConfigError("scenario needs at least one robot");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (sensing_range_m <= 0.0 || comm_range_m <= 0.0) {
    throw ConfigError("ranges must be positive");
  }
  if (prune_ratio < 0.0 || prune_ratio >= 1.0) {
    throw ConfigError("prune_ratio must be in [0, 1)");
  }
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (!model) throw ConfigError("scenario needs a classifier model");
  if (model->num_classes() != num_classes) {
    throw ConfigError("classifier model class count does not match scenario");
  }
  if (new_object_sigma_m <= 0.0 || initial_sigma_xy_m <= 0.0 ||
      initial_sigma_theta_rad <= 0.0) {
    throw ConfigError("prior sigmas must be positive");
  }
  std::set<std::uint32_t> rids;
  for (const auto& r : robots) {
    if (!rids.insert(r.id).second) {
      throw ConfigError("duplicate robot id " + std::to_string(r.id));
    }
    if (r.speed <= 0.0) throw ConfigError("robot speed must be positive");
  }
  std::set<std::uint64_t> oids;
  for (const auto& o : objects) {
    if (!oids.insert(o.id).second) {
      throw ConfigError("duplicate object id " + std::to_string(o.id));
    }
    if (o.true_class < 1 || o.true_class > num_classes) {
      throw ConfigError("object " + std::to_string(o.id) +
                        " has an out-of-range class");
    }
  }
  check_noise_covariance(odometry_cov);
  check_noise_covariance(geometric_cov);
}

namespace {

// Either {"cov_diag": [m^2, m^2, rad^2]} or per-axis standard deviations
// {"sigma_x_m", "sigma_y_m", "sigma_theta_rad"}.
Mat3 diag_noise(const nlohmann::json& j) {
  Mat3 out = Mat3::Zero();
  if (j.contains("cov_diag")) {
    const auto& d = j["cov_diag"];
    if (!d.is_array() || d.size() != 3) {
      throw ConfigError("cov_diag must have 3 entries");
    }
    for (int i = 0; i < 3; ++i) out(i, i) = d[i].get<double>();
    return out;
  }
  const double sx = j.at("sigma_x_m").get<double>();
  const double sy = j.at("sigma_y_m").get<double>();
  const double st = j.at("sigma_theta_rad").get<double>();
  out(0, 0) = sx * sx;
  out(1, 1) = sy * sy;
  out(2, 2) = st * st;
  return out;
}

Pose2 parse_pose(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw ConfigError("pose must be [x_m, y_m, theta_rad]");
  }
  return Pose2(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Eigen::MatrixXd parse_matrix(const nlohmann::json& j) {
  const auto rows = j.size();
  if (rows == 0) throw ConfigError("empty matrix");
  const auto cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j[i].size() != cols) throw ConfigError("ragged matrix");
    for (std::size_t k = 0; k < cols; ++k) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          j[i][k].get<double>();
    }
  }
  return m;
}

std::shared_ptr<const ViewpointModel> parse_classifier(
    const nlohmann::json& j, const std::string& base_dir) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "aliasing") {
    return std::make_shared<AliasingSimulationModel>();
  }
  if (type == "constant") {
    std::vector<Eigen::VectorXd> means;
    for (const auto& row : j.at("means")) {
      Eigen::VectorXd v(row.size());
      for (std::size_t i = 0; i < row.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = row[i].get<double>();
      }
      means.push_back(std::move(v));
    }
    return std::make_shared<ConstantModel>(std::move(means),
                                           parse_matrix(j.at("cov")));
  }
  if (type == "lookup") {
    std::filesystem::path p = j.at("path").get<std::string>();
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    if (j.contains("cov")) {
      return std::shared_ptr<const ViewpointModel>(
          load_lookup_model(p.string(), parse_matrix(j.at("cov"))));
    }
    return std::shared_ptr<const ViewpointModel>(load_lookup_model(p.string()));
  }
  throw ConfigError("unknown classifier type '" + type + "'");
}

}  // namespace

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open scenario file " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario " + path + ": " + e.what());
  }
  const std::string base_dir =
      std::filesystem::path(path).parent_path().string();
  ScenarioConfig cfg;
  try {
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.steps = j.at("steps").get<int>();
    cfg.sensing_range_m = j.at("sensing_range_m").get<double>();
    cfg.comm_range_m = j.at("comm_range_m").get<double>();
    cfg.odometry_cov = diag_noise(j.at("odometry_noise"));
    cfg.geometric_cov = diag_noise(j.at("geometric_noise"));
    cfg.model = parse_classifier(j.at("classifier"), base_dir);
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.prune_ratio = j.value("prune_ratio", 0.0);
    cfg.n_samples = j.value("n_samples", 100);
    cfg.new_object_sigma_m = j.value("new_object_sigma_m", 1000.0);
    if (j.contains("initial_prior")) {
      cfg.initial_sigma_xy_m =
          j["initial_prior"].at("sigma_xy_m").get<double>();
      cfg.initial_sigma_theta_rad =
          j["initial_prior"].at("sigma_theta_rad").get<double>();
    }
    for (const auto& rj : j.at("robots")) {
      RobotConfig rc;
      rc.id = rj.at("id").get<std::uint32_t>();
      rc.start = parse_pose(rj.at("start_pose"));
      rc.speed = rj.value("speed_m_per_step", 1.0);
      if (rj.contains("waypoints_m")) {
        for (const auto& wj : rj["waypoints_m"]) {
          if (!wj.is_array() || wj.size() != 2) {
            throw ConfigError("waypoint must be [x_m, y_m]");
          }
          rc.waypoints.emplace_back(wj[0].get<double>(), wj[1].get<double>());
        }
      }
      cfg.robots.push_back(std::move(rc));
    }
    for (const auto& oj : j.at("objects")) {
      ObjectConfig oc;
      oc.id = oj.at("id").get<std::uint64_t>();
      oc.pose = parse_pose(oj.at("pose"));
      oc.true_class = oj.at("class").get<int>();
      cfg.objects.push_back(oc);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario " + path + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

GroundTruth initial_ground_truth(const ScenarioConfig& cfg) {
  GroundTruth gt;
  for (const auto& r : cfg.robots) {
    gt.robot_poses[r.id] = r.start;
    gt.waypoint_index[r.id] = 0;
  }
  return gt;
}

void advance_ground_truth(const ScenarioConfig& cfg, GroundTruth& gt) {
  for (const auto& rc : cfg.robots) {
    Pose2& p = gt.robot_poses[rc.id];
    std::size_t& wi = gt.waypoint_index[rc.id];
    double remaining = rc.speed;
    double heading = p.theta;
    bool moved = false;
    while (remaining > 1e-12 && wi < rc.waypoints.size()) {
      const Eigen::Vector2d& tgt = rc.waypoints[wi];
      const double dx = tgt.x() - p.x;
      const double dy = tgt.y() - p.y;
      const double d = std::hypot(dx, dy);
      if (d <= 1e-12) {
        ++wi;
        continue;
      }
      heading = std::atan2(dy, dx);
      moved = true;
      if (d <= remaining) {
        p.x = tgt.x();
        p.y = tgt.y();
        remaining -= d;
        ++wi;
      } else {
        p.x += remaining * dx / d;
        p.y += remaining * dy / d;
        remaining = 0.0;
      }
    }
    if (moved) p = Pose2(p.x, p.y, heading);
  }
}

StepRecord generate_step(const ScenarioConfig& cfg, const GroundTruth& prev,
                         const GroundTruth& cur, std::uint64_t k,
                         std::uint64_t seed) {
  StepRecord rec;
  for (const auto& rc : cfg.robots) {
    auto rng = make_rng(mix_seed(seed, 0x6d656173u, rc.id, k));
    const Pose2& pp = prev.robot_poses.at(rc.id);
    const Pose2& cp = cur.robot_poses.at(rc.id);
    RobotStepRecord rr;
    rr.odometry =
        compose(between(pp, cp), sample_pose_noise(cfg.odometry_cov, rng));
    for (const auto& oc : cfg.objects) {
      if (distance_xy(cp, oc.pose) > cfg.sensing_range_m) continue;
      const Pose2 rel = between(cp, oc.pose);
      GeometricMeasurement g;
      g.object_id = oc.id;
      g.measured = compose(rel, sample_pose_noise(cfg.geometric_cov, rng));
      g.cov = cfg.geometric_cov;
      rr.geo.push_back(g);
      rr.sem.push_back(
          sample_semantic(*cfg.model, oc.true_class, rel, oc.id, rng));
    }
    rec.robots.emplace(rc.id, std::move(rr));
  }
  for (std::size_t i = 0; i < cfg.robots.size(); ++i) {
    for (std::size_t j = i + 1; j < cfg.robots.size(); ++j) {
      const std::uint32_t a = cfg.robots[i].id;
      const std::uint32_t b = cfg.robots[j].id;
      if (distance_xy(cur.robot_poses.at(a), cur.robot_poses.at(b)) <=
          cfg.comm_range_m) {
        rec.comm_pairs.emplace_back(std::min(a, b), std::max(a, b));
      }
    }
  }
  std::sort(rec.comm_pairs.begin(), rec.comm_pairs.end());
  return rec;
}

namespace {

Pose2 map_estimate_pose(const HybridBelief& hb, const VariableKey& v) {
  const Hypothesis* best = nullptr;
  for (const auto& h : hb.hypotheses()) {
    if (!best || h.log_weight > best->log_weight) best = &h;
  }
  return best->belief.mean_pose(v);
}

// Weak priors for objects newly seen this step, centered at the predicted
// measurement location.
std::map<std::uint64_t, GaussianDensity> measurement_priors(
    const HybridBelief& hb, const RobotStepRecord& rr, double sigma,
    const std::vector<std::uint64_t>& ids) {
  std::map<std::uint64_t, GaussianDensity> out;
  if (ids.empty()) return out;
  const Pose2 prev = map_estimate_pose(hb, hb.current_pose_key());
  const Pose2 pred = compose(prev, rr.odometry);
  for (auto id : ids) {
    for (const auto& g : rr.geo) {
      if (g.object_id == id) {
        out.emplace(id, GaussianDensity::isotropic_prior(
                            VariableKey::object_pose(id),
                            compose(pred, g.measured), sigma));
        break;
      }
    }
  }
  return out;
}

StepMetrics compute_metrics(const HybridBelief& hb, const ScenarioConfig& cfg,
                            const GroundTruth& gt, std::uint32_t rid) {
  StepMetrics m;
  const VariableKey pose_key = hb.current_pose_key();
  m.robot_pos_err =
      weighted_position_error(hb, pose_key, gt.robot_poses.at(rid));
  m.sqrt_cov = hb.weighted_position_sqrt_cov(pose_key);
  double msde_sum = 0.0;
  double err_sum = 0.0;
  int n = 0;
  for (const auto& oc : cfg.objects) {
    if (!hb.known_objects().count(oc.id)) continue;
    msde_sum += msde(hb.class_marginal(oc.id), oc.true_class);
    err_sum += weighted_position_error(
        hb, VariableKey::object_pose(oc.id), oc.pose);
    ++n;
  }
  if (n > 0) {
    m.msde = msde_sum / n;
    m.obj_pos_err = err_sum / n;
  }
  return m;
}

}  // namespace

RunResult run(const ScenarioConfig& cfg, Mode mode) {
  return run(cfg, mode, cfg.seed);
}

RunResult run(const ScenarioConfig& cfg, Mode mode, std::uint64_t seed) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  RunResult out;
  out.mode = mode;
  out.seed = seed;

  Mat3 init_cov = Mat3::Zero();
  init_cov(0, 0) = cfg.initial_sigma_xy_m * cfg.initial_sigma_xy_m;
  init_cov(1, 1) = init_cov(0, 0);
  init_cov(2, 2) = cfg.initial_sigma_theta_rad * cfg.initial_sigma_theta_rad;
  const Eigen::VectorXd uniform_prior =
      Eigen::VectorXd::Constant(cfg.num_classes,
                                1.0 / static_cast<double>(cfg.num_classes));
  // The same base seed feeds local and distributed updates; a robot with no
  // peers then produces bit-identical local and distributed beliefs.
  const std::uint64_t seed_belief = mix_seed(seed, 1);
  const bool distributed = mode != Mode::Local;

  std::map<std::uint32_t, HybridBelief> local;
  std::map<std::uint32_t, HybridBelief> dist;
  std::map<std::uint32_t, Stack> stacks;
  for (const auto& rc : cfg.robots) {
    local.emplace(rc.id,
                  HybridBelief(rc.id, cfg.num_classes, rc.start, init_cov));
    if (distributed) {
      dist.emplace(rc.id,
                   HybridBelief(rc.id, cfg.num_classes, rc.start, init_cov));
      Stack s;
      s.owner = rc.id;
      s.slots[rc.id] = build_own_slot(local.at(rc.id), 0);
      stacks.emplace(rc.id, std::move(s));
    }
  }

  GroundTruth gt = initial_ground_truth(cfg);
  for (int k = 1; k <= cfg.steps; ++k) {
    const GroundTruth prev_gt = gt;
    advance_ground_truth(cfg, gt);
    const StepRecord rec = generate_step(cfg, prev_gt, gt,
                                         static_cast<std::uint64_t>(k), seed);
    // Everyone broadcasts its end-of-previous-step stack before anyone
    // merges, so exchanges within a step are symmetric.
    const std::map<std::uint32_t, Stack> broadcast = stacks;

    std::map<std::uint32_t, StepMetrics> step_metrics;
    std::map<std::uint32_t, std::map<std::uint32_t, std::uint64_t>> step_ts;
    std::map<std::uint32_t, std::map<std::uint64_t, Eigen::VectorXd>>
        step_marginals;

    for (const auto& rc : cfg.robots) {
      const RobotStepRecord& rr = rec.robots.at(rc.id);
      HybridBelief& lb = local.at(rc.id);

      std::vector<std::uint64_t> measured_new;
      for (const auto& g : rr.geo) {
        if (!lb.known_objects().count(g.object_id)) {
          measured_new.push_back(g.object_id);
        }
      }
      StepInputs in;
      in.odometry = rr.odometry;
      in.odometry_cov = cfg.odometry_cov;
      in.geo = rr.geo;
      in.sem = rr.sem;
      in.model = cfg.model;
      in.n_samples = cfg.n_samples;
      in.seed = seed_belief;

      lb.expand_for_new_objects(
          measured_new, uniform_prior,
          measurement_priors(lb, rr, cfg.new_object_sigma_m, measured_new));
      lb.local_update(in);
      lb.prune(cfg.prune_ratio);

      if (distributed) {
        HybridBelief& db = dist.at(rc.id);
        std::vector<Stack> received;
        for (const auto& [a, b] : rec.comm_pairs) {
          if (a == rc.id) received.push_back(broadcast.at(b));
          if (b == rc.id) received.push_back(broadcast.at(a));
        }
        Stack merged = merge_stacks(stacks.at(rc.id), received);
        merged.slots[rc.id] =
            build_own_slot(lb, static_cast<std::uint64_t>(k));
        const ExternalUpdate ext = compute_external_update(
            merged, stacks.at(rc.id), rc.id, mode == Mode::DoubleCount);

        std::vector<std::uint64_t> db_new;
        for (const auto& g : rr.geo) {
          if (!db.known_objects().count(g.object_id)) {
            db_new.push_back(g.object_id);
          }
        }
        auto priors =
            measurement_priors(db, rr, cfg.new_object_sigma_m, db_new);
        for (const auto& [oid, center] : ext.mentioned_objects()) {
          if (db.known_objects().count(oid) || priors.count(oid)) continue;
          db_new.push_back(oid);
          priors.emplace(oid, GaussianDensity::isotropic_prior(
                                  VariableKey::object_pose(oid), center,
                                  cfg.new_object_sigma_m));
        }
        std::sort(db_new.begin(), db_new.end());
        db.expand_for_new_objects(db_new, uniform_prior, priors);

        db.distributed_update(in, ext.resolver());
        db.prune(cfg.prune_ratio);
        out.pruning_mismatches += ext.pruning_mismatches;
        stacks.at(rc.id) = std::move(merged);

        for (const auto& [rid, slot] : stacks.at(rc.id).slots) {
          step_ts[rc.id][rid] = slot.timestamp;
        }
      }

      const HybridBelief& active = distributed ? dist.at(rc.id) : lb;
      step_metrics[rc.id] = compute_metrics(active, cfg, gt, rc.id);
      for (auto oid : active.known_objects()) {
        step_marginals[rc.id][oid] = active.class_marginal(oid);
      }
    }
    out.metrics.push_back(std::move(step_metrics));
    out.stack_timestamps.push_back(std::move(step_ts));
    out.class_marginals.push_back(std::move(step_marginals));
    out.comm_pairs.push_back(rec.comm_pairs);
  }

  for (const auto& rc : cfg.robots) {
    const HybridBelief& active =
        distributed ? dist.at(rc.id) : local.at(rc.id);
    out.final_means[rc.id] = active.weighted_mean_poses();
  }
  out.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return out;
}

std::vector<MetricRow> RunResult::rows() const {
  std::vector<MetricRow> out;
  const std::string mode_str = mode_name(mode);
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const auto step = static_cast<std::uint64_t>(i + 1);
    for (const auto& [rid, m] : metrics[i]) {
      out.push_back({step, rid, mode_str, "msde", m.msde});
      out.push_back(
          {step, rid, mode_str, "robot_position_error_m", m.robot_pos_err});
      out.push_back(
          {step, rid, mode_str, "object_position_error_m", m.obj_pos_err});
      out.push_back({step, rid, mode_str, "mean_sqrt_cov_m", m.sqrt_cov});
    }
  }
  return out;
}

}  // namespace hddf
