#include "hddf/hybrid_belief.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hddf/errors.hpp"
#include "hddf/rng.hpp"

namespace hddf {

ClassRealization ClassRealization::restricted_to(
    const std::set<std::uint64_t>& ids) const {
  ClassRealization out;
  for (const auto& [id, c] : classes) {
    if (ids.count(id)) out.classes[id] = c;
  }
  return out;
}

std::uint64_t ClassRealization::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
  };
  for (const auto& [id, c] : classes) {
    mix(id);
    mix(static_cast<std::uint64_t>(c));
  }
  return h;
}

std::string ClassRealization::str() const {
  std::ostringstream os;
  os << "{";
  bool first = true;
  for (const auto& [id, c] : classes) {
    if (!first) os << ",";
    os << id << ":" << c;
    first = false;
  }
  os << "}";
  return os.str();
}

HybridBelief::HybridBelief(std::uint32_t robot_id, int num_classes,
                           const Pose2& initial, const Mat3& initial_cov)
    : robot_id_(robot_id), m_(num_classes) {
  if (m_ < 2) throw ConfigError("HybridBelief: need at least 2 classes");
  Eigen::LLT<Mat3> llt(initial_cov);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("HybridBelief: initial covariance not SPD");
  }
  Hypothesis h;
  h.belief = GaussianDensity({current_pose_key()},
                             llt.solve(Mat3::Identity()),
                             Eigen::Vector3d::Zero(), {initial});
  h.log_weight = 0.0;
  hypotheses_.push_back(std::move(h));
}

const GaussianDensity& HybridBelief::object_pose_prior(
    std::uint64_t id) const {
  auto it = pose_priors_.find(id);
  if (it == pose_priors_.end()) {
    throw ContractViolation("unknown object " + std::to_string(id));
  }
  return it->second;
}

const Eigen::VectorXd& HybridBelief::class_prior(std::uint64_t id) const {
  auto it = class_priors_.find(id);
  if (it == class_priors_.end()) {
    throw ContractViolation("unknown object " + std::to_string(id));
  }
  return it->second;
}

void HybridBelief::expand_for_new_objects(
    const std::vector<std::uint64_t>& new_ids,
    const Eigen::VectorXd& class_prior,
    const std::map<std::uint64_t, GaussianDensity>& pose_priors) {
  if (new_ids.empty()) return;
  if (class_prior.size() != m_ || std::abs(class_prior.sum() - 1.0) > 1e-9) {
    throw ContractViolation("expand: class prior must be a length-M simplex");
  }
  for (auto id : new_ids) {
    if (objects_.count(id)) {
      throw ContractViolation("expand: object " + std::to_string(id) +
                              " already known");
    }
    if (!pose_priors.count(id)) {
      throw ContractViolation("expand: missing pose prior for object " +
                              std::to_string(id));
    }
  }
  for (auto id : new_ids) {
    const GaussianDensity& prior = pose_priors.at(id);
    std::vector<Hypothesis> next;
    next.reserve(hypotheses_.size() * static_cast<std::size_t>(m_));
    for (const auto& h : hypotheses_) {
      const GaussianDensity expanded = multiply(h.belief, prior);
      for (int c = 1; c <= m_; ++c) {
        Hypothesis nh;
        nh.realization = h.realization;
        nh.realization.classes[id] = c;
        nh.belief = expanded;
        nh.log_weight = h.log_weight + std::log(class_prior(c - 1));
        next.push_back(std::move(nh));
      }
    }
    hypotheses_ = std::move(next);
    objects_.insert(id);
    pose_priors_.emplace(id, prior);
    class_priors_.emplace(id, class_prior);
  }
}

namespace {

double log_sum_exp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// log integral of the product of the normalized Gaussian (lambda, eta) with
// the linearized geometric likelihoods, plus the conditioned quadratic.
struct ConditionedQuadratic {
  Eigen::MatrixXd lambda;
  Eigen::VectorXd eta;
  double log_mass = 0.0;  // log of the integral (geometric evidence)
};

ConditionedQuadratic condition_on_geometric(
    const GaussianDensity& propagated, const VariableKey& pose_key,
    const std::vector<GeometricMeasurement>& geo) {
  const int d = propagated.dim();
  Eigen::MatrixXd a = propagated.lambda();
  Eigen::VectorXd b = propagated.eta();

  Eigen::LLT<Eigen::MatrixXd> llt0(propagated.lambda());
  if (llt0.info() != Eigen::Success) {
    throw ContractViolation("weight update: propagated belief not PD");
  }
  const Eigen::VectorXd mu0 = llt0.solve(propagated.eta());
  double log_det0 = 0.0;
  for (int i = 0; i < d; ++i) {
    log_det0 += 2.0 * std::log(llt0.matrixL()(i, i));
  }
  // Constant of the normalized propagated density.
  double c = -0.5 * mu0.dot(propagated.eta()) + 0.5 * log_det0 -
             0.5 * d * std::log(2.0 * M_PI);

  const int ir = propagated.index_of(pose_key);
  if (ir < 0) throw ContractViolation("weight update: missing robot pose");
  const Pose2& pr = propagated.lin_points()[static_cast<std::size_t>(ir)];

  for (const auto& g : geo) {
    const int io = propagated.index_of(VariableKey::object_pose(g.object_id));
    if (io < 0) {
      throw ContractViolation("weight update: measurement for unknown object " +
                              std::to_string(g.object_id));
    }
    const Pose2& po = propagated.lin_points()[static_cast<std::size_t>(io)];
    const Pose2 pred = between(pr, po);
    const Vec3 e0 = local_diff(pred, g.measured);
    const double cth = std::cos(pr.theta);
    const double sth = std::sin(pr.theta);
    const double dx = po.x - pr.x;
    const double dy = po.y - pr.y;
    Mat3 jr, jo;
    jr << -cth, -sth, -sth * dx + cth * dy, sth, -cth, -cth * dx - sth * dy, 0,
        0, -1;
    jo << cth, sth, 0, -sth, cth, 0, 0, 0, 1;
    Eigen::LLT<Mat3> lltw(g.cov);
    if (lltw.info() != Eigen::Success) {
      throw ConfigError("geometric covariance not SPD");
    }
    const Mat3 w = lltw.solve(Mat3::Identity());
    a.block<3, 3>(3 * ir, 3 * ir) += jr.transpose() * w * jr;
    a.block<3, 3>(3 * io, 3 * io) += jo.transpose() * w * jo;
    a.block<3, 3>(3 * ir, 3 * io) += jr.transpose() * w * jo;
    a.block<3, 3>(3 * io, 3 * ir) += jo.transpose() * w * jr;
    b.segment<3>(3 * ir) -= jr.transpose() * (w * e0);
    b.segment<3>(3 * io) -= jo.transpose() * (w * e0);
    double log_det_w = 0.0;
    for (int i = 0; i < 3; ++i) {
      log_det_w -= 2.0 * std::log(lltw.matrixL()(i, i));
    }
    c += -0.5 * e0.dot(w * e0) + 0.5 * log_det_w -
         1.5 * std::log(2.0 * M_PI);
  }

  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    throw ContractViolation("weight update: conditioned system not PD");
  }
  const Eigen::VectorXd mu = llt.solve(b);
  double log_det = 0.0;
  for (int i = 0; i < d; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
  const double log_mass =
      c + 0.5 * b.dot(mu) + 0.5 * d * std::log(2.0 * M_PI) - 0.5 * log_det;
  return {std::move(a), std::move(b), log_mass};
}

}  // namespace

void HybridBelief::update_step(const StepInputs& in,
                               const ExternalResolver* external) {
  for (const auto& g : in.geo) {
    if (!objects_.count(g.object_id)) {
      throw ContractViolation("measurement for unknown object " +
                              std::to_string(g.object_id) +
                              "; expand_for_new_objects first");
    }
  }
  for (const auto& s : in.sem) {
    if (!objects_.count(s.object_id)) {
      throw ContractViolation("measurement for unknown object " +
                              std::to_string(s.object_id) +
                              "; expand_for_new_objects first");
    }
  }
  if (in.sem.empty() == false && !in.model) {
    throw ContractViolation("semantic measurements require a model");
  }

  const VariableKey prev_key = current_pose_key();
  const std::uint64_t k_new = step_ + 1;
  const VariableKey new_key = VariableKey::robot_pose(robot_id_, k_new);

  for (auto& h : hypotheses_) {
    FactorGraph graph;
    for (std::size_t i = 0; i < h.belief.vars().size(); ++i) {
      graph.set_initial(h.belief.vars()[i], h.belief.lin_points()[i]);
    }
    ExternalTerm ext;
    if (external) {
      ext = (*external)(h.realization);
      for (const auto& v : ext.continuous.vars()) {
        if (!graph.has_variable(v)) {
          graph.set_initial(v, ext.continuous.lin_point(v));
        }
      }
    }
    graph.set_initial(new_key,
                      compose(graph.value(prev_key), in.odometry));
    graph.add_factor(ExternalMarginalFactor{h.belief});
    if (!ext.continuous.empty()) {
      graph.add_factor(ExternalMarginalFactor{ext.continuous});
    }
    graph.add_factor(
        OdometryFactor{prev_key, new_key, in.odometry, in.odometry_cov});

    const GaussianDensity propagated = graph.optimize();

    // Weight factor: geometric evidence handled analytically, the
    // viewpoint-dependent semantic part by sampling the involved variables
    // from the geometric-conditioned propagated belief.
    double log_wf = 0.0;
    if (!in.geo.empty() || !in.sem.empty()) {
      const ConditionedQuadratic cq =
          condition_on_geometric(propagated, new_key, in.geo);
      log_wf = cq.log_mass;
      if (!in.sem.empty()) {
        GaussianDensity conditioned(propagated.vars(), cq.lambda, cq.eta,
                                    propagated.lin_points());
        std::set<VariableKey> involved_set;
        involved_set.insert(new_key);
        for (const auto& g : in.geo) {
          involved_set.insert(VariableKey::object_pose(g.object_id));
        }
        for (const auto& s : in.sem) {
          involved_set.insert(VariableKey::object_pose(s.object_id));
        }
        std::vector<VariableKey> involved(involved_set.begin(),
                                          involved_set.end());
        const GaussianDensity inv_marginal =
            marginalize(conditioned, involved);
        auto rng = make_rng(mix_seed(in.seed, robot_id_, k_new,
                                     h.realization.hash()));
        const auto samples = inv_marginal.sample(in.n_samples, rng);
        std::vector<double> log_vals;
        log_vals.reserve(samples.size());
        for (const auto& assign : samples) {
          double lv = 0.0;
          const Pose2& pr = assign[static_cast<std::size_t>(
              inv_marginal.index_of(new_key))];
          for (const auto& s : in.sem) {
            const int io =
                inv_marginal.index_of(VariableKey::object_pose(s.object_id));
            const ClassLabel c = h.realization.classes.at(s.object_id);
            lv += semantic_log_likelihood(
                *in.model, s.probs, c, pr,
                assign[static_cast<std::size_t>(io)]);
          }
          log_vals.push_back(lv);
        }
        log_wf += log_sum_exp(log_vals) -
                  std::log(static_cast<double>(samples.size()));
      }
    }

    for (const auto& g : in.geo) {
      graph.add_factor(GeometricFactor{new_key,
                                       VariableKey::object_pose(g.object_id),
                                       g.measured, g.cov});
    }
    for (const auto& s : in.sem) {
      graph.add_factor(SemanticFactor{
          new_key, VariableKey::object_pose(s.object_id), s.probs,
          h.realization.classes.at(s.object_id), in.model});
    }
    h.belief = (in.geo.empty() && in.sem.empty()) ? propagated
                                                  : graph.optimize();
    h.log_weight += ext.log_discrete + log_wf;
  }
  step_ = k_new;
  normalize();
}

void HybridBelief::local_update(const StepInputs& in) {
  update_step(in, nullptr);
}

void HybridBelief::distributed_update(const StepInputs& in,
                                      const ExternalResolver& external) {
  update_step(in, &external);
}

void HybridBelief::normalize() {
  std::vector<double> lw;
  lw.reserve(hypotheses_.size());
  for (const auto& h : hypotheses_) lw.push_back(h.log_weight);
  const double lse = log_sum_exp(lw);
  for (auto& h : hypotheses_) h.log_weight -= lse;
}

void HybridBelief::prune(double ratio_threshold) {
  if (ratio_threshold < 0.0 || ratio_threshold >= 1.0) {
    throw ContractViolation("prune: ratio threshold must be in [0, 1)");
  }
  if (ratio_threshold == 0.0 || hypotheses_.size() <= 1) return;
  double max_lw = hypotheses_.front().log_weight;
  for (const auto& h : hypotheses_) max_lw = std::max(max_lw, h.log_weight);
  const double cutoff = max_lw + std::log(ratio_threshold);
  std::vector<Hypothesis> kept;
  for (auto& h : hypotheses_) {
    if (h.log_weight >= cutoff) kept.push_back(std::move(h));
  }
  hypotheses_ = std::move(kept);
  normalize();
}

Eigen::VectorXd HybridBelief::class_marginal(std::uint64_t object_id) const {
  if (!objects_.count(object_id)) {
    throw ContractViolation("class_marginal: unknown object " +
                            std::to_string(object_id));
  }
  Eigen::VectorXd marginal = Eigen::VectorXd::Zero(m_);
  for (const auto& h : hypotheses_) {
    marginal(h.realization.classes.at(object_id) - 1) +=
        std::exp(h.log_weight);
  }
  return marginal;
}

std::map<VariableKey, Pose2> HybridBelief::weighted_mean_poses() const {
  if (hypotheses_.empty()) {
    throw ContractViolation("weighted_mean_poses: no hypotheses");
  }
  struct Acc {
    double x = 0, y = 0, cs = 0, sn = 0;
  };
  std::map<VariableKey, Acc> acc;
  for (const auto& h : hypotheses_) {
    const double w = std::exp(h.log_weight);
    const auto means = h.belief.mean_all();
    for (std::size_t i = 0; i < h.belief.vars().size(); ++i) {
      Acc& a = acc[h.belief.vars()[i]];
      a.x += w * means[i].x;
      a.y += w * means[i].y;
      a.cs += w * std::cos(means[i].theta);
      a.sn += w * std::sin(means[i].theta);
    }
  }
  std::map<VariableKey, Pose2> out;
  for (const auto& [v, a] : acc) {
    out.emplace(v, Pose2(a.x, a.y, std::atan2(a.sn, a.cs)));
  }
  return out;
}

double HybridBelief::weighted_position_sqrt_cov(const VariableKey& v) const {
  double out = 0.0;
  for (const auto& h : hypotheses_) {
    const GaussianDensity marg = marginalize(h.belief, {v});
    const Eigen::MatrixXd cov = marg.covariance();
    out += std::exp(h.log_weight) *
           std::sqrt(0.5 * (cov(0, 0) + cov(1, 1)));
  }
  return out;
}

}  // namespace hddf
