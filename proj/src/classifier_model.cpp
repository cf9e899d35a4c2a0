#include "hddf/classifier_model.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "hddf/errors.hpp"

namespace hddf {

void ViewpointModel::check_class(ClassLabel c) const {
  if (c < 1 || c > num_classes()) {
    throw ContractViolation("unknown class label " + std::to_string(c));
  }
}

Eigen::VectorXd ViewpointModel::mean_dpsi(ClassLabel c, double psi,
                                          double theta) const {
  const double h = 1e-6;
  return (mean(c, psi + h, theta) - mean(c, psi - h, theta)) / (2.0 * h);
}

Eigen::Matrix2d default_semantic_covariance() {
  Eigen::Matrix2d R;
  R << 1.5, -0.75, 0.0, 1.5;
  return (R.transpose() * R).inverse();
}

AliasingSimulationModel::AliasingSimulationModel()
    : cov_(default_semantic_covariance()) {}

AliasingSimulationModel::AliasingSimulationModel(
    const Eigen::Matrix2d& sqrt_info)
    : cov_((sqrt_info.transpose() * sqrt_info).inverse()) {}

Eigen::VectorXd AliasingSimulationModel::mean(ClassLabel c, double psi,
                                              double /*theta*/) const {
  check_class(c);
  const double p = 0.25 * std::sin(psi) + 0.75;
  Eigen::VectorXd m(2);
  if (c == 1) {
    m << p, 1.0 - p;
  } else {
    m << 1.0 - p, p;
  }
  return m;
}

Eigen::MatrixXd AliasingSimulationModel::covariance(ClassLabel c, double,
                                                    double) const {
  check_class(c);
  return cov_;
}

Eigen::VectorXd AliasingSimulationModel::mean_dpsi(ClassLabel c, double psi,
                                                   double /*theta*/) const {
  check_class(c);
  const double d = 0.25 * std::cos(psi);
  Eigen::VectorXd g(2);
  if (c == 1) {
    g << d, -d;
  } else {
    g << -d, d;
  }
  return g;
}

ConstantModel::ConstantModel(std::vector<Eigen::VectorXd> means,
                             Eigen::MatrixXd cov)
    : means_(std::move(means)), cov_(std::move(cov)) {
  if (means_.size() < 2) {
    throw ConfigError("ConstantModel: need at least 2 classes");
  }
  const int m = static_cast<int>(means_.size());
  for (const auto& mu : means_) {
    if (mu.size() != m || std::abs(mu.sum() - 1.0) > 1e-9 ||
        mu.minCoeff() < 0.0) {
      throw ConfigError("ConstantModel: mean is not a probability vector");
    }
  }
  if (cov_.rows() != m || cov_.cols() != m) {
    throw ConfigError("ConstantModel: covariance size mismatch");
  }
}

Eigen::VectorXd ConstantModel::mean(ClassLabel c, double, double) const {
  check_class(c);
  return means_[static_cast<std::size_t>(c - 1)];
}

Eigen::MatrixXd ConstantModel::covariance(ClassLabel c, double, double) const {
  check_class(c);
  return cov_;
}

Eigen::VectorXd ConstantModel::mean_dpsi(ClassLabel c, double, double) const {
  check_class(c);
  return Eigen::VectorXd::Zero(num_classes());
}

LookupModel::LookupModel(std::vector<double> psi_deg,
                         std::vector<double> theta_deg,
                         std::vector<std::vector<Eigen::VectorXd>> values,
                         Eigen::MatrixXd cov)
    : psi_deg_(std::move(psi_deg)),
      theta_deg_(std::move(theta_deg)),
      values_(std::move(values)),
      cov_(std::move(cov)) {}

namespace {

// Index of the grid cell containing v, clamped to the grid range.
std::pair<int, double> locate(const std::vector<double>& grid, double v) {
  if (grid.size() == 1) return {0, 0.0};
  if (v <= grid.front()) return {0, 0.0};
  if (v >= grid.back()) return {static_cast<int>(grid.size()) - 2, 1.0};
  int i = 0;
  while (v > grid[static_cast<std::size_t>(i) + 1]) ++i;
  const double t = (v - grid[static_cast<std::size_t>(i)]) /
                   (grid[static_cast<std::size_t>(i) + 1] -
                    grid[static_cast<std::size_t>(i)]);
  return {i, t};
}

}  // namespace

Eigen::VectorXd LookupModel::raw_mean(ClassLabel c, double psi,
                                      double theta) const {
  check_class(c);
  const double psi_deg = wrap_angle(psi) * 180.0 / M_PI;
  const double theta_deg = theta * 180.0 / M_PI;
  const auto [ip, tp] = locate(psi_deg_, psi_deg);
  const auto [it, tt] = locate(theta_deg_, theta_deg);
  const int nt = static_cast<int>(theta_deg_.size());
  const auto& vals = values_[static_cast<std::size_t>(c - 1)];
  auto node = [&](int i, int j) -> const Eigen::VectorXd& {
    return vals[static_cast<std::size_t>(i * nt + j)];
  };
  const int ip1 = std::min(ip + 1, static_cast<int>(psi_deg_.size()) - 1);
  const int it1 = std::min(it + 1, nt - 1);
  return (1 - tp) * (1 - tt) * node(ip, it) + tp * (1 - tt) * node(ip1, it) +
         (1 - tp) * tt * node(ip, it1) + tp * tt * node(ip1, it1);
}

Eigen::VectorXd LookupModel::mean(ClassLabel c, double psi,
                                  double theta) const {
  Eigen::VectorXd m = raw_mean(c, psi, theta).cwiseMax(0.0);
  const double s = m.sum();
  if (s <= 0.0) {
    return Eigen::VectorXd::Constant(m.size(), 1.0 / m.size());
  }
  return m / s;
}

Eigen::MatrixXd LookupModel::covariance(ClassLabel c, double, double) const {
  check_class(c);
  return cov_;
}

std::unique_ptr<LookupModel> load_lookup_model(const std::string& path,
                                               const Eigen::MatrixXd& cov) {
  std::ifstream in(path);
  if (!in) throw ConfigError("lookup model: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw ConfigError("lookup model: empty file " + path);
  }

  struct Node {
    int cls;
    double psi, theta;
    Eigen::VectorXd p;
  };
  std::vector<Node> nodes;
  int m = -1;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> fields;
    while (std::getline(ss, tok, ',')) fields.push_back(std::stod(tok));
    if (fields.size() < 5) {
      throw ConfigError("lookup model: malformed row at line " +
                        std::to_string(line_no));
    }
    const int mc = static_cast<int>(fields.size()) - 3;
    if (m < 0) m = mc;
    if (mc != m) {
      throw ConfigError("lookup model: inconsistent class count at line " +
                        std::to_string(line_no));
    }
    Node n;
    n.cls = static_cast<int>(fields[0]);
    n.psi = fields[1];
    n.theta = fields[2];
    n.p = Eigen::Map<Eigen::VectorXd>(fields.data() + 3, m);
    if (std::abs(n.p.sum() - 1.0) > 1e-3 || n.p.minCoeff() < -1e-3) {
      throw ConfigError("lookup model: non-simplex row at line " +
                        std::to_string(line_no));
    }
    nodes.push_back(std::move(n));
  }
  if (nodes.empty()) throw ConfigError("lookup model: no data rows in " + path);

  std::vector<double> psis, thetas;
  for (const auto& n : nodes) {
    psis.push_back(n.psi);
    thetas.push_back(n.theta);
  }
  auto dedupe = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end(),
                        [](double a, double b) { return std::abs(a - b) < 1e-9; }),
            v.end());
  };
  dedupe(psis);
  dedupe(thetas);
  if (psis.front() > -180.0 + 1e-6 || psis.back() < 180.0 - 1e-6) {
    throw ConfigError("lookup model: psi grid must cover [-180, 180] degrees");
  }

  const int np = static_cast<int>(psis.size());
  const int nt = static_cast<int>(thetas.size());
  std::vector<std::vector<Eigen::VectorXd>> values(
      static_cast<std::size_t>(m),
      std::vector<Eigen::VectorXd>(static_cast<std::size_t>(np * nt)));
  std::vector<std::vector<bool>> filled(
      static_cast<std::size_t>(m),
      std::vector<bool>(static_cast<std::size_t>(np * nt), false));
  auto grid_index = [](const std::vector<double>& g, double v) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (std::abs(g[i] - v) < 1e-9) return static_cast<int>(i);
    }
    return -1;
  };
  for (const auto& n : nodes) {
    if (n.cls < 1 || n.cls > m) {
      throw ConfigError("lookup model: class out of range");
    }
    const int ip = grid_index(psis, n.psi);
    const int it = grid_index(thetas, n.theta);
    values[static_cast<std::size_t>(n.cls - 1)]
          [static_cast<std::size_t>(ip * nt + it)] = n.p;
    filled[static_cast<std::size_t>(n.cls - 1)]
          [static_cast<std::size_t>(ip * nt + it)] = true;
  }
  for (int c = 0; c < m; ++c) {
    for (int i = 0; i < np * nt; ++i) {
      if (!filled[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)]) {
        throw ConfigError("lookup model: incomplete grid for class " +
                          std::to_string(c + 1));
      }
    }
  }
  Eigen::MatrixXd use_cov = cov;
  if (use_cov.size() == 0) {
    if (m == 2) {
      use_cov = default_semantic_covariance();
    } else {
      use_cov = Eigen::MatrixXd::Identity(m, m) * 0.05;
    }
  }
  if (use_cov.rows() != m || use_cov.cols() != m) {
    throw ConfigError("lookup model: covariance size mismatch");
  }
  return std::make_unique<LookupModel>(std::move(psis), std::move(thetas),
                                       std::move(values), std::move(use_cov));
}

std::unique_ptr<LookupModel> load_lookup_model(const std::string& path) {
  return load_lookup_model(path, Eigen::MatrixXd());
}

SemanticPrediction predict(const ViewpointModel& model, ClassLabel c,
                           const Pose2& rel) {
  if (!std::isfinite(rel.x) || !std::isfinite(rel.y) ||
      !std::isfinite(rel.theta)) {
    throw ContractViolation("predict: non-finite relative pose");
  }
  const double psi = rel.theta;
  return {model.mean(c, psi, 0.0), model.covariance(c, psi, 0.0)};
}

double semantic_log_likelihood(const ViewpointModel& model,
                               const Eigen::VectorXd& z, ClassLabel c,
                               const Pose2& robot, const Pose2& object) {
  const Pose2 rel = between(robot, object);
  const auto pred = predict(model, c, rel);
  if (z.size() != pred.mean.size()) {
    throw ContractViolation("semantic_log_likelihood: dimension mismatch");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(pred.cov);
  if (llt.info() != Eigen::Success) {
    throw ContractViolation("semantic_log_likelihood: covariance not SPD");
  }
  const Eigen::VectorXd r = z - pred.mean;
  double log_det = 0.0;
  const auto& L = llt.matrixL();
  for (int i = 0; i < z.size(); ++i) log_det += 2.0 * std::log(L(i, i));
  const Eigen::VectorXd w = llt.solve(r);
  return -0.5 * z.size() * std::log(2.0 * M_PI) - 0.5 * log_det -
         0.5 * r.dot(w);
}

SemanticMeasurement sample_semantic(const ViewpointModel& model, ClassLabel c,
                                    const Pose2& rel, std::uint64_t object_id,
                                    std::mt19937_64& rng) {
  const auto pred = predict(model, c, rel);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pred.cov);
  const Eigen::VectorXd scale = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  std::normal_distribution<double> n01;
  Eigen::VectorXd z(pred.mean.size());
  for (int i = 0; i < z.size(); ++i) z(i) = n01(rng);
  Eigen::VectorXd v =
      pred.mean + es.eigenvectors() * scale.asDiagonal() * z;
  v = v.cwiseMax(0.0).cwiseMin(1.0);
  const double s = v.sum();
  if (s <= 0.0) {
    v = Eigen::VectorXd::Constant(v.size(), 1.0 / v.size());
  } else {
    v /= s;
  }
  return {object_id, v};
}

}  // namespace hddf
