#include "hddf/factor_graph.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <set>
#include <sstream>

#include "hddf/errors.hpp"

namespace hddf {

void FactorGraph::set_initial(const VariableKey& v, const Pose2& guess) {
  auto it = index_.find(v);
  if (it != index_.end()) {
    values_[static_cast<std::size_t>(it->second)] = guess;
    return;
  }
  index_[v] = static_cast<int>(order_.size());
  order_.push_back(v);
  values_.push_back(guess);
}

bool FactorGraph::has_variable(const VariableKey& v) const {
  return index_.count(v) > 0;
}

const Pose2& FactorGraph::value(const VariableKey& v) const {
  return values_[static_cast<std::size_t>(require(v))];
}

int FactorGraph::require(const VariableKey& v) const {
  auto it = index_.find(v);
  if (it == index_.end()) {
    throw ContractViolation("factor references unknown variable " + v.str() +
                            " (no initial guess supplied)");
  }
  return it->second;
}

void FactorGraph::add_factor(Factor f) {
  std::visit(
      [&](const auto& ff) {
        using T = std::decay_t<decltype(ff)>;
        if constexpr (std::is_same_v<T, PriorFactor>) {
          require(ff.var);
        } else if constexpr (std::is_same_v<T, OdometryFactor>) {
          require(ff.from);
          require(ff.to);
        } else if constexpr (std::is_same_v<T, GeometricFactor>) {
          require(ff.robot);
          require(ff.object);
        } else if constexpr (std::is_same_v<T, SemanticFactor>) {
          require(ff.robot);
          require(ff.object);
          if (!ff.model) {
            throw ContractViolation("semantic factor without a model");
          }
          if (ff.cls < 1 || ff.cls > ff.model->num_classes()) {
            throw ContractViolation(
                "semantic factor class is not fixed to a valid label");
          }
        } else if constexpr (std::is_same_v<T, ExternalMarginalFactor>) {
          for (const auto& v : ff.density.vars()) require(v);
        }
      },
      f);
  factors_.push_back(std::move(f));
}

namespace {

// Jacobians of between(a, b) w.r.t. the additive (x, y, theta) coordinates.
void between_jacobians(const Pose2& a, const Pose2& b, Mat3& ja, Mat3& jb) {
  const double c = std::cos(a.theta);
  const double s = std::sin(a.theta);
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  ja << -c, -s, -s * dx + c * dy, s, -c, -c * dx - s * dy, 0, 0, -1;
  jb << c, s, 0, -s, c, 0, 0, 0, 1;
}

Mat3 info_of(const Mat3& cov) {
  Eigen::LLT<Mat3> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("factor noise covariance is not SPD");
  }
  return llt.solve(Mat3::Identity());
}

}  // namespace

GaussianDensity FactorGraph::linearize() const {
  const int n = static_cast<int>(order_.size());
  const int d = 3 * n;
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(d);

  auto add_pair = [&](int ia, int ib, const Mat3& ja, const Mat3& jb,
                      const Mat3& w, const Vec3& e) {
    lambda.block<3, 3>(3 * ia, 3 * ia) += ja.transpose() * w * ja;
    lambda.block<3, 3>(3 * ib, 3 * ib) += jb.transpose() * w * jb;
    lambda.block<3, 3>(3 * ia, 3 * ib) += ja.transpose() * w * jb;
    lambda.block<3, 3>(3 * ib, 3 * ia) += jb.transpose() * w * ja;
    eta.segment<3>(3 * ia) -= ja.transpose() * (w * e);
    eta.segment<3>(3 * ib) -= jb.transpose() * (w * e);
  };

  for (const auto& f : factors_) {
    std::visit(
        [&](const auto& ff) {
          using T = std::decay_t<decltype(ff)>;
          if constexpr (std::is_same_v<T, PriorFactor>) {
            const int i = require(ff.var);
            const Mat3 w = info_of(ff.cov);
            const Vec3 e =
                local_diff(values_[static_cast<std::size_t>(i)], ff.mean);
            lambda.block<3, 3>(3 * i, 3 * i) += w;
            eta.segment<3>(3 * i) -= w * e;
          } else if constexpr (std::is_same_v<T, OdometryFactor> ||
                               std::is_same_v<T, GeometricFactor>) {
            VariableKey ka, kb;
            if constexpr (std::is_same_v<T, OdometryFactor>) {
              ka = ff.from;
              kb = ff.to;
            } else {
              ka = ff.robot;
              kb = ff.object;
            }
            const int ia = require(ka);
            const int ib = require(kb);
            const Pose2& pa = values_[static_cast<std::size_t>(ia)];
            const Pose2& pb = values_[static_cast<std::size_t>(ib)];
            const Pose2 pred = between(pa, pb);
            const Vec3 e = local_diff(pred, ff.measured);
            Mat3 ja, jb;
            between_jacobians(pa, pb, ja, jb);
            add_pair(ia, ib, ja, jb, info_of(ff.cov), e);
          } else if constexpr (std::is_same_v<T, SemanticFactor>) {
            const int ir = require(ff.robot);
            const int io = require(ff.object);
            const Pose2& pr = values_[static_cast<std::size_t>(ir)];
            const Pose2& po = values_[static_cast<std::size_t>(io)];
            const double psi = wrap_angle(po.theta - pr.theta);
            const Eigen::VectorXd h = ff.model->mean(ff.cls, psi, 0.0);
            const Eigen::VectorXd dh = ff.model->mean_dpsi(ff.cls, psi, 0.0);
            const Eigen::MatrixXd cov = ff.model->covariance(ff.cls, psi, 0.0);
            Eigen::LLT<Eigen::MatrixXd> llt(cov);
            if (llt.info() != Eigen::Success) {
              throw ConfigError("semantic covariance is not SPD");
            }
            const Eigen::VectorXd e = h - ff.z;
            // psi depends only on the two yaw components.
            const Eigen::VectorXd we = llt.solve(e);
            const Eigen::VectorXd wdh = llt.solve(dh);
            const double q = dh.dot(wdh);
            // J_r has -dh in the theta column, J_o has +dh.
            lambda(3 * ir + 2, 3 * ir + 2) += q;
            lambda(3 * io + 2, 3 * io + 2) += q;
            lambda(3 * ir + 2, 3 * io + 2) -= q;
            lambda(3 * io + 2, 3 * ir + 2) -= q;
            const double g = dh.dot(we);
            eta(3 * ir + 2) += g;
            eta(3 * io + 2) -= g;
          } else if constexpr (std::is_same_v<T, ExternalMarginalFactor>) {
            const GaussianDensity& den = ff.density;
            const int nv = den.num_vars();
            Eigen::VectorXd delta0(3 * nv);
            std::vector<int> pos(static_cast<std::size_t>(nv));
            for (int i = 0; i < nv; ++i) {
              const int gi = require(den.vars()[static_cast<std::size_t>(i)]);
              pos[static_cast<std::size_t>(i)] = gi;
              delta0.segment<3>(3 * i) =
                  local_diff(values_[static_cast<std::size_t>(gi)],
                             den.lin_points()[static_cast<std::size_t>(i)]);
            }
            const Eigen::VectorXd rhs = den.eta() - den.lambda() * delta0;
            for (int i = 0; i < nv; ++i) {
              eta.segment<3>(3 * pos[static_cast<std::size_t>(i)]) +=
                  rhs.segment<3>(3 * i);
              for (int j = 0; j < nv; ++j) {
                lambda.block<3, 3>(3 * pos[static_cast<std::size_t>(i)],
                                   3 * pos[static_cast<std::size_t>(j)]) +=
                    den.lambda().block<3, 3>(3 * i, 3 * j);
              }
            }
          }
        },
        f);
  }
  return GaussianDensity(order_, std::move(lambda), std::move(eta), values_);
}

GaussianDensity FactorGraph::optimize(const OptimizeOptions& opts) {
  if (order_.empty()) {
    throw ContractViolation("optimize: empty graph");
  }
  GaussianDensity lin;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    lin = linearize();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(lin.lambda());
    const double max_diag = lin.lambda().diagonal().cwiseAbs().maxCoeff();
    bool singular = ldlt.info() != Eigen::Success;
    if (!singular) {
      const auto dvec = ldlt.vectorD();
      singular = dvec.minCoeff() <= 1e-14 * std::max(max_diag, 1.0);
    }
    if (singular) {
      // Name the variables spanning the (near-)nullspace.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lin.lambda());
      std::set<std::string> names;
      for (int i = 0; i < lin.dim(); ++i) {
        if (es.eigenvalues()(i) <= 1e-9 * std::max(max_diag, 1.0)) {
          const Eigen::VectorXd v = es.eigenvectors().col(i);
          int best = 0;
          double best_norm = -1.0;
          for (int j = 0; j < lin.num_vars(); ++j) {
            const double nj = v.segment<3>(3 * j).norm();
            if (nj > best_norm) {
              best_norm = nj;
              best = j;
            }
          }
          names.insert(order_[static_cast<std::size_t>(best)].str());
        }
      }
      std::ostringstream os;
      os << "singular normal equations; unconstrained variables:";
      for (const auto& n : names) os << " " << n;
      throw UnderconstrainedGraph(os.str());
    }
    const Eigen::VectorXd delta = ldlt.solve(lin.eta());
    for (std::size_t i = 0; i < order_.size(); ++i) {
      values_[i] = retract(values_[i], delta.segment<3>(3 * static_cast<int>(i)));
    }
    if (delta.norm() < opts.tol) {
      return linearize();
    }
  }
  return linearize();
}

}  // namespace hddf
