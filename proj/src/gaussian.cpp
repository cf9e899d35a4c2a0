#include "hddf/gaussian.hpp"

#include <sstream>

#include "hddf/errors.hpp"

namespace hddf {

std::string VariableKey::str() const {
  std::ostringstream os;
  if (kind == Kind::RobotPose) {
    os << "x[r" << owner << ",k" << index << "]";
  } else {
    os << "o[" << index << "]";
  }
  return os.str();
}

GaussianDensity::GaussianDensity(std::vector<VariableKey> vars,
                                 Eigen::MatrixXd lambda, Eigen::VectorXd eta,
                                 std::vector<Pose2> lin)
    : vars_(std::move(vars)),
      lambda_(std::move(lambda)),
      eta_(std::move(eta)),
      lin_(std::move(lin)) {
  const int d = dim();
  if (lambda_.rows() != d || lambda_.cols() != d || eta_.size() != d ||
      lin_.size() != vars_.size()) {
    throw ContractViolation("GaussianDensity: inconsistent dimensions");
  }
  if ((lambda_ - lambda_.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw ContractViolation("GaussianDensity: lambda not symmetric");
  }
  // Keep it exactly symmetric against drift in long chains of updates.
  lambda_ = ((lambda_ + lambda_.transpose()) * 0.5).eval();
}

GaussianDensity GaussianDensity::isotropic_prior(const VariableKey& var,
                                                 const Pose2& center,
                                                 double sigma) {
  const double w = 1.0 / (sigma * sigma);
  return GaussianDensity({var}, Eigen::Matrix3d::Identity() * w,
                         Eigen::Vector3d::Zero(), {center});
}

bool GaussianDensity::has(const VariableKey& v) const {
  return index_of(v) >= 0;
}

int GaussianDensity::index_of(const VariableKey& v) const {
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    if (vars_[i] == v) return static_cast<int>(i);
  }
  return -1;
}

const Pose2& GaussianDensity::lin_point(const VariableKey& v) const {
  const int i = index_of(v);
  if (i < 0) throw ContractViolation("lin_point: unknown variable " + v.str());
  return lin_[static_cast<std::size_t>(i)];
}

void GaussianDensity::relinearize_to(const VariableKey& v,
                                     const Pose2& target) {
  const int i = index_of(v);
  if (i < 0) {
    throw ContractViolation("relinearize_to: unknown variable " + v.str());
  }
  const Vec3 d = local_diff(target, lin_[static_cast<std::size_t>(i)]);
  if (d.cwiseAbs().maxCoeff() == 0.0) return;
  // New displacement d_new satisfies d_old = d_new + d to first order.
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(dim());
  shift.segment<3>(3 * i) = d;
  eta_ -= lambda_ * shift;
  lin_[static_cast<std::size_t>(i)] = target;
}

bool GaussianDensity::is_positive_definite() const {
  if (empty()) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(lambda_);
  return llt.info() == Eigen::Success;
}

std::vector<Pose2> GaussianDensity::mean_all() const {
  Eigen::LLT<Eigen::MatrixXd> llt(lambda_);
  if (llt.info() != Eigen::Success) {
    throw ContractViolation("mean_all: density is not positive definite");
  }
  const Eigen::VectorXd mu = llt.solve(eta_);
  std::vector<Pose2> out;
  out.reserve(vars_.size());
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    out.push_back(retract(lin_[i], mu.segment<3>(3 * static_cast<int>(i))));
  }
  return out;
}

Pose2 GaussianDensity::mean_pose(const VariableKey& v) const {
  const int i = index_of(v);
  if (i < 0) throw ContractViolation("mean_pose: unknown variable " + v.str());
  return mean_all()[static_cast<std::size_t>(i)];
}

Eigen::MatrixXd GaussianDensity::covariance() const {
  Eigen::LLT<Eigen::MatrixXd> llt(lambda_);
  if (llt.info() != Eigen::Success) {
    throw ContractViolation("covariance: density is not positive definite");
  }
  return llt.solve(Eigen::MatrixXd::Identity(dim(), dim()));
}

double GaussianDensity::evaluate_log_density(
    const std::map<VariableKey, Pose2>& point) const {
  Eigen::VectorXd delta(dim());
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    auto it = point.find(vars_[i]);
    if (it == point.end()) {
      throw ContractViolation("evaluate_log_density: missing variable " +
                              vars_[i].str());
    }
    delta.segment<3>(3 * static_cast<int>(i)) =
        local_diff(it->second, lin_[i]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(lambda_);
  if (llt.info() != Eigen::Success) {
    throw ContractViolation(
        "evaluate_log_density: density is not positive definite");
  }
  const Eigen::VectorXd mu = llt.solve(eta_);
  double log_det = 0.0;
  const auto& L = llt.matrixL();
  for (int i = 0; i < dim(); ++i) log_det += 2.0 * std::log(L(i, i));
  const Eigen::VectorXd r = delta - mu;
  return 0.5 * log_det - 0.5 * dim() * std::log(2.0 * M_PI) -
         0.5 * r.dot(lambda_ * r);
}

std::vector<std::vector<Pose2>> GaussianDensity::sample(
    int n, std::mt19937_64& rng) const {
  Eigen::LLT<Eigen::MatrixXd> llt(lambda_);
  if (llt.info() != Eigen::Success) {
    throw ContractViolation("sample: density is indefinite, cannot sample");
  }
  const Eigen::VectorXd mu = llt.solve(eta_);
  const Eigen::MatrixXd L = llt.matrixL();
  std::normal_distribution<double> n01;
  std::vector<std::vector<Pose2>> out;
  out.reserve(static_cast<std::size_t>(n));
  Eigen::VectorXd z(dim());
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < dim(); ++i) z(i) = n01(rng);
    // cov = lambda^-1 = L^-T L^-1, so x = mu + L^-T z.
    const Eigen::VectorXd x =
        mu + L.transpose().triangularView<Eigen::Upper>().solve(z);
    std::vector<Pose2> assign;
    assign.reserve(vars_.size());
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      assign.push_back(retract(lin_[i], x.segment<3>(3 * static_cast<int>(i))));
    }
    out.push_back(std::move(assign));
  }
  return out;
}

GaussianDensity multiply(const GaussianDensity& a, const GaussianDensity& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;

  std::vector<VariableKey> vars = a.vars();
  std::vector<Pose2> lin = a.lin_points();
  for (std::size_t i = 0; i < b.vars().size(); ++i) {
    if (a.index_of(b.vars()[i]) < 0) {
      vars.push_back(b.vars()[i]);
      lin.push_back(b.lin_points()[i]);
    }
  }
  const int d = 3 * static_cast<int>(vars.size());
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(d);
  lambda.topLeftCorner(a.dim(), a.dim()) = a.lambda();
  eta.head(a.dim()) = a.eta();

  // Transport b onto the shared linearization points before adding blocks.
  GaussianDensity bt = b;
  for (std::size_t i = 0; i < b.vars().size(); ++i) {
    const int ia = a.index_of(b.vars()[i]);
    if (ia >= 0) bt.relinearize_to(b.vars()[i], a.lin_points()[ia]);
  }
  std::vector<int> pos(bt.vars().size());
  for (std::size_t i = 0; i < bt.vars().size(); ++i) {
    int p = -1;
    for (std::size_t j = 0; j < vars.size(); ++j) {
      if (vars[j] == bt.vars()[i]) {
        p = static_cast<int>(j);
        break;
      }
    }
    pos[i] = p;
  }
  for (std::size_t i = 0; i < bt.vars().size(); ++i) {
    eta.segment<3>(3 * pos[i]) += bt.eta().segment<3>(3 * static_cast<int>(i));
    for (std::size_t j = 0; j < bt.vars().size(); ++j) {
      lambda.block<3, 3>(3 * pos[i], 3 * pos[j]) +=
          bt.lambda().block<3, 3>(3 * static_cast<int>(i),
                                  3 * static_cast<int>(j));
    }
  }
  return GaussianDensity(std::move(vars), std::move(lambda), std::move(eta),
                         std::move(lin));
}

GaussianDensity divide(const GaussianDensity& numerator,
                       const GaussianDensity& denominator) {
  if (denominator.empty()) return numerator;
  GaussianDensity den = denominator;
  for (std::size_t i = 0; i < denominator.vars().size(); ++i) {
    const VariableKey& v = denominator.vars()[i];
    const int in = numerator.index_of(v);
    if (in < 0) {
      throw ContractViolation(
          "divide: denominator variable not in numerator: " + v.str());
    }
    den.relinearize_to(v, numerator.lin_points()[static_cast<std::size_t>(in)]);
  }
  Eigen::MatrixXd lambda = numerator.lambda();
  Eigen::VectorXd eta = numerator.eta();
  for (std::size_t i = 0; i < den.vars().size(); ++i) {
    const int pi = numerator.index_of(den.vars()[i]);
    eta.segment<3>(3 * pi) -= den.eta().segment<3>(3 * static_cast<int>(i));
    for (std::size_t j = 0; j < den.vars().size(); ++j) {
      const int pj = numerator.index_of(den.vars()[j]);
      lambda.block<3, 3>(3 * pi, 3 * pj) -= den.lambda().block<3, 3>(
          3 * static_cast<int>(i), 3 * static_cast<int>(j));
    }
  }
  return GaussianDensity(numerator.vars(), std::move(lambda), std::move(eta),
                         numerator.lin_points());
}

GaussianDensity marginalize(const GaussianDensity& d,
                            const std::vector<VariableKey>& keep) {
  if (keep.empty()) {
    throw ContractViolation("marginalize: empty keep set");
  }
  std::vector<int> keep_idx;
  keep_idx.reserve(keep.size());
  for (const auto& v : keep) {
    const int i = d.index_of(v);
    if (i < 0) {
      throw ContractViolation("marginalize: unknown variable " + v.str());
    }
    keep_idx.push_back(i);
  }
  std::vector<int> drop_idx;
  for (int i = 0; i < d.num_vars(); ++i) {
    bool kept = false;
    for (int k : keep_idx) kept = kept || (k == i);
    if (!kept) drop_idx.push_back(i);
  }
  const int na = static_cast<int>(keep_idx.size());
  const int nb = static_cast<int>(drop_idx.size());
  if (nb == 0) {
    // Pure reordering.
    Eigen::MatrixXd lambda(3 * na, 3 * na);
    Eigen::VectorXd eta(3 * na);
    std::vector<Pose2> lin;
    for (int i = 0; i < na; ++i) {
      eta.segment<3>(3 * i) = d.eta().segment<3>(3 * keep_idx[i]);
      lin.push_back(d.lin_points()[static_cast<std::size_t>(keep_idx[i])]);
      for (int j = 0; j < na; ++j) {
        lambda.block<3, 3>(3 * i, 3 * j) =
            d.lambda().block<3, 3>(3 * keep_idx[i], 3 * keep_idx[j]);
      }
    }
    return GaussianDensity(keep, std::move(lambda), std::move(eta),
                           std::move(lin));
  }

  Eigen::MatrixXd laa(3 * na, 3 * na), lab(3 * na, 3 * nb), lbb(3 * nb, 3 * nb);
  Eigen::VectorXd ea(3 * na), eb(3 * nb);
  for (int i = 0; i < na; ++i) {
    ea.segment<3>(3 * i) = d.eta().segment<3>(3 * keep_idx[i]);
    for (int j = 0; j < na; ++j) {
      laa.block<3, 3>(3 * i, 3 * j) =
          d.lambda().block<3, 3>(3 * keep_idx[i], 3 * keep_idx[j]);
    }
    for (int j = 0; j < nb; ++j) {
      lab.block<3, 3>(3 * i, 3 * j) =
          d.lambda().block<3, 3>(3 * keep_idx[i], 3 * drop_idx[j]);
    }
  }
  for (int i = 0; i < nb; ++i) {
    eb.segment<3>(3 * i) = d.eta().segment<3>(3 * drop_idx[i]);
    for (int j = 0; j < nb; ++j) {
      lbb.block<3, 3>(3 * i, 3 * j) =
          d.lambda().block<3, 3>(3 * drop_idx[i], 3 * drop_idx[j]);
    }
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(lbb);
  if (ldlt.info() != Eigen::Success) {
    throw ContractViolation("marginalize: eliminated block is singular");
  }
  const Eigen::MatrixXd lbb_inv_lba = ldlt.solve(lab.transpose());
  Eigen::MatrixXd lambda = laa - lab * lbb_inv_lba;
  Eigen::VectorXd eta = ea - lab * ldlt.solve(eb);
  std::vector<Pose2> lin;
  for (int i = 0; i < na; ++i) {
    lin.push_back(d.lin_points()[static_cast<std::size_t>(keep_idx[i])]);
  }
  return GaussianDensity(keep, std::move(lambda), std::move(eta),
                         std::move(lin));
}

}  // namespace hddf
