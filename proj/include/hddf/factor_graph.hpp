#pragma once

#include <map>
#include <memory>
#include <variant>
#include <vector>

#include "hddf/classifier_model.hpp"
#include "hddf/gaussian.hpp"
#include "hddf/geometry.hpp"

namespace hddf {

struct PriorFactor {
  VariableKey var;
  Pose2 mean;
  Mat3 cov;
};

struct OdometryFactor {
  VariableKey from;
  VariableKey to;
  Pose2 measured;  // relative pose
  Mat3 cov;
};

struct GeometricFactor {
  VariableKey robot;
  VariableKey object;
  Pose2 measured;  // full relative pose of the object in the robot frame
  Mat3 cov;
};

struct SemanticFactor {
  VariableKey robot;
  VariableKey object;
  Eigen::VectorXd z;
  ClassLabel cls;
  std::shared_ptr<const ViewpointModel> model;
};

// Wraps a previously computed density (prior belief, received marginal).
struct ExternalMarginalFactor {
  GaussianDensity density;
};

using Factor = std::variant<PriorFactor, OdometryFactor, GeometricFactor,
                            SemanticFactor, ExternalMarginalFactor>;

struct OptimizeOptions {
  int max_iters = 100;
  double tol = 1e-9;  // on the update norm
};

// Nonlinear least-squares smoother over SE(2) poses. Variables must be
// created via set_initial before a factor referencing them is added.
class FactorGraph {
 public:
  void set_initial(const VariableKey& v, const Pose2& guess);
  bool has_variable(const VariableKey& v) const;
  const Pose2& value(const VariableKey& v) const;
  const std::vector<VariableKey>& variables() const { return order_; }
  std::size_t num_factors() const { return factors_.size(); }

  void add_factor(Factor f);

  // Linearized quadratic at the current values: lambda = J'WJ, eta = -J'We.
  GaussianDensity linearize() const;

  // Gauss-Newton. Returns the Laplace approximation at the converged
  // estimate. Throws UnderconstrainedGraph when the normal equations are
  // singular, naming the unconstrained variables.
  GaussianDensity optimize(const OptimizeOptions& opts = {});

 private:
  std::vector<Factor> factors_;
  std::vector<VariableKey> order_;
  std::map<VariableKey, int> index_;
  std::vector<Pose2> values_;

  int require(const VariableKey& v) const;
};

}  // namespace hddf
