#include <doctest.h>

#include <random>

#include "hddf/errors.hpp"
#include "hddf/gaussian.hpp"
#include "hddf/rng.hpp"

using namespace hddf;

namespace {

std::vector<VariableKey> make_vars(int n) {
  std::vector<VariableKey> vars;
  for (int i = 0; i < n; ++i) {
    vars.push_back(i % 2 == 0 ? VariableKey::robot_pose(1, i)
                              : VariableKey::object_pose(100 + i));
  }
  return vars;
}

// Random SPD density over the given variables.
GaussianDensity random_density(const std::vector<VariableKey>& vars,
                               std::mt19937_64& rng,
                               const std::vector<Pose2>* lin_override =
                                   nullptr) {
  const int d = 3 * static_cast<int>(vars.size());
  std::normal_distribution<double> n01;
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) a(i, j) = n01(rng);
  }
  Eigen::MatrixXd lambda =
      a * a.transpose() + 0.5 * d * Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd eta(d);
  for (int i = 0; i < d; ++i) eta(i) = n01(rng);
  std::vector<Pose2> lin;
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (std::size_t i = 0; i < vars.size(); ++i) {
    lin.push_back(lin_override ? (*lin_override)[i]
                               : Pose2(u(rng), u(rng), 0.3 * n01(rng)));
  }
  return GaussianDensity(vars, lambda, eta, lin);
}

}  // namespace

TEST_CASE("constructor validates symmetry and dimensions") {
  auto vars = make_vars(1);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(3, 3);
  bad(0, 1) = 1.0;
  CHECK_THROWS_AS(
      GaussianDensity(vars, bad, Eigen::Vector3d::Zero(), {Pose2()}),
      ContractViolation);
  CHECK_THROWS_AS(GaussianDensity(vars, Eigen::MatrixXd::Identity(6, 6),
                                  Eigen::VectorXd::Zero(6), {Pose2()}),
                  ContractViolation);
}

TEST_CASE("multiply identity, additivity, block structure") {
  auto rng = make_rng(21);
  const auto vars = make_vars(2);
  const GaussianDensity d = random_density(vars, rng);
  const GaussianDensity empty;
  CHECK(multiply(d, empty).lambda().isApprox(d.lambda()));
  CHECK(multiply(empty, d).lambda().isApprox(d.lambda()));

  const VariableKey v = VariableKey::object_pose(7);
  const GaussianDensity p1 = GaussianDensity::isotropic_prior(v, Pose2(), 2.0);
  const GaussianDensity p2 = GaussianDensity::isotropic_prior(v, Pose2(), 4.0);
  const GaussianDensity prod = multiply(p1, p2);
  CHECK(prod.num_vars() == 1);
  CHECK(prod.lambda().isApprox(p1.lambda() + p2.lambda(), 1e-12));

  const GaussianDensity a =
      random_density({VariableKey::robot_pose(1, 0)}, rng);
  const GaussianDensity b = random_density({VariableKey::object_pose(9)}, rng);
  const GaussianDensity ab = multiply(a, b);
  CHECK(ab.num_vars() == 2);
  CHECK(ab.lambda().topRightCorner(3, 3).isZero(0.0));
}

TEST_CASE("divide inverts multiply on aligned forms (200 random cases)") {
  auto rng = make_rng(22);
  std::uniform_int_distribution<int> nv(1, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = nv(rng);
    const auto vars = make_vars(n);
    const GaussianDensity a = random_density(vars, rng);
    std::vector<VariableKey> bvars(vars.begin(),
                                   vars.begin() + std::max(1, n / 2));
    std::vector<Pose2> blin(a.lin_points().begin(),
                            a.lin_points().begin() + bvars.size());
    const GaussianDensity b = random_density(bvars, rng, &blin);
    const GaussianDensity back = divide(multiply(a, b), b);
    CHECK((back.lambda() - a.lambda()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((back.eta() - a.eta()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("divide errors and self-division") {
  auto rng = make_rng(23);
  const GaussianDensity a =
      random_density({VariableKey::robot_pose(1, 0)}, rng);
  const GaussianDensity b = random_density({VariableKey::object_pose(5)}, rng);
  CHECK_THROWS_AS(divide(a, b), ContractViolation);
  const GaussianDensity z = divide(a, a);
  CHECK(z.lambda().cwiseAbs().maxCoeff() < 1e-12);
  CHECK(z.eta().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("marginalize matches dense Schur oracle (200 random cases)") {
  auto rng = make_rng(24);
  std::uniform_int_distribution<int> nv(2, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = nv(rng);
    const auto vars = make_vars(n);
    const GaussianDensity d = random_density(vars, rng);
    std::uniform_int_distribution<int> nk(1, n - 1);
    const int k = nk(rng);
    std::vector<VariableKey> keep(vars.begin(), vars.begin() + k);
    const GaussianDensity m = marginalize(d, keep);

    // Oracle: invert the joint, take the kept covariance block, re-invert.
    const Eigen::MatrixXd cov = d.lambda().inverse();
    const Eigen::VectorXd mu = d.lambda().ldlt().solve(d.eta());
    const Eigen::MatrixXd cov_k = cov.topLeftCorner(3 * k, 3 * k);
    const Eigen::MatrixXd lambda_k = cov_k.inverse();
    const Eigen::VectorXd eta_k = lambda_k * mu.head(3 * k);
    CHECK((m.lambda() - lambda_k).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((m.eta() - eta_k).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("marginalize keep-all, two-step composition, errors") {
  auto rng = make_rng(25);
  const auto vars = make_vars(3);
  const GaussianDensity d = random_density(vars, rng);
  const GaussianDensity same = marginalize(d, vars);
  CHECK(same.lambda().isApprox(d.lambda(), 1e-12));
  CHECK(same.eta().isApprox(d.eta(), 1e-12));

  const GaussianDensity one =
      marginalize(d, {vars[0]});
  const GaussianDensity two_step =
      marginalize(marginalize(d, {vars[0], vars[1]}), {vars[0]});
  CHECK((one.lambda() - two_step.lambda()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((one.eta() - two_step.eta()).cwiseAbs().maxCoeff() < 1e-9);

  CHECK_THROWS_AS(marginalize(d, {}), ContractViolation);
  CHECK_THROWS_AS(marginalize(d, {VariableKey::object_pose(999)}),
                  ContractViolation);
}

TEST_CASE("marginalize commutes with multiply for disjoint non-kept parts") {
  auto rng = make_rng(26);
  for (int trial = 0; trial < 20; ++trial) {
    const VariableKey shared = VariableKey::robot_pose(1, 0);
    const VariableKey only_a = VariableKey::object_pose(1);
    const VariableKey only_b = VariableKey::object_pose(2);
    const GaussianDensity a = random_density({shared, only_a}, rng);
    std::vector<Pose2> blin = {a.lin_points()[0], Pose2(1, 2, 0.1)};
    const GaussianDensity b = random_density({shared, only_b}, rng, &blin);
    const GaussianDensity lhs = marginalize(multiply(a, b), {shared});
    // Marginalizing each factor first is NOT generally equal; but the
    // kept-variable marginal of the product must match the dense oracle.
    const GaussianDensity joint = multiply(a, b);
    const Eigen::MatrixXd cov = joint.lambda().inverse();
    const Eigen::MatrixXd lam = cov.topLeftCorner(3, 3).inverse();
    CHECK((lhs.lambda() - lam).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("evaluate_log_density normalization constant and offsets") {
  const VariableKey v = VariableKey::robot_pose(2, 0);
  const GaussianDensity d(
      {v}, Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), {Pose2()});
  std::map<VariableKey, Pose2> at_mean{{v, Pose2()}};
  const double peak = d.evaluate_log_density(at_mean);
  CHECK(peak == doctest::Approx(-1.5 * std::log(2.0 * M_PI)).epsilon(1e-12));
  std::map<VariableKey, Pose2> off{{v, Pose2(1, 0, 0)}};
  CHECK(d.evaluate_log_density(off) == doctest::Approx(peak - 0.5));
  std::map<VariableKey, Pose2> missing{{VariableKey::object_pose(1), Pose2()}};
  CHECK_THROWS_AS(d.evaluate_log_density(missing), ContractViolation);
}

TEST_CASE("evaluate_log_density matches dense quadratic oracle") {
  auto rng = make_rng(27);
  const auto vars = make_vars(2);
  const GaussianDensity d = random_density(vars, rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::map<VariableKey, Pose2> pt;
    Eigen::VectorXd delta(6);
    for (int i = 0; i < 2; ++i) {
      const Vec3 dd(u(rng), u(rng), 0.3 * u(rng));
      delta.segment<3>(3 * i) = dd;
      pt[vars[static_cast<std::size_t>(i)]] =
          retract(d.lin_points()[static_cast<std::size_t>(i)], dd);
    }
    const Eigen::VectorXd mu = d.lambda().ldlt().solve(d.eta());
    const double logdet = std::log(d.lambda().determinant());
    const Eigen::VectorXd r = delta - mu;
    const double oracle = 0.5 * logdet - 3.0 * std::log(2.0 * M_PI) -
                          0.5 * r.dot(d.lambda() * r);
    CHECK(d.evaluate_log_density(pt) == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("sampling determinism, concentration, and moments") {
  const VariableKey v = VariableKey::robot_pose(1, 3);
  // Tight density: samples collapse onto the mean.
  const GaussianDensity tight(
      {v}, Eigen::Matrix3d::Identity() * 1e8,
      Eigen::Matrix3d::Identity() * 1e8 * Eigen::Vector3d(0.5, -0.25, 0.1),
      {Pose2(1, 1, 0)});
  auto rng = make_rng(30);
  for (const auto& s : tight.sample(50, rng)) {
    CHECK(std::abs(s[0].x - 1.5) < 1e-3);
    CHECK(std::abs(s[0].y - 0.75) < 1e-3);
    CHECK(std::abs(s[0].theta - 0.1) < 1e-3);
  }

  auto r1 = make_rng(31);
  auto r2 = make_rng(31);
  const auto s1 = tight.sample(5, r1);
  const auto s2 = tight.sample(5, r2);
  for (int i = 0; i < 5; ++i) {
    CHECK(s1[static_cast<std::size_t>(i)][0].x ==
          s2[static_cast<std::size_t>(i)][0].x);
  }

  // Moment check against the analytic mean.
  auto rngm = make_rng(32);
  const GaussianDensity d = random_density({v}, rngm);
  const Pose2 mean = d.mean_pose(v);
  const Eigen::MatrixXd cov = d.covariance();
  const int n = 100000;
  auto rs = make_rng(33);
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (const auto& s : d.sample(n, rs)) acc += s[0].vec();
  acc /= n;
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(acc(i) - mean.vec()(i)) <
          4.0 * std::sqrt(cov(i, i) / n));
  }
}

TEST_CASE("sample on an indefinite factor fails") {
  const VariableKey v = VariableKey::object_pose(4);
  const GaussianDensity d({v}, -Eigen::Matrix3d::Identity(),
                          Eigen::Vector3d::Zero(), {Pose2()});
  auto rng = make_rng(34);
  CHECK_FALSE(d.is_positive_definite());
  CHECK_THROWS_AS(d.sample(1, rng), ContractViolation);
}

TEST_CASE("relinearize_to preserves the encoded mean") {
  auto rng = make_rng(35);
  const auto vars = make_vars(2);
  GaussianDensity d = random_density(vars, rng);
  const Pose2 before = d.mean_pose(vars[0]);
  d.relinearize_to(vars[0], Pose2(3.0, -1.0, 0.2));
  const Pose2 after = d.mean_pose(vars[0]);
  CHECK(std::abs(before.x - after.x) < 1e-9);
  CHECK(std::abs(before.y - after.y) < 1e-9);
  CHECK(std::abs(wrap_angle(before.theta - after.theta)) < 1e-9);
}

TEST_CASE("multiply transports mismatched linearization points") {
  const VariableKey v = VariableKey::object_pose(11);
  const GaussianDensity a(
      {v}, Eigen::Matrix3d::Identity() * 2.0, Eigen::Vector3d::Zero(),
      {Pose2(1, 0, 0)});
  const GaussianDensity b(
      {v}, Eigen::Matrix3d::Identity() * 3.0, Eigen::Vector3d::Zero(),
      {Pose2(2, 0, 0)});
  // a has mean (1,0,0), b has mean (2,0,0); information-weighted fusion
  // gives (2*1 + 3*2)/5 = 1.6 in x.
  const GaussianDensity p = multiply(a, b);
  CHECK(p.lin_point(v).x == doctest::Approx(1.0));
  const Pose2 mean = p.mean_pose(v);
  CHECK(mean.x == doctest::Approx(1.6).epsilon(1e-12));
  CHECK(mean.y == doctest::Approx(0.0));
}
