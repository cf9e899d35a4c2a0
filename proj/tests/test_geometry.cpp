#include <doctest.h>

#include <random>

#include "hddf/errors.hpp"
#include "hddf/geometry.hpp"
#include "hddf/rng.hpp"

using namespace hddf;

namespace {
void check_close(const Pose2& a, const Pose2& b, double tol = 1e-12) {
  CHECK(std::abs(a.x - b.x) < tol);
  CHECK(std::abs(a.y - b.y) < tol);
  CHECK(std::abs(wrap_angle(a.theta - b.theta)) < tol);
}

Pose2 random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::uniform_real_distribution<double> a(-3.14, 3.14);
  return Pose2(u(rng), u(rng), a(rng));
}
}  // namespace

TEST_CASE("wrap_angle maps into (-pi, pi] and is idempotent") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(3 * M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(2 * M_PI) == doctest::Approx(0.0));
  auto rng = make_rng(11);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 200; ++i) {
    const double w = wrap_angle(u(rng));
    CHECK(w > -M_PI - 1e-15);
    CHECK(w <= M_PI + 1e-15);
    CHECK(wrap_angle(w) == doctest::Approx(w));
  }
}

TEST_CASE("compose basics") {
  check_close(compose(Pose2(0, 0, 0), Pose2(1, 2, 0.3)), Pose2(1, 2, 0.3));
  check_close(compose(Pose2(1, 0, M_PI / 2), Pose2(1, 0, 0)),
              Pose2(1, 1, M_PI / 2));
  auto rng = make_rng(12);
  for (int i = 0; i < 100; ++i) {
    const Pose2 p = random_pose(rng);
    check_close(compose(p, inverse(p)), Pose2(0, 0, 0), 1e-12);
    check_close(compose(p, Pose2(0, 0, 0)), p);
  }
}

TEST_CASE("compose associativity") {
  auto rng = make_rng(13);
  for (int i = 0; i < 200; ++i) {
    const Pose2 a = random_pose(rng);
    const Pose2 b = random_pose(rng);
    const Pose2 c = random_pose(rng);
    check_close(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-10);
  }
}

TEST_CASE("between examples and round trip") {
  auto rng = make_rng(14);
  const Pose2 p = random_pose(rng);
  check_close(between(p, p), Pose2(0, 0, 0));
  check_close(between(Pose2(0, 0, 0), Pose2(1, 1, M_PI / 2)),
              Pose2(1, 1, M_PI / 2));
  check_close(between(Pose2(1, 0, M_PI / 2), Pose2(1, 1, M_PI / 2)),
              Pose2(1, 0, 0));
  for (int i = 0; i < 200; ++i) {
    const Pose2 a = random_pose(rng);
    const Pose2 b = random_pose(rng);
    check_close(compose(a, between(a, b)), b, 1e-10);
  }
}

TEST_CASE("local_diff and retract invert each other") {
  auto rng = make_rng(15);
  for (int i = 0; i < 100; ++i) {
    const Pose2 a = random_pose(rng);
    const Pose2 b = random_pose(rng);
    check_close(retract(b, local_diff(a, b)), a, 1e-12);
  }
}

TEST_CASE("noise covariance validation") {
  Mat3 ok = Mat3::Identity();
  CHECK_NOTHROW(check_noise_covariance(ok));
  CHECK_NOTHROW(check_noise_covariance(Mat3::Zero()));
  Mat3 asym = Mat3::Identity();
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(check_noise_covariance(asym), ConfigError);
  Mat3 negdef = -Mat3::Identity();
  CHECK_THROWS_AS(check_noise_covariance(negdef), ConfigError);
}

TEST_CASE("sample_pose_noise zero covariance and determinism") {
  auto rng1 = make_rng(42);
  const Pose2 z = sample_pose_noise(Mat3::Zero(), rng1);
  CHECK(z.x == 0.0);
  CHECK(z.y == 0.0);
  CHECK(z.theta == 0.0);
  Mat3 cov = Mat3::Identity() * 0.01;
  auto a = make_rng(7);
  auto b = make_rng(7);
  const Pose2 s1 = sample_pose_noise(cov, a);
  const Pose2 s2 = sample_pose_noise(cov, b);
  CHECK(s1.x == s2.x);
  CHECK(s1.y == s2.y);
  CHECK(s1.theta == s2.theta);
}

TEST_CASE("sample_pose_noise empirical covariance") {
  Mat3 cov = Mat3::Zero();
  cov.diagonal() << 0.003, 0.003, 0.001;
  auto rng = make_rng(99);
  const int n = 100000;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d second = Eigen::Matrix3d::Zero();
  for (int i = 0; i < n; ++i) {
    const Pose2 s = sample_pose_noise(cov, rng);
    const Eigen::Vector3d v = s.vec();
    mean += v;
    second += v * v.transpose();
  }
  mean /= n;
  const Eigen::Matrix3d emp = second / n - mean * mean.transpose();
  for (int i = 0; i < 3; ++i) {
    CHECK(emp(i, i) == doctest::Approx(cov(i, i)).epsilon(0.05));
  }
  CHECK(std::abs(emp(0, 1)) < 5e-4);
}
