#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <map>
#include <random>
#include <set>

#include "oracles.hpp"
#include "radfuse/track.hpp"

using namespace radfuse;
using Eigen::Vector2d;
using Eigen::Vector4d;

TEST_CASE("cv_transition basics and the semigroup property") {
  CHECK((track::cv_transition(0.0) - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() == 0.0);
  Vector4d x;
  x << 0, 0, 1, 2;
  const Vector4d moved = track::cv_transition(1.0) * x;
  CHECK(moved(0) == doctest::Approx(1.0));
  CHECK(moved(1) == doctest::Approx(2.0));
  CHECK_THROWS_AS(track::cv_transition(-0.1), std::invalid_argument);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = u(rng), b = u(rng);
    const Eigen::Matrix4d lhs = track::cv_transition(a) * track::cv_transition(b);
    CHECK((lhs - track::cv_transition(a + b)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("kf_predict: state motion and covariance growth") {
  track::SensorTrack tr;
  tr.x << 1, 1, -1, 0;
  tr.C = Eigen::Matrix4d::Identity();
  const auto before = tr;

  SUBCASE("zero step is a no-op") {
    track::kf_predict(tr, 0.0, Eigen::Matrix4d::Zero());
    CHECK((tr.x - before.x).norm() == 0.0);
    CHECK((tr.C - before.C).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("linear motion") {
    track::kf_predict(tr, 2.0, Eigen::Matrix4d::Zero());
    CHECK(tr.x(0) == doctest::Approx(-1.0));
    CHECK(tr.x(1) == doctest::Approx(1.0));
  }

  SUBCASE("covariance matches the hand expansion F F' + 0.1 I") {
    track::kf_predict(tr, 1.0, 0.1 * Eigen::Matrix4d::Identity());
    const Eigen::Matrix4d f = track::cv_transition(1.0);
    const Eigen::Matrix4d expected = f * f.transpose() + 0.1 * Eigen::Matrix4d::Identity();
    CHECK((tr.C - expected).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("trace grows under positive process noise") {
    const double t0 = tr.C.trace();
    track::kf_predict(tr, 0.5, track::process_noise(0.5, 0.5));
    CHECK(tr.C.trace() > t0);
  }
}

TEST_CASE("kf_update: limits and hand-computed gain") {
  SUBCASE("uninformative measurement leaves the state") {
    track::SensorTrack tr;
    tr.x << 0.5, -0.5, 0.1, 0.1;
    tr.C = Eigen::Matrix4d::Identity();
    track::kf_update(tr, Vector2d(25.0, -12.0), 1e6 * Eigen::Matrix2d::Identity());
    CHECK((tr.x.head<2>() - Vector2d(0.5, -0.5)).norm() < 1e-3);
  }

  SUBCASE("unit prior, unit noise: posterior position is z/2") {
    track::SensorTrack tr;
    tr.x.setZero();
    tr.C = Eigen::Matrix4d::Identity();
    track::kf_update(tr, Vector2d(1.0, 0.0), Eigen::Matrix2d::Identity());
    CHECK(tr.x(0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(tr.x(1) == doctest::Approx(0.0));
    CHECK(tr.x.tail<2>().norm() == doctest::Approx(0.0));
  }

  SUBCASE("near-zero noise pins the position to the measurement") {
    track::SensorTrack tr;
    tr.x.setZero();
    tr.C = Eigen::Matrix4d::Identity();
    track::kf_update(tr, Vector2d(1.0, 2.0), 1e-12 * Eigen::Matrix2d::Identity());
    CHECK((tr.x.head<2>() - Vector2d(1.0, 2.0)).norm() < 1e-6);
  }

  SUBCASE("repeated updates shrink positional variance per the scalar recursion") {
    track::SensorTrack tr;
    tr.x.setZero();
    tr.C = Eigen::Matrix4d::Identity();
    double scalar_var = 1.0;
    for (int i = 0; i < 5; ++i) {
      const double prev = tr.C(0, 0);
      track::kf_update(tr, Vector2d(0.0, 0.0), Eigen::Matrix2d::Identity());
      scalar_var = scalar_var - scalar_var * scalar_var / (scalar_var + 1.0);
      CHECK(tr.C(0, 0) < prev);
      CHECK(tr.C(0, 0) == doctest::Approx(scalar_var).epsilon(1e-6));
    }
  }
}

TEST_CASE("measurement covariance grows with range and off-boresight angle") {
  const auto near = track::measurement_covariance(Vector2d(1.0, 0.0), 0.05, 2.0, 60.0);
  const auto far = track::measurement_covariance(Vector2d(5.0, 0.0), 0.05, 2.0, 60.0);
  CHECK(near(0, 0) == doctest::Approx(0.05 * 0.05));
  CHECK(far(1, 1) > near(1, 1));
  const auto side = track::measurement_covariance(Vector2d(3.0, 3.0), 0.05, 2.0, 60.0);
  const auto bore = track::measurement_covariance(Vector2d(std::sqrt(18.0), 0.0), 0.05, 2.0, 60.0);
  CHECK(side.trace() > bore.trace());
}

namespace {

track::KFParams quiet_params() {
  track::KFParams p;
  p.sigma_r = 0.05;
  p.sigma_theta_deg = 2.0;
  return p;
}

}  // namespace

TEST_CASE("steady detection confirms exactly one track") {
  track::SensorTracker tracker(1, quiet_params());
  const Vector2d pos(2.0, 0.5);
  track::TrackSetMsg msg;
  for (int k = 0; k < 6; ++k) {
    msg = tracker.step({pos}, 0.1 * (k + 1));
    if (k < 2) CHECK(msg.tracks.empty());  // not confirmed before m hits
  }
  REQUIRE(msg.tracks.size() == 1);
  CHECK((msg.tracks[0].x.head<2>() - pos).norm() < quiet_params().gate_d);
  CHECK(tracker.tracks().size() == 1);
}

TEST_CASE("vanished detections terminate the track within the window") {
  track::KFParams params = quiet_params();
  track::SensorTracker tracker(1, params);
  double t = 0.0;
  for (int k = 0; k < 5; ++k) tracker.step({Vector2d(1.0, 1.0)}, t += 0.1);
  CHECK(tracker.tracks().size() == 1);
  for (int k = 0; k < params.n_window; ++k) tracker.step({}, t += 0.1);
  CHECK(tracker.tracks().empty());
}

TEST_CASE("timestamps must strictly increase") {
  track::SensorTracker tracker(1, quiet_params());
  tracker.step({}, 1.0);
  CHECK_THROWS_AS(tracker.step({}, 1.0), std::logic_error);
  CHECK_THROWS_AS(tracker.step({}, 0.5), std::logic_error);
}

TEST_CASE("track ids are never reused") {
  track::SensorTracker tracker(1, quiet_params());
  std::set<std::uint64_t> seen;
  double t = 0.0;
  for (int round = 0; round < 4; ++round) {
    for (int k = 0; k < 5; ++k) tracker.step({Vector2d(1.0 + round, 2.0)}, t += 0.1);
    for (const auto& tr : tracker.tracks()) {
      CHECK(!seen.contains(tr.id));
    }
    for (const auto& tr : tracker.tracks()) seen.insert(tr.id);
    for (int k = 0; k < 5; ++k) tracker.step({}, t += 0.1);  // kill it
  }
}

TEST_CASE("covariances stay symmetric positive definite through a run") {
  track::SensorTracker tracker(1, quiet_params());
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.05);
  double t = 0.0;
  for (int k = 0; k < 60; ++k) {
    std::vector<Vector2d> dets;
    if (k % 7 != 6) dets.push_back(Vector2d(2.0 + 0.01 * k + n(rng), 1.0 + n(rng)));
    if (k % 3 == 0) dets.push_back(Vector2d(4.0 - 0.01 * k + n(rng), -1.0 + n(rng)));
    tracker.step(dets, t += 1.0 / 15.0);
    for (const auto& tr : tracker.tracks()) {
      CHECK((tr.C - tr.C.transpose()).cwiseAbs().maxCoeff() == 0.0);
      const auto evals = oracles::jacobi_eigenvalues(tr.C);
      CHECK(evals.front() > 0.0);
    }
  }
}

TEST_CASE("two crossing targets with separation above the gate keep their ids") {
  track::KFParams params = quiet_params();
  params.gate_d = 0.45;
  track::SensorTracker tracker(1, params);
  const double dt = 1.0 / 15.0;
  std::map<std::uint64_t, int> id_to_side;  // track id -> initial lane (0 low, 1 high)
  for (int k = 0; k < 90; ++k) {
    const double t = dt * (k + 1);
    const Vector2d a(0.5 + 0.5 * t, 0.0);  // rightward
    const Vector2d b(3.5 - 0.5 * t, 1.0);  // leftward, lane 1 m away
    const auto msg = tracker.step({a, b}, t);
    for (const auto& e : msg.tracks) {
      const int side = e.x(1) > 0.5 ? 1 : 0;
      auto [it, inserted] = id_to_side.try_emplace(e.id, side);
      CHECK(it->second == side);  // no identity switch across the crossing
    }
  }
  CHECK(id_to_side.size() == 2);
}

TEST_CASE("message timestamps strictly increase and carry the sensor id") {
  track::SensorTracker tracker(7, quiet_params());
  double prev = -1.0;
  for (int k = 0; k < 10; ++k) {
    const auto msg = tracker.step({}, 0.05 * (k + 1));
    CHECK(msg.sensor_id == 7);
    CHECK(msg.stamp > prev);
    prev = msg.stamp;
  }
}
