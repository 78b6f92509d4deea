#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "radfuse/selfcal.hpp"

using namespace radfuse;
using Eigen::Vector2d;

namespace {

selfcal::Trajectory make_traj(int sensor, std::uint64_t id, std::vector<Vector2d> pts,
                              double t0 = 0.0, double dt = 1.0 / 15.0) {
  selfcal::Trajectory tr;
  tr.sensor_id = sensor;
  tr.track_id = id;
  tr.seq.p = std::move(pts);
  for (size_t i = 0; i < tr.seq.p.size(); ++i) tr.seq.t.push_back(t0 + dt * i);
  return tr;
}

// A smooth wandering path; distinct frequencies keep different targets apart.
std::vector<Vector2d> wander(int n, double dt, double fx, double fy, Vector2d center) {
  std::vector<Vector2d> pts;
  for (int i = 0; i < n; ++i) {
    const double t = dt * i;
    pts.push_back(center + Vector2d(1.5 * std::sin(fx * t), 1.0 * std::cos(fy * t)));
  }
  return pts;
}

selfcal::Trajectory transformed_view(const selfcal::Trajectory& ref, const geom::Pose2D& pose_s,
                                     int sensor, double time_shift = 0.0,
                                     double noise_sigma = 0.0, unsigned seed = 1) {
  // pose_s maps sensor-s coordinates into sensor-1 coordinates, so the
  // sensor-s view of a sensor-1 trajectory applies the inverse.
  const auto inv = geom::inverse(pose_s);
  selfcal::Trajectory out;
  out.sensor_id = sensor;
  out.track_id = ref.track_id + 100;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, noise_sigma);
  for (size_t i = 0; i < ref.seq.size(); ++i) {
    Vector2d p = inv(ref.seq.p[i]);
    if (noise_sigma > 0) p += Vector2d(n(rng), n(rng));
    out.seq.p.push_back(p);
    out.seq.t.push_back(ref.seq.t[i] + time_shift);
  }
  return out;
}

}  // namespace

TEST_CASE("time_align on identical grids matches everything with zero shift") {
  const auto a = make_traj(1, 1, wander(60, 1.0 / 15.0, 1.0, 0.7, {3, 2}));
  const auto al = selfcal::time_align(a.seq, a.seq, 1.0 / 15.0);
  CHECK(al.length() == 60);
  CHECK(al.mean_shift == 0.0);
}

TEST_CASE("time_align with a uniform half-window shift matches all points") {
  const double tc = 1.0 / 15.0;
  const auto a = make_traj(1, 1, wander(60, tc, 1.0, 0.7, {3, 2}), 0.0, tc);
  const auto b = make_traj(2, 2, wander(60, tc, 1.0, 0.7, {3, 2}), tc / 2.0, tc);
  const auto al = selfcal::time_align(a.seq, b.seq, tc);
  CHECK(al.length() == 60);
  CHECK(al.mean_shift == doctest::Approx(tc / 2.0).epsilon(1e-9));
}

TEST_CASE("time_align at mixed rates agrees with the brute-force matcher") {
  const double tc = 1.0 / 15.0;
  const auto a = make_traj(1, 1, wander(150, 1.0 / 15.0, 1.0, 0.7, {3, 2}), 0.013, 1.0 / 15.0);
  const auto b = make_traj(2, 2, wander(100, 0.1, 1.0, 0.7, {3, 2}), 0.0, 0.1);
  const auto al = selfcal::time_align(a.seq, b.seq, tc);
  CHECK(al.length() == oracles::brute_force_alignment_count(a.seq.t, b.seq.t, tc));
  // indices strictly increasing on both sides
  for (int i = 1; i < al.length(); ++i) {
    CHECK(al.idx_a[i] > al.idx_a[i - 1]);
    CHECK(al.idx_b[i] > al.idx_b[i - 1]);
  }
  // every matched pair within the window
  for (int i = 0; i < al.length(); ++i) {
    CHECK(std::abs(a.seq.t[al.idx_a[i]] - b.seq.t[al.idx_b[i]]) <= tc);
  }
}

TEST_CASE("time_align with disjoint spans returns the empty overlap") {
  const auto a = make_traj(1, 1, wander(30, 0.1, 1.0, 0.7, {3, 2}), 0.0, 0.1);
  const auto b = make_traj(2, 2, wander(30, 0.1, 1.0, 0.7, {3, 2}), 100.0, 0.1);
  CHECK(selfcal::time_align(a.seq, b.seq, 1.0 / 15.0).length() == 0);
}

TEST_CASE("pair_cost collapses to -ln(K Tc) on identical trajectories") {
  selfcal::CalibParams params;
  // K * T_c = 10 s: with T_c = 1/15, K = 150
  const auto a = make_traj(1, 1, wander(150, 1.0 / 15.0, 0.9, 0.6, {3.5, 2}));
  const auto pc = selfcal::pair_cost(a, a, params);
  CHECK(pc.xi == doctest::Approx(0.0));
  CHECK(pc.aligned.mean_shift == 0.0);
  CHECK(pc.A == doctest::Approx(-std::log(10.0)).epsilon(1e-9));
}

TEST_CASE("pair_cost halves rho when the mean shift is one second") {
  // synthetic aligned pair with tau-bar = 1 s: shift every timestamp by 1 s
  // but keep the window large enough to align sample i with sample i.
  selfcal::CalibParams params;
  params.T_c = 1.0 / 15.0;
  const int k = 150;
  const auto a = make_traj(1, 1, wander(k, params.T_c, 0.9, 0.6, {3.5, 2}));
  auto b = a;
  for (auto& t : b.seq.t) t += 1.0;
  // widen the window artificially to force the 1 s alignment
  selfcal::CalibParams wide = params;
  wide.T_c = 1.2;
  auto pc = selfcal::pair_cost(a, b, wide);
  CHECK(pc.aligned.mean_shift == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(pc.xi == doctest::Approx(0.0));
  // rho = ln(K * T_c) / (1 + 1); K here equals the aligned length
  const double expected = -std::log(pc.aligned.length() * wide.T_c) / 2.0;
  CHECK(pc.A == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("pair_cost marks too-short overlaps unusable") {
  selfcal::CalibParams params;  // min_overlap_s = 2.0
  const auto a = make_traj(1, 1, wander(10, 1.0 / 15.0, 0.9, 0.6, {3.5, 2}));
  const auto pc = selfcal::pair_cost(a, a, params);
  CHECK(!std::isfinite(pc.A));
}

TEST_CASE("pair cost is invariant to a common rigid motion") {
  selfcal::CalibParams params;
  const auto a = make_traj(1, 1, wander(200, 1.0 / 15.0, 0.9, 0.6, {3.5, 2}));
  const auto b = transformed_view(a, geom::Pose2D::from_deg(1.0, -2.0, 40.0), 2, 0.01, 0.02, 3);
  const auto base = selfcal::pair_cost(a, b, params);

  const auto common = geom::Pose2D::from_deg(-0.7, 0.4, -25.0);
  auto a2 = a;
  auto b2 = b;
  for (auto& p : a2.seq.p) p = common(p);
  for (auto& p : b2.seq.p) p = common(p);
  const auto moved = selfcal::pair_cost(a2, b2, params);
  CHECK(moved.A == doctest::Approx(base.A).epsilon(1e-9));
  CHECK(moved.xi == doctest::Approx(base.xi).epsilon(1e-9));
}

TEST_CASE("overlap factor strictly increases with K at fixed shift") {
  for (double tau : {0.0, 0.4, 2.0}) {
    double prev = -1e300;
    for (int k = 40; k <= 4000; k *= 2) {
      const double rho = std::log(k * (1.0 / 15.0)) / (1.0 + tau);
      CHECK(rho > prev);
      prev = rho;
    }
  }
}

TEST_CASE("associate_tracks recovers the ground-truth correspondence") {
  selfcal::CalibParams params;
  const auto pose = geom::Pose2D::from_deg(2.0, 1.0, 70.0);
  std::vector<selfcal::Trajectory> refs, others;
  for (int n = 0; n < 3; ++n) {
    refs.push_back(make_traj(1, n + 1,
                             wander(300, 1.0 / 15.0, 0.8 + 0.25 * n, 0.5 + 0.2 * n,
                                    {3.0 + 0.3 * n, 2.0 - 0.3 * n})));
  }
  // present them in scrambled order on the other side
  for (int n : {2, 0, 1}) {
    others.push_back(transformed_view(refs[n], pose, 2, 0.01, 0.02, 17 + n));
  }
  const auto q = selfcal::associate_tracks(refs, others, params);
  REQUIRE(q.size() == 3);
  for (const auto& pr : q) {
    CHECK(refs[pr.idx_ref].track_id + 100 == others[pr.idx_other].track_id);
  }
}

TEST_CASE("associate_tracks caps the number of retained pairs") {
  selfcal::CalibParams params;
  params.max_pairs = 2;
  const auto pose = geom::Pose2D::from_deg(0.5, 0.2, 10.0);
  std::vector<selfcal::Trajectory> refs, others;
  for (int n = 0; n < 4; ++n) {
    refs.push_back(make_traj(1, n + 1,
                             wander(300 + 60 * n, 1.0 / 15.0, 0.8 + 0.21 * n, 0.5 + 0.17 * n,
                                    {3.0, 2.0})));
    others.push_back(transformed_view(refs[n], pose, 2, 0.0, 0.01, 31 + n));
  }
  const auto q = selfcal::associate_tracks(refs, others, params);
  CHECK(q.size() == 2);
  CHECK(q[0].cost.A <= q[1].cost.A);  // lowest-cost pairs kept
}

TEST_CASE("mask_select evaluates single pairs and excludes a corrupted association") {
  selfcal::CalibParams params;
  const auto pose = geom::Pose2D::from_deg(1.5, -0.5, -35.0);
  std::vector<selfcal::Trajectory> refs, others;
  for (int n = 0; n < 3; ++n) {
    refs.push_back(make_traj(1, n + 1,
                             wander(300, 1.0 / 15.0, 0.8 + 0.3 * n, 0.45 + 0.25 * n,
                                    {3.0 + 0.4 * n, 2.0})));
    others.push_back(transformed_view(refs[n], pose, 2, 0.005, 0.01, 7 + n));
  }

  SUBCASE("a single pair is returned as-is") {
    auto q = selfcal::associate_tracks({refs[0]}, {others[0]}, params);
    REQUIRE(q.size() == 1);
    const auto kept = selfcal::mask_select({refs[0]}, {others[0]}, q, params);
    CHECK(kept.size() == 1);
  }

  SUBCASE("the deliberately wrong pair is masked out") {
    // correct pairs (0,0) and (1,1); corrupt pair: ref 2 against other 0
    std::vector<selfcal::TrajPair> q;
    q.push_back({0, 0, selfcal::pair_cost(refs[0], others[0], params)});
    q.push_back({1, 1, selfcal::pair_cost(refs[1], others[1], params)});
    q.push_back({2, 0, selfcal::pair_cost(refs[2], others[0], params)});
    selfcal::StackedFit fit;
    const auto kept = selfcal::mask_select(refs, others, q, params, &fit);
    REQUIRE(!kept.empty());
    for (const auto& pr : kept) {
      CHECK(pr.idx_ref == pr.idx_other);  // corrupted pair excluded
    }
    // masking never does worse than the full stack
    const auto full = selfcal::stack_and_fit(refs, others, q, params);
    CHECK(fit.A <= full.A + 1e-12);
  }
}

TEST_CASE("mask_select explores all 2^n - 1 subsets") {
  // n identical copies of a perfect pair: every subset has the same xi = 0,
  // so the winner is the largest K, i.e. all pairs kept.
  selfcal::CalibParams params;
  const auto a = make_traj(1, 1, wander(200, 1.0 / 15.0, 0.9, 0.6, {3.5, 2}));
  std::vector<selfcal::Trajectory> refs, others;
  std::vector<selfcal::TrajPair> q;
  for (int n = 0; n < 5; ++n) {
    refs.push_back(a);
    others.push_back(a);
    q.push_back({n, n, selfcal::pair_cost(a, a, params)});
  }
  const auto kept = selfcal::mask_select(refs, others, q, params);
  CHECK(kept.size() == 5);
}

TEST_CASE("calibrate_sensor is exact on noiseless views") {
  selfcal::CalibParams params;
  const auto pose = geom::Pose2D::from_deg(2.3, 0.7, 55.0);
  std::vector<selfcal::Trajectory> refs = {
      make_traj(1, 1, wander(400, 1.0 / 15.0, 0.8, 0.55, {3.5, 2.0}))};
  std::vector<selfcal::Trajectory> others = {transformed_view(refs[0], pose, 2)};
  const auto cal = selfcal::calibrate_sensor(refs, others, params);
  REQUIRE(cal.ok);
  CHECK((cal.pose.t - pose.t).norm() < 1e-6);
  CHECK(std::abs(geom::orientation_angle_deg(cal.pose.R) -
                 geom::orientation_angle_deg(pose.R)) < 1e-6);
  CHECK(cal.n_selected >= 1);
}

TEST_CASE("calibrate_sensor reports failure without overlap") {
  selfcal::CalibParams params;
  const auto a = make_traj(1, 1, wander(100, 1.0 / 15.0, 0.8, 0.55, {3.5, 2.0}), 0.0);
  const auto b = make_traj(2, 9, wander(100, 1.0 / 15.0, 0.8, 0.55, {3.5, 2.0}), 500.0);
  const auto cal = selfcal::calibrate_sensor({a}, {b}, params);
  CHECK(!cal.ok);
  CHECK(!cal.error.empty());
}

TEST_CASE("calibrate_network: reference identity, failures isolated") {
  selfcal::CalibParams params;
  const auto pose2 = geom::Pose2D::from_deg(1.0, 0.5, 30.0);
  const auto pose3 = geom::Pose2D::from_deg(-1.5, 1.0, -80.0);
  std::map<int, std::vector<selfcal::Trajectory>> trajs;
  trajs[1] = {make_traj(1, 1, wander(400, 1.0 / 15.0, 0.8, 0.55, {3.5, 2.0}))};
  trajs[2] = {transformed_view(trajs[1][0], pose2, 2, 0.0, 0.01, 3)};
  trajs[3] = {transformed_view(trajs[1][0], pose3, 3, 0.0, 0.01, 4)};
  trajs[4] = {};  // no data at all
  const auto result = selfcal::calibrate_network(trajs, params);
  CHECK(result.by_sensor.at(1).ok);
  CHECK(result.by_sensor.at(1).pose.t.norm() == 0.0);
  CHECK(result.by_sensor.at(2).ok);
  CHECK(result.by_sensor.at(3).ok);
  CHECK(!result.by_sensor.at(4).ok);
  CHECK((result.by_sensor.at(2).pose.t - pose2.t).norm() < 0.05);
  CHECK((result.by_sensor.at(3).pose.t - pose3.t).norm() < 0.05);

  std::map<int, std::vector<selfcal::Trajectory>> no_ref;
  no_ref[2] = trajs[2];
  CHECK_THROWS_AS(selfcal::calibrate_network(no_ref, params), std::invalid_argument);
}

TEST_CASE("trajectories_from_messages groups by sensor and track") {
  std::vector<track::TrackSetMsg> msgs;
  for (int k = 0; k < 5; ++k) {
    track::TrackSetMsg m;
    m.sensor_id = 1;
    m.stamp = 0.1 * (k + 1);
    track::TrackSetMsg::Entry e;
    e.id = 4;
    e.x << 1.0 + k, 2.0, 0, 0;
    m.tracks.push_back(e);
    if (k < 2) {
      e.id = 9;
      e.x << -1.0, -2.0 - k, 0, 0;
      m.tracks.push_back(e);
    }
    msgs.push_back(m);
  }
  const auto trajs = selfcal::trajectories_from_messages(msgs);
  REQUIRE(trajs.contains(1));
  REQUIRE(trajs.at(1).size() == 2);
  const auto& t4 = trajs.at(1)[0].track_id == 4 ? trajs.at(1)[0] : trajs.at(1)[1];
  CHECK(t4.seq.size() == 5);
}
