#pragma once

// Deterministic, seedable synthetic world: target trajectories, per-sensor
// observation with FoV / range / occlusion / polar noise, frame-timing
// jitter and transport delay. All randomness flows from the scenario seed
// through named sub-streams, so identical seeds give identical runs.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "radfuse/fusion.hpp"
#include "radfuse/geom.hpp"
#include "radfuse/rng.hpp"
#include "radfuse/selfcal.hpp"
#include "radfuse/track.hpp"

namespace radfuse::sim {

inline constexpr double kGtSampleRate = 100.0;  // Hz
inline constexpr double kMaxTargetSpeed = 1.5;  // m/s

enum class PathKind { InLine, Parallel, Circular, Free, ParalDiag, VsInLine };

inline const char* to_string(PathKind k) {
  switch (k) {
    case PathKind::InLine: return "in-line";
    case PathKind::Parallel: return "parallel";
    case PathKind::Circular: return "circular";
    case PathKind::Free: return "free";
    case PathKind::ParalDiag: return "paral-diag";
    case PathKind::VsInLine: return "vs-in-line";
  }
  return "?";
}

inline PathKind path_kind_from_string(const std::string& s) {
  if (s == "in-line") return PathKind::InLine;
  if (s == "parallel") return PathKind::Parallel;
  if (s == "circular") return PathKind::Circular;
  if (s == "free") return PathKind::Free;
  if (s == "paral-diag") return PathKind::ParalDiag;
  if (s == "vs-in-line") return PathKind::VsInLine;
  throw std::invalid_argument("unknown trajectory kind: " + s);
}

struct TargetSpec {
  PathKind kind = PathKind::Free;
  double speed = 1.0;                      // m/s along the path
  Eigen::Vector2d a = {1.2, 2.0};          // segment endpoints (line kinds)
  Eigen::Vector2d b = {5.8, 2.0};
  Eigen::Vector2d center = {3.5, 2.0};     // circular
  double radius = 1.0;
  double period = 0.0;                     // circular; <=0 derives from speed
  double phase = 0.0;                      // m along the cycle / rad for circular
};

struct SensorSpec {
  int id = 1;
  geom::Pose2D pose;                       // sensor frame -> world frame
  double fov_half_deg = 60.0;
  double max_range = 8.0;
  double frame_period = 1.0 / 15.0;        // T_s
};

struct Scenario {
  double room_w = 7.0;
  double room_h = 4.0;
  double duration = 40.0;
  std::uint64_t seed = 1;
  std::vector<SensorSpec> sensors;
  std::vector<TargetSpec> targets;
};

struct SensorModel {
  double sigma_r = 0.05;          // m
  double sigma_theta_deg = 2.0;
  double p_detect = 1.0;
  double stamp_jitter = 0.003;    // s, truncated at T_s/4
  double delay_min = 0.002;       // transport delay bounds, s
  double delay_max = 0.020;
  double body_radius = 0.25;      // occlusion disk, m
};

// Ground-truth path sampled on a fixed 100 Hz grid.
struct GtPath {
  double dt = 1.0 / kGtSampleRate;
  std::vector<Eigen::Vector2d> p;

  Eigen::Vector2d at(double t) const {
    if (p.empty()) return Eigen::Vector2d::Zero();
    if (p.size() == 1) return p.front();
    const double s = std::clamp(t / dt, 0.0, static_cast<double>(p.size() - 1));
    const size_t i = std::min(static_cast<size_t>(s), p.size() - 2);
    const double f = s - static_cast<double>(i);
    return (1.0 - f) * p[i] + f * p[i + 1];
  }
};

namespace detail {

inline Eigen::Vector2d shuttle_pos(const TargetSpec& spec, double t) {
  const double len = (spec.b - spec.a).norm();
  const double cycle = 2.0 * len;
  double s = std::fmod(spec.phase + spec.speed * t, cycle);
  if (s < 0) s += cycle;
  const Eigen::Vector2d dir = (spec.b - spec.a) / len;
  if (s <= len) return spec.a + s * dir;
  return spec.b - (s - len) * dir;
}

inline Eigen::Vector2d circle_pos(const TargetSpec& spec, double t) {
  const double period = spec.period > 0 ? spec.period
                                        : 2.0 * std::numbers::pi * spec.radius / spec.speed;
  const double ang = spec.phase + 2.0 * std::numbers::pi * t / period;
  return spec.center + spec.radius * Eigen::Vector2d(std::cos(ang), std::sin(ang));
}

}  // namespace detail

// Deterministic path for one target. Free walks draw seeded waypoints; the
// other kinds are closed-form. Throws if the path leaves the room or the
// requested speed exceeds the bound.
inline GtPath gen_trajectory(const TargetSpec& spec, const Scenario& scenario, double duration,
                             std::uint64_t seed,
                             const std::vector<Eigen::Vector2d>& other_spawns = {}) {
  if (spec.speed <= 0 || spec.speed > kMaxTargetSpeed + 1e-12) {
    throw std::invalid_argument("gen_trajectory: target speed outside (0, 1.5] m/s");
  }
  GtPath path;
  const int n = static_cast<int>(std::llround(duration * kGtSampleRate)) + 1;
  path.p.reserve(n);

  if (spec.kind == PathKind::Free) {
    rng::Stream stream(seed);
    const double margin = 0.6;
    const double w = scenario.room_w, h = scenario.room_h;
    auto draw_point = [&] {
      return Eigen::Vector2d(stream.uniform(margin, w - margin),
                             stream.uniform(margin, h - margin));
    };
    Eigen::Vector2d cur = draw_point();
    for (int attempt = 0; attempt < 100; ++attempt) {
      const bool clear = std::all_of(other_spawns.begin(), other_spawns.end(),
                                     [&](const auto& s) { return (s - cur).norm() >= 0.5; });
      if (clear) break;
      cur = draw_point();
    }
    Eigen::Vector2d next = draw_point();
    while ((next - cur).norm() < 1.0) next = draw_point();
    double seg_left = (next - cur).norm();
    Eigen::Vector2d dir = (next - cur) / seg_left;
    const double step = spec.speed / kGtSampleRate;
    for (int i = 0; i < n; ++i) {
      path.p.push_back(cur);
      double advance = step;
      while (advance > 0) {
        if (seg_left > advance) {
          cur += advance * dir;
          seg_left -= advance;
          advance = 0;
        } else {
          cur = next;
          advance -= seg_left;
          next = draw_point();
          while ((next - cur).norm() < 1.0) next = draw_point();
          seg_left = (next - cur).norm();
          dir = (next - cur) / seg_left;
        }
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      const double t = i / kGtSampleRate;
      switch (spec.kind) {
        case PathKind::Circular:
          path.p.push_back(detail::circle_pos(spec, t));
          break;
        default:
          path.p.push_back(detail::shuttle_pos(spec, t));
          break;
      }
    }
  }

  for (const auto& pt : path.p) {
    if (pt.x() < 0 || pt.x() > scenario.room_w || pt.y() < 0 || pt.y() > scenario.room_h) {
      throw std::invalid_argument("gen_trajectory: path leaves the room");
    }
  }
  return path;
}

inline std::vector<GtPath> generate_paths(const Scenario& scenario) {
  if (scenario.sensors.empty()) throw std::invalid_argument("scenario: needs at least one sensor");
  if (std::none_of(scenario.sensors.begin(), scenario.sensors.end(),
                   [](const SensorSpec& s) { return s.id == 1; })) {
    throw std::invalid_argument("scenario: sensor 1 (the reference) is missing");
  }
  if (!(scenario.duration > 0)) throw std::invalid_argument("scenario: duration must be positive");
  std::vector<GtPath> paths;
  std::vector<Eigen::Vector2d> spawns;
  for (size_t i = 0; i < scenario.targets.size(); ++i) {
    paths.push_back(gen_trajectory(scenario.targets[i], scenario, scenario.duration,
                                   rng::derive_seed(scenario.seed, "trajectory", i), spawns));
    spawns.push_back(paths.back().p.front());
  }
  return paths;
}

// Visibility of one world point from a sensor: inside the FoV cone and
// range limit, and not behind another target's body disk.
inline bool target_visible(const SensorSpec& sensor, const std::vector<Eigen::Vector2d>& world_pts,
                           size_t idx, double body_radius) {
  const geom::Pose2D to_local = geom::inverse(sensor.pose);
  const Eigen::Vector2d p = to_local(world_pts[idx]);
  const double r = p.norm();
  if (r < 0.05 || r > sensor.max_range) return false;
  const double az = std::atan2(p.y(), p.x());
  if (std::abs(az) > geom::deg2rad(sensor.fov_half_deg)) return false;
  for (size_t j = 0; j < world_pts.size(); ++j) {
    if (j == idx) continue;
    const Eigen::Vector2d q = to_local(world_pts[j]);
    if (!(q.norm() < r)) continue;  // only strictly nearer targets block
    // distance from q to the segment [0, p]
    const double tproj = std::clamp(q.dot(p) / (r * r), 0.0, 1.0);
    if ((q - tproj * p).norm() < body_radius) return false;
  }
  return true;
}

// Per-target detections in the sensor's local frame at time t. Noise is
// drawn in polar coordinates (matching the measurement covariance used by
// the trackers) and detection coins are flipped per visible target.
inline std::vector<Eigen::Vector2d> observe(const Scenario& scenario,
                                            const std::vector<GtPath>& paths, size_t sensor_idx,
                                            double t, const SensorModel& model,
                                            rng::Stream& noise, rng::Stream& detect) {
  const auto& sensor = scenario.sensors.at(sensor_idx);
  const geom::Pose2D to_local = geom::inverse(sensor.pose);
  std::vector<Eigen::Vector2d> world_pts;
  world_pts.reserve(paths.size());
  for (const auto& path : paths) world_pts.push_back(path.at(t));

  std::vector<Eigen::Vector2d> out;
  for (size_t i = 0; i < world_pts.size(); ++i) {
    if (!target_visible(sensor, world_pts, i, model.body_radius)) continue;
    if (!(detect.uniform() < model.p_detect)) continue;
    const Eigen::Vector2d p = to_local(world_pts[i]);
    const double r = p.norm();
    const Eigen::Vector2d u_r = p / r;
    const Eigen::Vector2d u_t(-u_r.y(), u_r.x());
    const double cos_az = std::max(std::abs(u_r.x()), std::cos(geom::deg2rad(sensor.fov_half_deg)));
    const double sigma_t = geom::deg2rad(model.sigma_theta_deg) * r / cos_az;
    const double n_r = noise.gaussian(model.sigma_r);
    const double n_t = noise.gaussian(sigma_t);
    out.push_back(p + n_r * u_r + n_t * u_t);
  }
  return out;
}

struct MsgRec {
  track::TrackSetMsg msg;
  double arrival = 0.0;
};

// Runs every sensor tracker over jittered frame instants and returns all
// emitted messages with their (delayed) arrival times at the fusion center,
// sorted by arrival.
inline std::vector<MsgRec> simulate_sensors(const Scenario& scenario,
                                            const std::vector<GtPath>& paths,
                                            const SensorModel& model,
                                            const track::KFParams& kf) {
  std::vector<MsgRec> out;
  for (size_t si = 0; si < scenario.sensors.size(); ++si) {
    const auto& sensor = scenario.sensors[si];
    track::KFParams params = kf;
    params.sigma_r = model.sigma_r;
    params.sigma_theta_deg = model.sigma_theta_deg;
    params.fov_half_deg = sensor.fov_half_deg;
    track::SensorTracker tracker(sensor.id, params);

    rng::Stream timing(scenario.seed, "timing", sensor.id);
    rng::Stream noise(scenario.seed, "noise", sensor.id);
    rng::Stream detect(scenario.seed, "detect", sensor.id);
    rng::Stream delay(scenario.seed, "delay", sensor.id);

    const double t_s = sensor.frame_period;
    const double t0 = t_s / 4.0 + timing.uniform() * t_s;
    for (int k = 0;; ++k) {
      const double jitter =
          model.stamp_jitter > 0 ? timing.gaussian_trunc(model.stamp_jitter, t_s / 4.0) : 0.0;
      const double tau = t0 + k * t_s + jitter;
      if (tau > scenario.duration) break;
      const auto detections = observe(scenario, paths, si, tau, model, noise, detect);
      auto msg = tracker.step(detections, tau);
      const double arrival = tau + delay.uniform(model.delay_min, model.delay_max);
      out.push_back({std::move(msg), arrival});
    }
  }
  std::sort(out.begin(), out.end(), [](const MsgRec& a, const MsgRec& b) {
    return a.arrival != b.arrival ? a.arrival < b.arrival
                                  : a.msg.sensor_id < b.msg.sensor_id;
  });
  return out;
}

// Pose of sensor `id` relative to sensor 1, from the scenario ground truth.
inline geom::Pose2D gt_relative_pose(const Scenario& scenario, int id) {
  const SensorSpec* ref = nullptr;
  const SensorSpec* tgt = nullptr;
  for (const auto& s : scenario.sensors) {
    if (s.id == 1) ref = &s;
    if (s.id == id) tgt = &s;
  }
  if (!ref || !tgt) throw std::invalid_argument("gt_relative_pose: unknown sensor id");
  return geom::compose(geom::inverse(ref->pose), tgt->pose);
}

enum class CalibSource { GroundTruth, SelfCal, File };

inline const char* to_string(CalibSource s) {
  switch (s) {
    case CalibSource::GroundTruth: return "gt";
    case CalibSource::SelfCal: return "selfcal";
    case CalibSource::File: return "file";
  }
  return "?";
}

struct RunRecord {
  Scenario scenario;
  SensorModel model;
  track::KFParams kf;
  fusion::FcParams fc;
  CalibSource calib_source = CalibSource::GroundTruth;
  std::vector<GtPath> gt;
  std::vector<MsgRec> messages;
  selfcal::CalibResult calib;                  // present when calib_source == SelfCal
  std::map<int, geom::Pose2D> fusion_poses;   // poses the fusion center used
  std::vector<fusion::Snapshot> snapshots;
};

inline std::map<int, geom::Pose2D> poses_from_calib(const selfcal::CalibResult& calib) {
  std::map<int, geom::Pose2D> out;
  for (const auto& [sensor, cal] : calib.by_sensor) {
    if (cal.ok) out[sensor] = cal.pose;
  }
  return out;
}

// Full pipeline on one scenario: simulate the sensors, choose the poses
// (ground truth, self-calibration from this run's own logs, or external),
// then replay the message stream through the fusion center.
inline RunRecord run_scenario(const Scenario& scenario, const SensorModel& model,
                              const track::KFParams& kf, const fusion::FcParams& fc,
                              CalibSource source, const selfcal::CalibParams& calib_params = {},
                              const selfcal::CalibResult* external = nullptr) {
  RunRecord rec;
  rec.scenario = scenario;
  rec.model = model;
  rec.kf = kf;
  rec.fc = fc;
  rec.calib_source = source;
  rec.gt = generate_paths(scenario);
  rec.messages = simulate_sensors(scenario, rec.gt, model, kf);

  switch (source) {
    case CalibSource::GroundTruth: {
      for (const auto& s : scenario.sensors) rec.fusion_poses[s.id] = gt_relative_pose(scenario, s.id);
      break;
    }
    case CalibSource::SelfCal: {
      std::vector<track::TrackSetMsg> msgs;
      msgs.reserve(rec.messages.size());
      for (const auto& mr : rec.messages) msgs.push_back(mr.msg);
      auto trajs = selfcal::trajectories_from_messages(msgs);
      for (const auto& s : scenario.sensors) {
        if (!trajs.contains(s.id)) trajs[s.id] = {};
      }
      rec.calib = selfcal::calibrate_network(trajs, calib_params);
      rec.fusion_poses = poses_from_calib(rec.calib);
      break;
    }
    case CalibSource::File: {
      if (!external) throw std::invalid_argument("run_scenario: external calibration missing");
      rec.calib = *external;
      rec.fusion_poses = poses_from_calib(rec.calib);
      break;
    }
  }

  std::vector<fusion::StampedMsg> stream;
  stream.reserve(rec.messages.size());
  for (const auto& mr : rec.messages) stream.push_back({mr.msg, mr.arrival});
  rec.snapshots = fusion::replay(fc, rec.fusion_poses, std::move(stream), scenario.duration);
  return rec;
}

// Re-runs the fusion stage of a recorded run, optionally restricted to a
// subset of sensors and/or a different slot duration. Used by the rate
// sweep and the single-sensor baselines.
inline std::vector<fusion::Snapshot> replay_fusion(const RunRecord& rec,
                                                   const fusion::FcParams& fc,
                                                   const std::vector<int>* sensor_subset = nullptr) {
  std::vector<fusion::StampedMsg> stream;
  for (const auto& mr : rec.messages) {
    if (sensor_subset &&
        std::find(sensor_subset->begin(), sensor_subset->end(), mr.msg.sensor_id) ==
            sensor_subset->end()) {
      continue;
    }
    stream.push_back({mr.msg, mr.arrival});
  }
  return fusion::replay(fc, rec.fusion_poses, std::move(stream), rec.scenario.duration);
}

// ---------------------------------------------------------------------------
// Presets: the two deployment setups and six trajectory families used by the
// scenario generator. Setup 1 places sensors at the wall midpoints (1 and 3
// facing each other, 2 and 4 perpendicular); setup 2 uses the corners.

inline std::vector<SensorSpec> preset_sensors(int setup, int n_sensors) {
  if (n_sensors < 1 || n_sensors > 4) {
    throw std::invalid_argument("preset_sensors: sensor count must be in [1, 4]");
  }
  std::vector<SensorSpec> all;
  if (setup == 1) {
    all = {
        {1, geom::Pose2D::from_deg(0.15, 2.0, 0.0)},
        {2, geom::Pose2D::from_deg(3.5, 0.15, 90.0)},
        {3, geom::Pose2D::from_deg(6.85, 2.0, 180.0)},
        {4, geom::Pose2D::from_deg(3.5, 3.85, -90.0)},
    };
  } else if (setup == 2) {
    all = {
        {1, geom::Pose2D::from_deg(0.3, 0.3, 45.0)},
        {2, geom::Pose2D::from_deg(6.7, 0.3, 135.0)},
        {3, geom::Pose2D::from_deg(6.7, 3.7, -135.0)},
        {4, geom::Pose2D::from_deg(0.3, 3.7, -45.0)},
    };
  } else {
    throw std::invalid_argument("preset_sensors: setup must be 1 or 2");
  }
  all.resize(n_sensors);
  return all;
}

inline std::vector<TargetSpec> preset_targets(PathKind kind, int n_targets, double speed) {
  if (n_targets < 1 || n_targets > 5) {
    throw std::invalid_argument("preset_targets: target count must be in [1, 5]");
  }
  std::vector<TargetSpec> out(n_targets);
  const double mid = (n_targets - 1) / 2.0;
  for (int i = 0; i < n_targets; ++i) {
    TargetSpec& t = out[i];
    t.kind = kind;
    t.speed = speed;
    switch (kind) {
      case PathKind::InLine:
        t.a = {1.2, 2.0};
        t.b = {5.8, 2.0};
        t.phase = i * 1.0;
        break;
      case PathKind::Parallel:
        t.a = {1.2, 2.0 + (i - mid) * 0.7};
        t.b = {5.8, 2.0 + (i - mid) * 0.7};
        t.phase = 0.0;
        break;
      case PathKind::ParalDiag:
        t.a = {1.2, 2.0 + (i - mid) * 0.7};
        t.b = {5.8, 2.0 + (i - mid) * 0.7};
        t.phase = i * 1.8;
        break;
      case PathKind::Circular: {
        t.center = {3.5, 2.0};
        t.radius = 0.7 + 0.4 * i;
        const double r_max = 0.7 + 0.4 * (n_targets - 1);
        t.period = 2.0 * std::numbers::pi * r_max / speed;
        t.speed = 2.0 * std::numbers::pi * t.radius / t.period;
        t.phase = 0.0;
        break;
      }
      case PathKind::VsInLine:
        t.a = {1.2, 2.0};
        t.b = {5.8, 2.0};
        t.phase = (i % 2 == 0) ? i * 0.6 : (5.8 - 1.2) + (i - 1) * 0.6;
        break;
      case PathKind::Free:
        break;
    }
  }
  return out;
}

inline Scenario make_preset_scenario(PathKind kind, int setup, int n_targets, int n_sensors,
                                     double duration = 40.0, double speed = 1.0,
                                     std::uint64_t seed = 1) {
  Scenario sc;
  sc.duration = duration;
  sc.seed = seed;
  sc.sensors = preset_sensors(setup, n_sensors);
  sc.targets = preset_targets(kind, n_targets, speed);
  return sc;
}

}  // namespace radfuse::sim
