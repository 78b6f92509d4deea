#pragma once

// Scoring: CLEAR-MOT tracking metrics against ground truth and
// calibration pose errors.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "radfuse/assign.hpp"
#include "radfuse/geom.hpp"
#include "radfuse/selfcal.hpp"
#include "radfuse/sim.hpp"

namespace radfuse::eval {

struct MotReport {
  double mota = 0.0;
  std::optional<double> motp;  // defined only when at least one match exists
  long misses = 0;
  long false_positives = 0;
  long switches = 0;
  long gt_total = 0;
  long matches = 0;
};

struct Frame {
  double t = 0.0;
  struct Obj {
    long id = 0;
    Eigen::Vector2d p = Eigen::Vector2d::Zero();
  };
  std::vector<Obj> objects;
};

struct EvalParams {
  double gate = 0.5;     // CLEAR match gate, m
  double warmup_s = 2.0; // slots before this are not scored
};

// CLEAR-MOT over two frame sequences on a common grid: matches from the
// previous frame are kept while still within the gate, the remainder is
// matched by Hungarian assignment on Euclidean distance, and an identity
// switch is counted whenever a ground-truth object changes its estimate id.
inline MotReport mota_motp(const std::vector<Frame>& gt, const std::vector<Frame>& est,
                           double gate) {
  if (gt.size() != est.size()) {
    throw std::invalid_argument("mota_motp: frame grids differ in length");
  }
  MotReport rep;
  double dist_sum = 0.0;
  std::map<long, long> prev_match;     // gt id -> est id in the previous frame
  std::map<long, long> last_known;     // gt id -> last matched est id ever

  for (size_t f = 0; f < gt.size(); ++f) {
    const auto& g = gt[f].objects;
    const auto& e = est[f].objects;
    rep.gt_total += static_cast<long>(g.size());

    std::vector<int> g_open(g.size()), e_open;
    std::vector<char> e_used(e.size(), 0);
    std::map<long, long> match;  // gt id -> est id this frame

    // carry over still-valid matches
    std::vector<char> g_done(g.size(), 0);
    for (size_t i = 0; i < g.size(); ++i) {
      auto it = prev_match.find(g[i].id);
      if (it == prev_match.end()) continue;
      for (size_t j = 0; j < e.size(); ++j) {
        if (e_used[j] || e[j].id != it->second) continue;
        if ((g[i].p - e[j].p).norm() <= gate) {
          match[g[i].id] = e[j].id;
          dist_sum += (g[i].p - e[j].p).norm();
          ++rep.matches;
          g_done[i] = 1;
          e_used[j] = 1;
        }
        break;
      }
    }

    std::vector<int> gi, ej;
    for (size_t i = 0; i < g.size(); ++i)
      if (!g_done[i]) gi.push_back(static_cast<int>(i));
    for (size_t j = 0; j < e.size(); ++j)
      if (!e_used[j]) ej.push_back(static_cast<int>(j));
    if (!gi.empty() && !ej.empty()) {
      Eigen::MatrixXd costs(gi.size(), ej.size());
      for (size_t a = 0; a < gi.size(); ++a)
        for (size_t b = 0; b < ej.size(); ++b) {
          const double d = (g[gi[a]].p - e[ej[b]].p).norm();
          costs(a, b) = d <= gate ? d : assign::forbidden;
        }
      for (const auto& [a, b] : assign::solve_assignment(costs).pairs) {
        match[g[gi[a]].id] = e[ej[b]].id;
        dist_sum += costs(a, b);
        ++rep.matches;
        g_done[gi[a]] = 1;
        e_used[ej[b]] = 1;
      }
    }

    for (size_t i = 0; i < g.size(); ++i)
      if (!g_done[i]) ++rep.misses;
    for (size_t j = 0; j < e.size(); ++j)
      if (!e_used[j]) ++rep.false_positives;

    for (const auto& [gid, eid] : match) {
      auto it = last_known.find(gid);
      if (it != last_known.end() && it->second != eid) ++rep.switches;
      last_known[gid] = eid;
    }
    prev_match = std::move(match);
  }

  if (rep.gt_total == 0) {
    throw std::invalid_argument("mota_motp: ground truth is empty, metrics undefined");
  }
  rep.mota = 1.0 - static_cast<double>(rep.misses + rep.false_positives + rep.switches) /
                       static_cast<double>(rep.gt_total);
  if (rep.matches > 0) rep.motp = dist_sum / static_cast<double>(rep.matches);
  return rep;
}

struct CalibReport {
  struct Entry {
    int sensor = 0;
    bool present = false;
    double position_error_m = 0.0;
    double orientation_error_deg = 0.0;
  };
  std::vector<Entry> sensors;  // every non-reference sensor of the scenario
};

inline double wrap_angle_deg(double deg) {
  deg = std::fmod(deg, 360.0);
  if (deg > 180.0) deg -= 360.0;
  if (deg <= -180.0) deg += 360.0;
  return deg;
}

// Per-sensor pose error of an estimated calibration against the scenario
// ground truth (relative to sensor 1). Missing sensors are reported absent.
inline CalibReport calib_errors(const selfcal::CalibResult& est, const sim::Scenario& scenario) {
  CalibReport rep;
  for (const auto& s : scenario.sensors) {
    if (s.id == 1) continue;
    CalibReport::Entry entry;
    entry.sensor = s.id;
    const auto pose = est.pose_of(s.id);
    if (pose) {
      const geom::Pose2D gt = sim::gt_relative_pose(scenario, s.id);
      entry.present = true;
      entry.position_error_m = (pose->t - gt.t).norm();
      entry.orientation_error_deg = std::abs(wrap_angle_deg(
          geom::orientation_angle_deg(pose->R) - geom::orientation_angle_deg(gt.R)));
    }
    rep.sensors.push_back(entry);
  }
  return rep;
}

// Builds the evaluation grid for a recorded run: one frame per fusion
// snapshot after the warm-up, with ground truth interpolated at the slot
// time and expressed in the fusion (sensor 1) frame. A ground-truth target
// counts only while it is inside at least one sensor's field of view.
inline std::pair<std::vector<Frame>, std::vector<Frame>> frames_from_record(
    const sim::RunRecord& rec, const std::vector<fusion::Snapshot>& snapshots,
    const EvalParams& params) {
  const auto ref = std::find_if(rec.scenario.sensors.begin(), rec.scenario.sensors.end(),
                                [](const sim::SensorSpec& s) { return s.id == 1; });
  if (ref == rec.scenario.sensors.end()) {
    throw std::invalid_argument("frames_from_record: reference sensor 1 missing");
  }
  const geom::Pose2D world_to_fc = geom::inverse(ref->pose);
  std::vector<Frame> gt_frames, est_frames;
  for (const auto& snap : snapshots) {
    if (snap.t < params.warmup_s) continue;
    Frame gf, ef;
    gf.t = ef.t = snap.t;
    std::vector<Eigen::Vector2d> world_pts;
    for (const auto& path : rec.gt) world_pts.push_back(path.at(snap.t));
    for (size_t i = 0; i < world_pts.size(); ++i) {
      const bool covered = std::any_of(
          rec.scenario.sensors.begin(), rec.scenario.sensors.end(), [&](const sim::SensorSpec& s) {
            const Eigen::Vector2d p = geom::inverse(s.pose)(world_pts[i]);
            const double r = p.norm();
            return r >= 0.05 && r <= s.max_range &&
                   std::abs(std::atan2(p.y(), p.x())) <= geom::deg2rad(s.fov_half_deg);
          });
      if (!covered) continue;
      gf.objects.push_back({static_cast<long>(i), world_to_fc(world_pts[i])});
    }
    for (const auto& tr : snap.tracks) {
      ef.objects.push_back({static_cast<long>(tr.id), tr.x.head<2>()});
    }
    gt_frames.push_back(std::move(gf));
    est_frames.push_back(std::move(ef));
  }
  return {std::move(gt_frames), std::move(est_frames)};
}

inline MotReport score_record(const sim::RunRecord& rec,
                              const std::vector<fusion::Snapshot>& snapshots,
                              const EvalParams& params) {
  auto [gt, est] = frames_from_record(rec, snapshots, params);
  return mota_motp(gt, est, params.gate);
}

inline MotReport score_record(const sim::RunRecord& rec, const EvalParams& params) {
  return score_record(rec, rec.snapshots, params);
}

}  // namespace radfuse::eval
