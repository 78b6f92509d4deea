#pragma once

// Self-calibration of a sensor network from trajectory logs: per-pair time
// alignment, cost-based track association, masking (exhaustive subset
// selection over the kept pairs) and a final stacked rigid fit. The
// estimated pose of sensor s maps its coordinates into the frame of the
// reference sensor (sensor 1).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "radfuse/assign.hpp"
#include "radfuse/geom.hpp"
#include "radfuse/track.hpp"

namespace radfuse::selfcal {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Trajectory {
  int sensor_id = 0;
  std::uint64_t track_id = 0;
  geom::PointSeq seq;
};

// Indices of time-aligned samples in two trajectories, strictly increasing
// in both, plus the mean absolute time shift over the matched pairs.
struct AlignedPair {
  std::vector<int> idx_a;
  std::vector<int> idx_b;
  double mean_shift = 0.0;

  int length() const { return static_cast<int>(idx_a.size()); }
};

struct CalibParams {
  double T_c = 1.0 / 15.0;    // fusion-slot duration; alignment window
  double A_self = 18.0;       // association-cost acceptance threshold
  int max_pairs = 5;          // masking cap on retained track pairs
  double min_overlap_s = 2.0; // pairs with K*T_c below this are unusable
  bool use_masking = true;
};

// Monotone one-to-one alignment: each a-sample is matched to the nearest
// remaining b-sample, matches farther apart than the window are dropped
// (on either side). Ties prefer the earlier b-sample.
inline AlignedPair time_align(const geom::PointSeq& a, const geom::PointSeq& b, double window) {
  AlignedPair out;
  double shift_sum = 0.0;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    while (j + 1 < b.size() && std::abs(b.t[j + 1] - a.t[i]) < std::abs(b.t[j] - a.t[i])) {
      ++j;
    }
    const double dt = std::abs(b.t[j] - a.t[i]);
    if (dt <= window) {
      out.idx_a.push_back(static_cast<int>(i));
      out.idx_b.push_back(static_cast<int>(j));
      shift_sum += dt;
      ++i;
      ++j;
    } else {
      ++i;
    }
  }
  if (!out.idx_a.empty()) out.mean_shift = shift_sum / out.idx_a.size();
  return out;
}

struct PairCost {
  double A = kInf;             // association cost; +inf marks an unusable pair
  geom::Pose2D pose;           // maps `other` coordinates into `ref` coordinates
  double xi = kInf;            // sum of LS residual norms
  AlignedPair aligned;
};

namespace detail {

inline double overlap_factor(int k, double t_c, double mean_shift) {
  return std::log(k * t_c) / (1.0 + mean_shift);
}

}  // namespace detail

// Association cost A = -rho(K, tau) / (1 + xi), where rho rewards long,
// well-synchronized overlaps and xi is the rigid-fit residual sum. Pairs
// whose overlap is too short to trust (or degenerate) get A = +inf.
inline PairCost pair_cost(const Trajectory& ref, const Trajectory& other,
                          const CalibParams& params) {
  PairCost out;
  out.aligned = time_align(ref.seq, other.seq, params.T_c);
  const int k = out.aligned.length();
  if (k < 2 || k * params.T_c < params.min_overlap_s) return out;

  std::vector<Eigen::Vector2d> src, dst;
  src.reserve(k);
  dst.reserve(k);
  for (int n = 0; n < k; ++n) {
    dst.push_back(ref.seq.p[out.aligned.idx_a[n]]);
    src.push_back(other.seq.p[out.aligned.idx_b[n]]);
  }
  try {
    const auto fit = geom::fit_rigid_transform(src, dst);
    out.pose = fit.pose;
    out.xi = fit.residual_sum;
  } catch (const geom::degenerate_geometry_error&) {
    return out;
  }
  out.A = -detail::overlap_factor(k, params.T_c, out.aligned.mean_shift) / (1.0 + out.xi);
  return out;
}

struct TrajPair {
  int idx_ref = -1;    // index into the reference trajectory list
  int idx_other = -1;  // index into the other sensor's trajectory list
  PairCost cost;
};

// Hungarian association over the full cost matrix, thresholded at A_self
// and capped at max_pairs (worst-cost pairs dropped first).
inline std::vector<TrajPair> associate_tracks(const std::vector<Trajectory>& refs,
                                              const std::vector<Trajectory>& others,
                                              const CalibParams& params) {
  std::vector<TrajPair> out;
  if (refs.empty() || others.empty()) return out;

  std::vector<std::vector<PairCost>> costs(refs.size(), std::vector<PairCost>(others.size()));
  Eigen::MatrixXd a(refs.size(), others.size());
  for (size_t i = 0; i < refs.size(); ++i) {
    for (size_t j = 0; j < others.size(); ++j) {
      costs[i][j] = pair_cost(refs[i], others[j], params);
      a(i, j) = std::isfinite(costs[i][j].A) ? costs[i][j].A : assign::forbidden;
    }
  }
  for (const auto& [i, j] : assign::solve_assignment(a).pairs) {
    if (costs[i][j].A <= params.A_self) {
      out.push_back({i, j, std::move(costs[i][j])});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TrajPair& x, const TrajPair& y) { return x.cost.A < y.cost.A; });
  if (static_cast<int>(out.size()) > params.max_pairs) {
    out.resize(params.max_pairs);
  }
  return out;
}

struct StackedFit {
  bool ok = false;
  geom::Pose2D pose;
  double A = kInf;
  double xi = kInf;
  int K = 0;
  double mean_shift = 0.0;
};

// Rigid fit over the concatenated aligned points of several pairs. Each
// pair keeps its own alignment; the composite mean shift is the
// length-weighted mean of the members' (equal to evaluating the formula
// on the concatenated timestamp sequences).
inline StackedFit stack_and_fit(const std::vector<Trajectory>& refs,
                                const std::vector<Trajectory>& others,
                                const std::vector<TrajPair>& pairs, const CalibParams& params) {
  StackedFit out;
  std::vector<Eigen::Vector2d> src, dst;
  double shift_sum = 0.0;
  for (const auto& pr : pairs) {
    const auto& al = pr.cost.aligned;
    const auto& ref = refs[pr.idx_ref];
    const auto& other = others[pr.idx_other];
    for (int n = 0; n < al.length(); ++n) {
      dst.push_back(ref.seq.p[al.idx_a[n]]);
      src.push_back(other.seq.p[al.idx_b[n]]);
    }
    shift_sum += al.mean_shift * al.length();
    out.K += al.length();
  }
  if (out.K < 2) return out;
  out.mean_shift = shift_sum / out.K;
  try {
    const auto fit = geom::fit_rigid_transform(src, dst);
    out.pose = fit.pose;
    out.xi = fit.residual_sum;
  } catch (const geom::degenerate_geometry_error&) {
    return out;
  }
  out.A = -detail::overlap_factor(out.K, params.T_c, out.mean_shift) / (1.0 + out.xi);
  out.ok = true;
  return out;
}

// Masking: evaluate the stacked cost of every non-empty subset of Q and
// keep the subset with the lowest cost. With |Q| <= max_pairs this is at
// most 2^max_pairs - 1 fits.
inline std::vector<TrajPair> mask_select(const std::vector<Trajectory>& refs,
                                         const std::vector<Trajectory>& others,
                                         const std::vector<TrajPair>& q,
                                         const CalibParams& params,
                                         StackedFit* best_fit = nullptr) {
  const int n = static_cast<int>(q.size());
  if (n == 0) return {};
  std::vector<TrajPair> best;
  StackedFit best_cost;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<TrajPair> subset;
    for (int b = 0; b < n; ++b) {
      if (mask & (1u << b)) subset.push_back(q[b]);
    }
    const auto fit = stack_and_fit(refs, others, subset, params);
    if (!fit.ok) continue;
    if (best.empty() || fit.A < best_cost.A) {
      best = std::move(subset);
      best_cost = fit;
    }
  }
  if (best_fit) *best_fit = best_cost;
  return best;
}

struct PairDiag {
  std::uint64_t ref_track_id = 0;
  std::uint64_t other_track_id = 0;
  double A = 0.0;
  double xi = 0.0;
  double mean_shift = 0.0;
  int K = 0;
  bool selected = false;
};

struct SensorCalibration {
  bool ok = false;
  geom::Pose2D pose;
  int n_candidates = 0;  // |Q| after thresholding and capping
  int n_selected = 0;    // pairs surviving the masking step
  double stacked_A = kInf;
  double stacked_xi = kInf;
  int stacked_K = 0;
  std::vector<PairDiag> pairs;
  std::string error;
};

inline SensorCalibration calibrate_sensor(const std::vector<Trajectory>& refs,
                                          const std::vector<Trajectory>& others,
                                          const CalibParams& params) {
  SensorCalibration out;
  auto q = associate_tracks(refs, others, params);
  out.n_candidates = static_cast<int>(q.size());
  if (q.empty()) {
    out.error = "no associable trajectory pairs";
    return out;
  }

  StackedFit fit;
  std::vector<TrajPair> selected;
  if (params.use_masking) {
    selected = mask_select(refs, others, q, params, &fit);
  } else {
    selected = q;
    fit = stack_and_fit(refs, others, selected, params);
  }
  if (selected.empty() || !fit.ok) {
    out.error = "degenerate stacked geometry";
    return out;
  }

  for (const auto& pr : q) {
    PairDiag d;
    d.ref_track_id = refs[pr.idx_ref].track_id;
    d.other_track_id = others[pr.idx_other].track_id;
    d.A = pr.cost.A;
    d.xi = pr.cost.xi;
    d.mean_shift = pr.cost.aligned.mean_shift;
    d.K = pr.cost.aligned.length();
    d.selected = std::any_of(selected.begin(), selected.end(), [&](const TrajPair& s) {
      return s.idx_ref == pr.idx_ref && s.idx_other == pr.idx_other;
    });
    out.pairs.push_back(d);
  }
  out.ok = true;
  out.pose = fit.pose;
  out.n_selected = static_cast<int>(selected.size());
  out.stacked_A = fit.A;
  out.stacked_xi = fit.xi;
  out.stacked_K = fit.K;
  return out;
}

struct CalibResult {
  std::map<int, SensorCalibration> by_sensor;  // includes sensor 1 (identity)

  std::optional<geom::Pose2D> pose_of(int sensor_id) const {
    auto it = by_sensor.find(sensor_id);
    if (it == by_sensor.end() || !it->second.ok) return std::nullopt;
    return it->second.pose;
  }
};

// Calibrates every sensor against sensor 1 independently. Per-sensor
// failures are recorded in the result and do not affect other sensors.
inline CalibResult calibrate_network(const std::map<int, std::vector<Trajectory>>& by_sensor,
                                     const CalibParams& params) {
  auto ref_it = by_sensor.find(1);
  if (ref_it == by_sensor.end()) {
    throw std::invalid_argument("calibrate_network: reference sensor 1 is missing");
  }
  CalibResult out;
  SensorCalibration identity;
  identity.ok = true;
  identity.pose = geom::Pose2D::identity();
  out.by_sensor[1] = identity;
  for (const auto& [sensor, trajs] : by_sensor) {
    if (sensor == 1) continue;
    out.by_sensor[sensor] = calibrate_sensor(ref_it->second, trajs, params);
  }
  return out;
}

// Groups per-sensor track messages into one trajectory per (sensor, track).
inline std::map<int, std::vector<Trajectory>> trajectories_from_messages(
    const std::vector<track::TrackSetMsg>& msgs) {
  std::map<int, std::map<std::uint64_t, Trajectory>> grouped;
  for (const auto& msg : msgs) {
    for (const auto& e : msg.tracks) {
      auto& traj = grouped[msg.sensor_id][e.id];
      traj.sensor_id = msg.sensor_id;
      traj.track_id = e.id;
      traj.seq.p.push_back(e.x.head<2>());
      traj.seq.t.push_back(msg.stamp);
    }
  }
  std::map<int, std::vector<Trajectory>> out;
  for (auto& [sensor, by_track] : grouped) {
    for (auto& [id, traj] : by_track) {
      if (traj.seq.size() >= 2) out[sensor].push_back(std::move(traj));
    }
  }
  return out;
}

}  // namespace radfuse::selfcal
