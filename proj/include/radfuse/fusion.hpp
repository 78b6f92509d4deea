#pragma once

// Fusion center: slotted intake of sensor track sets, conversion into the
// central frame, Mahalanobis association with information decorrelation,
// sensor-sensor / sensor-center fusion and central track lifecycle.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "radfuse/assign.hpp"
#include "radfuse/geom.hpp"
#include "radfuse/numerics.hpp"
#include "radfuse/track.hpp"

namespace radfuse::fusion {

struct FcParams {
  double T_c = 1.0 / 15.0;  // slot duration, s
  double A_th = 18.0;       // association gate on the Mahalanobis cost
  double T_th = -1.0;       // decorrelation recency window; <=0 means 1.3*T_c
  int m_hits = 3;
  int n_window = 5;
  double tau0 = 0.0;        // time of slot 0
  double q = 0.5;           // process-noise intensity shared with the sensors
  numerics::StabilizeParams stab{};

  double t_th() const { return T_th > 0 ? T_th : 1.3 * T_c; }
};

// Last sensor estimate fused into a central track, stored at fusion time
// and then predicted forward with the track each slot. Aging the cached
// common information is what keeps the decorrelated update a contraction:
// the subtracted precision decays under process noise, so a freshly
// measured sensor track always carries a positive net information gain.
struct FusedCacheEntry {
  std::uint64_t sensor_track_id = 0;
  Eigen::Vector4d x = Eigen::Vector4d::Zero();
  Eigen::Matrix4d C = Eigen::Matrix4d::Identity();
  double fused_at = 0.0;
};

struct CentralTrack {
  std::uint64_t id = 0;
  Eigen::Vector4d x = Eigen::Vector4d::Zero();
  Eigen::Matrix4d C = Eigen::Matrix4d::Identity();
  std::deque<bool> hit_history;
  bool confirmed = false;
  std::map<int, FusedCacheEntry> cache;  // sensor_id -> last fused estimate
};

struct Snapshot {
  int slot = 0;
  double t = 0.0;
  std::vector<track::TrackSetMsg::Entry> tracks;  // confirmed central tracks
};

struct StampedMsg {
  track::TrackSetMsg msg;
  double arrival = 0.0;
};

// Keeps, per sensor, the message whose timestamp is closest to the slot end.
inline std::map<int, track::TrackSetMsg> slot_select(const std::vector<StampedMsg>& in_slot,
                                                     double tau_m) {
  std::map<int, track::TrackSetMsg> out;
  std::map<int, double> best;
  for (const auto& sm : in_slot) {
    const double d = std::abs(tau_m - sm.msg.stamp);
    auto it = best.find(sm.msg.sensor_id);
    if (it == best.end() || d < it->second) {
      best[sm.msg.sensor_id] = d;
      out[sm.msg.sensor_id] = sm.msg;
    }
  }
  return out;
}

// Converts a sensor track into the central frame and propagates it to the
// slot time in one shot: x <- F_d (Rbar x + tbar), C <- F_d Rbar C Rbar' F_d'.
inline track::TrackSetMsg::Entry convert_track(const track::TrackSetMsg::Entry& e,
                                               const geom::Pose2D& pose, double tau_m,
                                               double stamp,
                                               const numerics::StabilizeParams& stab = {},
                                               numerics::StabilizeStats* stats = nullptr) {
  const double delta = tau_m - stamp;
  if (delta < 0) {
    throw std::invalid_argument("convert_track: message is stamped in the future");
  }
  const auto aug = geom::augment_pose(pose);
  const Eigen::Matrix4d f = track::cv_transition(delta);
  track::TrackSetMsg::Entry out;
  out.id = e.id;
  out.x = f * (aug.R * e.x + aug.t);
  out.C = numerics::stabilize(
      Eigen::Matrix4d(f * aug.R * e.C * aug.R.transpose() * f.transpose()), stab, stats);
  return out;
}

inline void predict_central(CentralTrack& tr, double t_c, const Eigen::Matrix4d& w,
                            const numerics::StabilizeParams& stab = {},
                            numerics::StabilizeStats* stats = nullptr) {
  const Eigen::Matrix4d f = track::cv_transition(t_c);
  tr.x = f * tr.x;
  tr.C = numerics::stabilize(Eigen::Matrix4d(f * tr.C * f.transpose() + w), stab, stats);
}

// Squared Mahalanobis distance with P = [C_i + C_j]^-1.
inline double mahalanobis(const Eigen::Vector4d& xi, const Eigen::Matrix4d& ci,
                          const Eigen::Vector4d& xj, const Eigen::Matrix4d& cj,
                          const numerics::StabilizeParams& stab = {},
                          numerics::StabilizeStats* stats = nullptr) {
  const Eigen::Matrix4d s = numerics::stabilize(Eigen::Matrix4d(ci + cj), stab, stats);
  const Eigen::Vector4d d = xi - xj;
  return d.dot(Eigen::LLT<Eigen::Matrix4d>(s).solve(d));
}

struct Decorrelated {
  Eigen::Vector4d x;
  Eigen::Matrix4d C;
};

// Removes the last-communicated information: x - xbar and
// (C^-1 - Cbar^-1)^-1, stabilized when the precision difference is not PD.
inline Decorrelated decorrelate(const Eigen::Vector4d& x, const Eigen::Matrix4d& c,
                                const Eigen::Vector4d& x_bar, const Eigen::Matrix4d& c_bar,
                                const numerics::StabilizeParams& stab = {},
                                numerics::StabilizeStats* stats = nullptr) {
  Decorrelated out;
  out.x = x - x_bar;
  const Eigen::Matrix4d p = numerics::inverse_spd(c, stab, stats);
  const Eigen::Matrix4d p_bar = numerics::inverse_spd(c_bar, stab, stats);
  out.C = numerics::inverse_spd(Eigen::Matrix4d(p - p_bar), stab, stats);
  return out;
}

// Precision-weighted combination of two uncorrelated estimates (Eq. of the
// information filter): C = (Pa + Pb)^-1, x = C (Pa xa + Pb xb).
inline Decorrelated fuse_ss(const Eigen::Vector4d& xa, const Eigen::Matrix4d& ca,
                            const Eigen::Vector4d& xb, const Eigen::Matrix4d& cb,
                            const numerics::StabilizeParams& stab = {},
                            numerics::StabilizeStats* stats = nullptr) {
  const Eigen::Matrix4d pa = numerics::inverse_spd(ca, stab, stats);
  const Eigen::Matrix4d pb = numerics::inverse_spd(cb, stab, stats);
  Decorrelated out;
  out.C = numerics::inverse_spd(Eigen::Matrix4d(pa + pb), stab, stats);
  out.x = out.C * (pa * xa + pb * xb);
  return out;
}

// Fuses an associated sensor track into a central track. If the pair was
// fused recently (within T_th) the stale copy of the sensor information is
// subtracted first; otherwise the tracks are treated as uncorrelated and
// the plain precision-weighted rule applies. The cache is refreshed with
// the sensor estimate used here in both branches.
inline void fuse_sc(CentralTrack& ct, const track::TrackSetMsg::Entry& st, int sensor_id,
                    double tau_m, const FcParams& params,
                    numerics::StabilizeStats* stats = nullptr) {
  const auto it = ct.cache.find(sensor_id);
  const bool recent = it != ct.cache.end() && it->second.sensor_track_id == st.id &&
                      (tau_m - it->second.fused_at) <= params.t_th();
  if (!recent) {
    const auto fused = fuse_ss(ct.x, ct.C, st.x, st.C, params.stab, stats);
    ct.x = fused.x;
    ct.C = fused.C;
  } else {
    const Eigen::Matrix4d pc = numerics::inverse_spd(ct.C, params.stab, stats);
    const Eigen::Matrix4d ps = numerics::inverse_spd(st.C, params.stab, stats);
    const Eigen::Matrix4d p_bar = numerics::inverse_spd(it->second.C, params.stab, stats);
    ct.C = numerics::inverse_spd(Eigen::Matrix4d(pc + ps - p_bar), params.stab, stats);
    ct.x = ct.C * (pc * ct.x + ps * st.x - p_bar * it->second.x);
  }
  ct.cache[sensor_id] = {st.id, st.x, st.C, tau_m};
}

struct ScPair {
  int central_idx = -1;
  int track_idx = -1;
  double cost = 0.0;
  bool reconfirmed = false;  // accepted in the prior-association stage
};

struct ScResult {
  std::vector<ScPair> pairs;
  std::vector<int> leftover_tracks;  // sensor-track indices with no association
};

// Two-stage sensor-to-center association for one sensor's track set.
// Stage 1 re-confirms prior pairs with the plain Mahalanobis cost; stage 2
// builds the cost matrix over the remainder, using decorrelated quantities
// for pairs fused within the last T_th seconds, and solves it.
inline ScResult associate_sc(const std::vector<CentralTrack>& central,
                             const std::vector<track::TrackSetMsg::Entry>& tracks, int sensor_id,
                             double tau_m, const FcParams& params,
                             numerics::StabilizeStats* stats = nullptr) {
  ScResult out;
  std::vector<char> central_used(central.size(), 0), track_used(tracks.size(), 0);

  struct Candidate {
    double d;
    int i, j;
  };
  std::vector<Candidate> prior;
  for (size_t i = 0; i < central.size(); ++i) {
    const auto it = central[i].cache.find(sensor_id);
    if (it == central[i].cache.end()) continue;
    for (size_t j = 0; j < tracks.size(); ++j) {
      if (tracks[j].id != it->second.sensor_track_id) continue;
      const double d = mahalanobis(central[i].x, central[i].C, tracks[j].x, tracks[j].C,
                                   params.stab, stats);
      if (d <= params.A_th) prior.push_back({d, static_cast<int>(i), static_cast<int>(j)});
    }
  }
  std::sort(prior.begin(), prior.end(), [](const Candidate& a, const Candidate& b) {
    return a.d != b.d ? a.d < b.d : std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });
  for (const auto& c : prior) {
    if (central_used[c.i] || track_used[c.j]) continue;
    central_used[c.i] = track_used[c.j] = 1;
    out.pairs.push_back({c.i, c.j, c.d, true});
  }

  std::vector<int> ci, tj;
  for (size_t i = 0; i < central.size(); ++i)
    if (!central_used[i]) ci.push_back(static_cast<int>(i));
  for (size_t j = 0; j < tracks.size(); ++j)
    if (!track_used[j]) tj.push_back(static_cast<int>(j));

  if (!ci.empty() && !tj.empty()) {
    Eigen::MatrixXd lambda(ci.size(), tj.size());
    for (size_t a = 0; a < ci.size(); ++a) {
      const auto& ct = central[ci[a]];
      const auto it = ct.cache.find(sensor_id);
      for (size_t b = 0; b < tj.size(); ++b) {
        const auto& st = tracks[tj[b]];
        const bool recent = it != ct.cache.end() && it->second.sensor_track_id == st.id &&
                            (tau_m - it->second.fused_at) <= params.t_th();
        if (recent) {
          const auto di = decorrelate(ct.x, ct.C, it->second.x, it->second.C, params.stab, stats);
          const auto dj = decorrelate(st.x, st.C, it->second.x, it->second.C, params.stab, stats);
          lambda(a, b) = mahalanobis(di.x, di.C, dj.x, dj.C, params.stab, stats);
        } else {
          lambda(a, b) = mahalanobis(ct.x, ct.C, st.x, st.C, params.stab, stats);
        }
      }
    }
    for (const auto& [a, b] : assign::solve_assignment(lambda).pairs) {
      if (lambda(a, b) <= params.A_th) {
        track_used[tj[b]] = 1;
        out.pairs.push_back({ci[a], tj[b], lambda(a, b), false});
      }
    }
  }

  for (size_t j = 0; j < tracks.size(); ++j)
    if (!track_used[j]) out.leftover_tracks.push_back(static_cast<int>(j));
  return out;
}

struct SsMember {
  int sensor_id = 0;
  track::TrackSetMsg::Entry entry;
};

struct SsGroup {
  std::vector<SsMember> members;       // ascending sensor id
  Eigen::Vector4d x = Eigen::Vector4d::Zero();
  Eigen::Matrix4d C = Eigen::Matrix4d::Identity();  // running fused estimate
};

// Sensor-to-sensor association of the leftover tracks, processed pairwise
// in ascending sensor order: groups formed from sensors seen so far are
// matched against the next sensor's tracks; sensor tracks from different
// sensors are treated as uncorrelated, so plain Mahalanobis costs apply.
inline std::vector<SsGroup> associate_ss(
    const std::map<int, std::vector<track::TrackSetMsg::Entry>>& leftovers, const FcParams& params,
    numerics::StabilizeStats* stats = nullptr) {
  std::vector<SsGroup> groups;
  for (const auto& [sensor_id, entries] : leftovers) {
    if (groups.empty()) {
      for (const auto& e : entries) {
        SsGroup g;
        g.members.push_back({sensor_id, e});
        g.x = e.x;
        g.C = e.C;
        groups.push_back(std::move(g));
      }
      continue;
    }
    Eigen::MatrixXd lambda(groups.size(), entries.size());
    for (size_t i = 0; i < groups.size(); ++i)
      for (size_t j = 0; j < entries.size(); ++j)
        lambda(i, j) =
            mahalanobis(groups[i].x, groups[i].C, entries[j].x, entries[j].C, params.stab, stats);
    std::vector<char> used(entries.size(), 0);
    for (const auto& [i, j] : assign::solve_assignment(lambda).pairs) {
      if (lambda(i, j) > params.A_th) continue;
      auto fused = fuse_ss(groups[i].x, groups[i].C, entries[j].x, entries[j].C, params.stab, stats);
      groups[i].x = fused.x;
      groups[i].C = fused.C;
      groups[i].members.push_back({sensor_id, entries[j]});
      used[j] = 1;
    }
    for (size_t j = 0; j < entries.size(); ++j) {
      if (used[j]) continue;
      SsGroup g;
      g.members.push_back({sensor_id, entries[j]});
      g.x = entries[j].x;
      g.C = entries[j].C;
      groups.push_back(std::move(g));
    }
  }
  return groups;
}

struct FcCounters {
  long messages_in = 0;
  long messages_selected = 0;
  long messages_late = 0;
  long messages_future = 0;
  long messages_unposed = 0;  // sensor without a calibrated pose
  long malformed = 0;
  long sc_fusions = 0;
  long ss_fusions = 0;
  numerics::StabilizeStats stab;
};

// The fusion center: a single logical consumer advancing slot by slot.
// Message ingress may happen from many producers; handoff is by value.
class FusionCenter {
 public:
  FusionCenter(FcParams params, std::map<int, geom::Pose2D> poses)
      : params_(params), poses_(std::move(poses)) {}

  void ingest(track::TrackSetMsg msg, double arrival) {
    ++counters_.messages_in;
    buffer_.push_back({std::move(msg), arrival});
  }

  double slot_end(int slot) const { return params_.tau0 + slot * params_.T_c; }
  int slot() const { return slot_; }
  const std::vector<CentralTrack>& tracks() const { return tracks_; }
  const FcCounters& counters() const { return counters_; }

  // Processes one slot: select freshest messages, convert, predict,
  // associate (SC then SS), fuse, manage the track set, emit a snapshot.
  Snapshot step() {
    ++slot_;
    const double tau_prev = slot_end(slot_ - 1);
    const double tau_m = slot_end(slot_);

    std::vector<StampedMsg> in_slot;
    std::erase_if(buffer_, [&](const StampedMsg& sm) {
      if (sm.arrival > tau_m) return false;
      if (sm.msg.stamp <= tau_prev) {
        ++counters_.messages_late;  // stale by more than a slot; discarded
      } else if (sm.msg.stamp > tau_m) {
        ++counters_.messages_future;
      } else {
        in_slot.push_back(sm);
      }
      return true;
    });
    auto selected = slot_select(in_slot, tau_m);
    counters_.messages_selected += static_cast<long>(selected.size());

    const Eigen::Matrix4d w = track::process_noise(params_.q, params_.T_c);
    const Eigen::Matrix4d f = track::cv_transition(params_.T_c);
    for (auto& tr : tracks_) {
      predict_central(tr, params_.T_c, w, params_.stab, &counters_.stab);
      for (auto& [sensor, e] : tr.cache) {
        e.x = f * e.x;
        e.C = numerics::stabilize(Eigen::Matrix4d(f * e.C * f.transpose() + w), params_.stab,
                                  &counters_.stab);
      }
    }

    std::vector<char> hit(tracks_.size(), 0);
    std::map<int, std::vector<track::TrackSetMsg::Entry>> leftovers;
    for (const auto& [sensor_id, msg] : selected) {
      try {
        const auto pose = poses_.find(sensor_id);
        if (pose == poses_.end()) {
          ++counters_.messages_unposed;
          continue;
        }
        std::vector<track::TrackSetMsg::Entry> converted;
        converted.reserve(msg.tracks.size());
        for (const auto& e : msg.tracks) {
          converted.push_back(
              convert_track(e, pose->second, tau_m, msg.stamp, params_.stab, &counters_.stab));
        }
        const auto sc = associate_sc(tracks_, converted, sensor_id, tau_m, params_, &counters_.stab);
        for (const auto& pr : sc.pairs) {
          fuse_sc(tracks_[pr.central_idx], converted[pr.track_idx], sensor_id, tau_m, params_,
                  &counters_.stab);
          hit[pr.central_idx] = 1;
          ++counters_.sc_fusions;
        }
        auto& lo = leftovers[sensor_id];
        for (int j : sc.leftover_tracks) lo.push_back(converted[j]);
      } catch (const std::exception&) {
        ++counters_.malformed;  // a bad message never aborts the slot
      }
    }

    manage_tracks(hit);

    for (const auto& g : associate_ss(leftovers, params_, &counters_.stab)) {
      if (g.members.size() > 1) ++counters_.ss_fusions;
      CentralTrack ct;
      ct.id = next_id_++;
      ct.x = g.x;
      ct.C = numerics::stabilize(g.C, params_.stab, &counters_.stab);
      ct.hit_history.push_back(true);
      ct.confirmed = params_.m_hits <= 1;
      for (const auto& m : g.members) {
        ct.cache[m.sensor_id] = {m.entry.id, m.entry.x, m.entry.C, tau_m};
      }
      tracks_.push_back(std::move(ct));
    }

    Snapshot snap;
    snap.slot = slot_;
    snap.t = tau_m;
    for (const auto& tr : tracks_) {
      if (tr.confirmed) snap.tracks.push_back({tr.id, tr.x, tr.C});
    }
    return snap;
  }

 private:
  // m/n maintenance: a track survives only while it was associated with a
  // sensor track in at least m of the last n slots (once n slots exist);
  // unconfirmed tracks that can no longer reach m hits are dropped early.
  void manage_tracks(const std::vector<char>& hit) {
    for (size_t i = 0; i < tracks_.size(); ++i) {
      auto& tr = tracks_[i];
      tr.hit_history.push_back(hit[i] != 0);
      while (static_cast<int>(tr.hit_history.size()) > params_.n_window) {
        tr.hit_history.pop_front();
      }
      if (!tr.confirmed) {
        int hits = 0;
        for (bool h : tr.hit_history) hits += h ? 1 : 0;
        if (hits >= params_.m_hits) tr.confirmed = true;
      }
    }
    std::erase_if(tracks_, [&](const CentralTrack& tr) {
      int hits = 0;
      for (bool h : tr.hit_history) hits += h ? 1 : 0;
      const int len = static_cast<int>(tr.hit_history.size());
      if (tr.confirmed) {
        return len >= params_.n_window && hits < params_.m_hits;
      }
      return hits + (params_.n_window - len) < params_.m_hits;
    });
  }

  FcParams params_;
  std::map<int, geom::Pose2D> poses_;
  std::vector<CentralTrack> tracks_;
  std::vector<StampedMsg> buffer_;
  std::uint64_t next_id_ = 1;
  int slot_ = 0;
  FcCounters counters_;
};

// Replays a recorded message stream through a fresh fusion center until
// t_end, returning every slot snapshot.
inline std::vector<Snapshot> replay(const FcParams& params,
                                    const std::map<int, geom::Pose2D>& poses,
                                    std::vector<StampedMsg> msgs, double t_end) {
  std::sort(msgs.begin(), msgs.end(), [](const StampedMsg& a, const StampedMsg& b) {
    return a.arrival != b.arrival ? a.arrival < b.arrival
                                  : a.msg.sensor_id < b.msg.sensor_id;
  });
  FusionCenter fc(params, poses);
  std::vector<Snapshot> out;
  size_t next = 0;
  for (int m = 1; params.tau0 + m * params.T_c <= t_end; ++m) {
    const double tau_m = params.tau0 + m * params.T_c;
    while (next < msgs.size() && msgs[next].arrival <= tau_m) {
      fc.ingest(msgs[next].msg, msgs[next].arrival);
      ++next;
    }
    out.push_back(fc.step());
  }
  return out;
}

}  // namespace radfuse::fusion
