#pragma once

// Sensor-local constant-velocity Kalman tracking: per-frame detections in
// the sensor's own frame are turned into timestamped track-set messages.
// State is [x, y, vx, vy]; only position is observed.

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "radfuse/assign.hpp"
#include "radfuse/geom.hpp"
#include "radfuse/numerics.hpp"

namespace radfuse::track {

struct KFParams {
  double q = 0.5;               // white-acceleration intensity, m^2/s^3
  double sigma_r = 0.05;        // radial measurement std, m
  double sigma_theta_deg = 2.0; // azimuth measurement std, deg
  double fov_half_deg = 60.0;   // cap for the tangential-noise growth off boresight
  double gate_d = 0.8;          // detection-association gate, m
  int m_hits = 3;
  int n_window = 5;
  double init_vel_var = 2.25;   // (1.5 m/s)^2
  numerics::StabilizeParams stab{};
};

inline Eigen::Matrix4d cv_transition(double dt) {
  if (dt < 0) throw std::invalid_argument("cv_transition: negative time step");
  Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
  f(0, 2) = dt;
  f(1, 3) = dt;
  return f;
}

// Process noise of the white-acceleration CV model with intensity q.
inline Eigen::Matrix4d process_noise(double q, double dt) {
  if (dt < 0) throw std::invalid_argument("process_noise: negative time step");
  const double dt2 = dt * dt, dt3 = dt2 * dt;
  Eigen::Matrix4d w = Eigen::Matrix4d::Zero();
  w(0, 0) = w(1, 1) = dt3 / 3.0;
  w(2, 2) = w(3, 3) = dt;
  w(0, 2) = w(2, 0) = dt2 / 2.0;
  w(1, 3) = w(3, 1) = dt2 / 2.0;
  return q * w;
}

inline Eigen::Matrix<double, 2, 4> observation_matrix() {
  Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
  h(0, 0) = 1.0;
  h(1, 1) = 1.0;
  return h;
}

// Position-dependent measurement covariance, built in sensor polar
// coordinates and rotated to Cartesian: sigma_r along the range direction,
// sigma_theta * r / cos(theta) tangentially, with cos(theta) capped at the
// FoV edge. Radar azimuth resolution degrades off boresight.
inline Eigen::Matrix2d measurement_covariance(const Eigen::Vector2d& z_local, double sigma_r,
                                              double sigma_theta_deg, double fov_half_deg) {
  const double r = z_local.norm();
  Eigen::Vector2d u_r(1.0, 0.0);
  if (r > 1e-12) u_r = z_local / r;
  const Eigen::Vector2d u_t(-u_r.y(), u_r.x());
  const double cos_az =
      std::max(std::abs(u_r.x()), std::cos(geom::deg2rad(fov_half_deg)));
  const double sigma_t = geom::deg2rad(sigma_theta_deg) * r / cos_az;
  Eigen::Matrix2d v = sigma_r * sigma_r * (u_r * u_r.transpose()) +
                      sigma_t * sigma_t * (u_t * u_t.transpose());
  return 0.5 * (v + v.transpose());
}

struct SensorTrack {
  std::uint64_t id = 0;
  Eigen::Vector4d x = Eigen::Vector4d::Zero();
  Eigen::Matrix4d C = Eigen::Matrix4d::Identity();
  double last_update = 0.0;
  std::deque<bool> hit_history;  // most recent at the back, length <= n_window
  int consecutive_misses = 0;
  bool confirmed = false;
};

struct TrackSetMsg {
  struct Entry {
    std::uint64_t id = 0;
    Eigen::Vector4d x = Eigen::Vector4d::Zero();
    Eigen::Matrix4d C = Eigen::Matrix4d::Identity();
  };
  int sensor_id = 0;
  double stamp = 0.0;
  std::vector<Entry> tracks;
};

inline void kf_predict(SensorTrack& tr, double dt, const Eigen::Matrix4d& w,
                       const numerics::StabilizeParams& stab = {},
                       numerics::StabilizeStats* stats = nullptr) {
  const Eigen::Matrix4d f = cv_transition(dt);
  tr.x = f * tr.x;
  tr.C = numerics::stabilize(f * tr.C * f.transpose() + w, stab, stats);
}

inline void kf_update(SensorTrack& tr, const Eigen::Vector2d& z, const Eigen::Matrix2d& v,
                      const numerics::StabilizeParams& stab = {},
                      numerics::StabilizeStats* stats = nullptr) {
  const auto h = observation_matrix();
  const Eigen::Matrix2d s = numerics::stabilize(
      Eigen::Matrix2d(h * tr.C * h.transpose() + v), stab, stats);
  const Eigen::Matrix<double, 4, 2> k = tr.C * h.transpose() * numerics::inverse_spd(s, stab);
  tr.x += k * (z - h * tr.x);
  // Joseph form keeps the posterior symmetric PSD before stabilization.
  const Eigen::Matrix4d ikh = Eigen::Matrix4d::Identity() - k * h;
  tr.C = numerics::stabilize(
      Eigen::Matrix4d(ikh * tr.C * ikh.transpose() + k * v * k.transpose()), stab, stats);
}

// One tracker instance per sensor; single-writer.
class SensorTracker {
 public:
  SensorTracker(int sensor_id, KFParams params) : sensor_id_(sensor_id), params_(params) {}

  // Advances the tracker to time tau and returns the message holding all
  // confirmed tracks. tau must strictly increase between calls.
  TrackSetMsg step(const std::vector<Eigen::Vector2d>& detections, double tau) {
    if (has_stepped_ && !(tau > last_tau_)) {
      throw std::logic_error("SensorTracker::step: timestamps must strictly increase");
    }
    const double dt = has_stepped_ ? tau - last_tau_ : 0.0;
    last_tau_ = tau;
    has_stepped_ = true;

    const Eigen::Matrix4d w = process_noise(params_.q, dt);
    for (auto& tr : tracks_) kf_predict(tr, dt, w, params_.stab, &stats_);

    // Gated nearest assignment between predicted tracks and detections.
    Eigen::MatrixXd costs(tracks_.size(), detections.size());
    for (size_t i = 0; i < tracks_.size(); ++i) {
      for (size_t j = 0; j < detections.size(); ++j) {
        const double d = (tracks_[i].x.head<2>() - detections[j]).norm();
        costs(i, j) = d <= params_.gate_d ? d : assign::forbidden;
      }
    }
    const auto matches = assign::solve_assignment(costs);

    std::vector<char> track_hit(tracks_.size(), 0), det_used(detections.size(), 0);
    for (const auto& [i, j] : matches.pairs) {
      const Eigen::Matrix2d v = measurement_covariance(
          detections[j], params_.sigma_r, params_.sigma_theta_deg, params_.fov_half_deg);
      kf_update(tracks_[i], detections[j], v, params_.stab, &stats_);
      tracks_[i].last_update = tau;
      track_hit[i] = 1;
      det_used[j] = 1;
    }

    for (size_t i = 0; i < tracks_.size(); ++i) {
      auto& tr = tracks_[i];
      tr.hit_history.push_back(track_hit[i] != 0);
      while (static_cast<int>(tr.hit_history.size()) > params_.n_window) {
        tr.hit_history.pop_front();
      }
      tr.consecutive_misses = track_hit[i] ? 0 : tr.consecutive_misses + 1;
      if (!tr.confirmed) {
        int hits = 0;
        for (bool h : tr.hit_history) hits += h ? 1 : 0;
        if (hits >= params_.m_hits) tr.confirmed = true;
      }
    }
    const int max_misses = params_.n_window - params_.m_hits + 1;
    std::erase_if(tracks_, [&](const SensorTrack& tr) {
      return tr.consecutive_misses >= max_misses;
    });

    for (size_t j = 0; j < detections.size(); ++j) {
      if (det_used[j]) continue;
      SensorTrack tr;
      tr.id = next_id_++;
      tr.x.head<2>() = detections[j];
      const Eigen::Matrix2d v = measurement_covariance(
          detections[j], params_.sigma_r, params_.sigma_theta_deg, params_.fov_half_deg);
      tr.C = Eigen::Matrix4d::Zero();
      tr.C.topLeftCorner<2, 2>() = v + 1e-4 * Eigen::Matrix2d::Identity();
      tr.C(2, 2) = tr.C(3, 3) = params_.init_vel_var;
      tr.last_update = tau;
      tr.hit_history.push_back(true);
      tr.confirmed = params_.m_hits <= 1;
      tracks_.push_back(std::move(tr));
    }

    TrackSetMsg msg;
    msg.sensor_id = sensor_id_;
    msg.stamp = tau;
    for (const auto& tr : tracks_) {
      if (tr.confirmed) msg.tracks.push_back({tr.id, tr.x, tr.C});
    }
    return msg;
  }

  const std::vector<SensorTrack>& tracks() const { return tracks_; }
  const numerics::StabilizeStats& stabilize_stats() const { return stats_; }

 private:
  int sensor_id_;
  KFParams params_;
  std::vector<SensorTrack> tracks_;
  std::uint64_t next_id_ = 1;
  double last_tau_ = 0.0;
  bool has_stepped_ = false;
  numerics::StabilizeStats stats_;
};

}  // namespace radfuse::track
