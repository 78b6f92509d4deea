#pragma once

// 2D rigid transformations: representation, application, closed-form
// least-squares fitting (SVD/Procrustes) and orientation-angle extraction.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace radfuse::geom {

struct degenerate_geometry_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

inline Eigen::Matrix2d rotation2d(double angle_rad) {
  Eigen::Matrix2d r;
  r << std::cos(angle_rad), -std::sin(angle_rad), std::sin(angle_rad), std::cos(angle_rad);
  return r;
}

// A sensor's reference frame: translation (m) plus a proper 2x2 rotation.
struct Pose2D {
  Eigen::Vector2d t = Eigen::Vector2d::Zero();
  Eigen::Matrix2d R = Eigen::Matrix2d::Identity();

  static Pose2D identity() { return {}; }
  static Pose2D from_deg(double x, double y, double theta_deg) {
    return {Eigen::Vector2d(x, y), rotation2d(deg2rad(theta_deg))};
  }

  bool is_valid(double tol = 1e-9) const {
    const double ortho = (R.transpose() * R - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(R.determinant() - 1.0) <= tol;
  }

  Eigen::Vector2d operator()(const Eigen::Vector2d& p) const { return R * p + t; }
};

inline Pose2D inverse(const Pose2D& p) {
  Pose2D out;
  out.R = p.R.transpose();
  out.t = -(p.R.transpose() * p.t);
  return out;
}

// compose(a, b): apply b first, then a.
inline Pose2D compose(const Pose2D& a, const Pose2D& b) {
  Pose2D out;
  out.R = a.R * b.R;
  out.t = a.R * b.t + a.t;
  return out;
}

// Ordered positions with strictly increasing timestamps.
struct PointSeq {
  std::vector<Eigen::Vector2d> p;
  std::vector<double> t;

  size_t size() const { return p.size(); }

  void validate() const {
    if (p.size() != t.size()) {
      throw std::invalid_argument("PointSeq: positions and timestamps differ in length");
    }
    for (size_t i = 1; i < t.size(); ++i) {
      if (!(t[i] > t[i - 1])) {
        throw std::invalid_argument("PointSeq: timestamps must be strictly increasing");
      }
    }
  }
};

inline std::vector<Eigen::Vector2d> apply_pose(const Pose2D& pose,
                                               std::span<const Eigen::Vector2d> pts) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(pose(p));
  return out;
}

// Signed rotation angle in degrees, in (-180, 180]. The magnitude always
// agrees with acos(trace(R)/2); the sign comes from the off-diagonal term.
inline double orientation_angle_deg(const Eigen::Matrix2d& r) {
  double deg = rad2deg(std::atan2(r(1, 0), r(0, 0)));
  if (deg <= -180.0) deg += 360.0;
  return deg;
}

struct RigidFit {
  Pose2D pose;
  double residual_sum = 0.0;  // sum over points of the Euclidean residual norm
};

// Least-squares rigid fit: the pose minimizing the squared residual sum of
// (R*src_k + t) - dst_k over proper rotations, solved in closed form via
// SVD of the 2x2 cross-covariance. Reflections are excluded by
// sign-correcting the smallest singular direction. Collinear source sets
// are accepted; a single repeated point is not.
inline RigidFit fit_rigid_transform(std::span<const Eigen::Vector2d> src,
                                    std::span<const Eigen::Vector2d> dst) {
  if (src.size() != dst.size()) {
    throw std::invalid_argument("fit_rigid_transform: point counts differ");
  }
  const size_t k = src.size();
  if (k < 2) {
    throw degenerate_geometry_error("fit_rigid_transform: need at least 2 points");
  }
  Eigen::Vector2d mu_src = Eigen::Vector2d::Zero();
  Eigen::Vector2d mu_dst = Eigen::Vector2d::Zero();
  for (size_t i = 0; i < k; ++i) {
    mu_src += src[i];
    mu_dst += dst[i];
  }
  mu_src /= static_cast<double>(k);
  mu_dst /= static_cast<double>(k);

  double spread = 0.0;
  Eigen::Matrix2d cross = Eigen::Matrix2d::Zero();
  for (size_t i = 0; i < k; ++i) {
    const Eigen::Vector2d a = src[i] - mu_src;
    const Eigen::Vector2d b = dst[i] - mu_dst;
    spread = std::max(spread, a.norm());
    cross += b * a.transpose();
  }
  if (spread <= 1e-9 * (1.0 + mu_src.norm())) {
    throw degenerate_geometry_error("fit_rigid_transform: source points are coincident");
  }

  Eigen::JacobiSVD<Eigen::Matrix2d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double sign = ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) ? -1.0 : 1.0;
  RigidFit fit;
  fit.pose.R = svd.matrixU() * Eigen::Vector2d(1.0, sign).asDiagonal() * svd.matrixV().transpose();
  fit.pose.t = mu_dst - fit.pose.R * mu_src;
  for (size_t i = 0; i < k; ++i) {
    fit.residual_sum += (fit.pose.R * src[i] + fit.pose.t - dst[i]).norm();
  }
  return fit;
}

// State-space lift of a planar pose: positions are rotated and translated,
// velocities only rotated.
struct AugmentedPose {
  Eigen::Matrix4d R;  // blkdiag(R, R)
  Eigen::Vector4d t;  // [t, 0, 0]
};

inline AugmentedPose augment_pose(const Pose2D& pose) {
  AugmentedPose out;
  out.R = Eigen::Matrix4d::Zero();
  out.R.topLeftCorner<2, 2>() = pose.R;
  out.R.bottomRightCorner<2, 2>() = pose.R;
  out.t << pose.t(0), pose.t(1), 0.0, 0.0;
  return out;
}

}  // namespace radfuse::geom
