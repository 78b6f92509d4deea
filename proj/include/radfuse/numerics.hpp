#pragma once

// Symmetric-matrix hygiene for covariance and precision matrices:
// positive-definiteness enforcement and condition-number regularization.
// Both corrections act on the spectrum only, so eigenvectors are preserved.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace radfuse::numerics {

inline constexpr double kDefaultEps = 1e-9;
inline constexpr double kDefaultCondMax = 50.0;

// Relative slack used when testing the condition-number trigger, so that a
// matrix regularized to cond == cond_max is a fixed point of stabilize().
inline constexpr double kTriggerSlack = 1e-12;

struct StabilizeParams {
  double eps = kDefaultEps;        // eigenvalue floor after PD correction
  double cond_max = kDefaultCondMax;
};

// Counters for how often the corrections fired; callers that must report
// stabilization events pass one of these and inspect it afterwards.
struct StabilizeStats {
  long pd_corrections = 0;
  long cond_corrections = 0;
};

namespace detail {

template <typename Derived>
void require_square_symmetric(const Eigen::MatrixBase<Derived>& p, const char* op) {
  if (p.rows() != p.cols()) {
    throw std::invalid_argument(std::string(op) + ": matrix is not square");
  }
  if (p.rows() == 0) {
    throw std::invalid_argument(std::string(op) + ": matrix is empty");
  }
  const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
  const double asym = (p - p.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9 * scale) {
    throw std::invalid_argument(std::string(op) + ": matrix is not symmetric");
  }
}

// Exact symmetrization; IEEE addition is commutative, so the result is
// bit-symmetric even when the input only passes the tolerance check.
template <typename Derived>
typename Derived::PlainObject symmetrize(const Eigen::MatrixBase<Derived>& p) {
  return (0.5 * (p + p.transpose())).eval();
}

}  // namespace detail

template <typename Derived>
typename Derived::PlainObject make_positive_definite(const Eigen::MatrixBase<Derived>& p,
                                                     double eps = kDefaultEps,
                                                     StabilizeStats* stats = nullptr) {
  if (!(eps > 0)) {
    throw std::invalid_argument("make_positive_definite: eps must be positive");
  }
  detail::require_square_symmetric(p, "make_positive_definite");
  auto s = detail::symmetrize(p);
  Eigen::SelfAdjointEigenSolver<typename Derived::PlainObject> es(s, Eigen::EigenvaluesOnly);
  const double lambda_min = es.eigenvalues().minCoeff();
  if (lambda_min > 0) {
    return s;
  }
  if (stats) ++stats->pd_corrections;
  s += (-lambda_min + eps) *
       Derived::PlainObject::Identity(p.rows(), p.cols());
  return s;
}

template <typename Derived>
typename Derived::PlainObject regularize_condition(const Eigen::MatrixBase<Derived>& p,
                                                   double cond_max = kDefaultCondMax,
                                                   StabilizeStats* stats = nullptr) {
  if (!(cond_max > 1)) {
    throw std::invalid_argument("regularize_condition: condition bound must exceed 1");
  }
  detail::require_square_symmetric(p, "regularize_condition");
  auto s = detail::symmetrize(p);
  Eigen::SelfAdjointEigenSolver<typename Derived::PlainObject> es(s, Eigen::EigenvaluesOnly);
  const double lambda_min = es.eigenvalues().minCoeff();
  const double lambda_max = es.eigenvalues().maxCoeff();
  if (!(lambda_min > 0)) {
    throw std::invalid_argument("regularize_condition: matrix is not positive definite");
  }
  if (lambda_max <= cond_max * lambda_min * (1.0 + kTriggerSlack)) {
    return s;
  }
  if (stats) ++stats->cond_corrections;
  const double delta = std::max(0.0, (lambda_max - cond_max * lambda_min) / (cond_max - 1.0));
  s = ((s + delta * Derived::PlainObject::Identity(p.rows(), p.cols())) / (1.0 + delta)).eval();
  return s;
}

// PD correction followed by condition regularization, each applied only when
// its trigger fires. One eigendecomposition serves both tests: the PD shift
// moves every eigenvalue by the same amount, so the corrected spectrum is
// known without re-solving.
template <typename Derived>
typename Derived::PlainObject stabilize(const Eigen::MatrixBase<Derived>& p,
                                        const StabilizeParams& params = {},
                                        StabilizeStats* stats = nullptr) {
  if (!(params.eps > 0)) {
    throw std::invalid_argument("stabilize: eps must be positive");
  }
  if (!(params.cond_max > 1)) {
    throw std::invalid_argument("stabilize: condition bound must exceed 1");
  }
  detail::require_square_symmetric(p, "stabilize");
  auto s = detail::symmetrize(p);
  Eigen::SelfAdjointEigenSolver<typename Derived::PlainObject> es(s, Eigen::EigenvaluesOnly);
  double lambda_min = es.eigenvalues().minCoeff();
  double lambda_max = es.eigenvalues().maxCoeff();
  using Plain = typename Derived::PlainObject;
  if (!(lambda_min > 0)) {
    if (stats) ++stats->pd_corrections;
    const double shift = -lambda_min + params.eps;
    s += shift * Plain::Identity(p.rows(), p.cols());
    lambda_max += shift;
    lambda_min = params.eps;
  }
  if (lambda_max > params.cond_max * lambda_min * (1.0 + kTriggerSlack)) {
    if (stats) ++stats->cond_corrections;
    const double delta =
        std::max(0.0, (lambda_max - params.cond_max * lambda_min) / (params.cond_max - 1.0));
    s = ((s + delta * Plain::Identity(p.rows(), p.cols())) / (1.0 + delta)).eval();
  }
  return s;
}

template <typename Derived>
double condition_number(const Eigen::MatrixBase<Derived>& p) {
  detail::require_square_symmetric(p, "condition_number");
  Eigen::SelfAdjointEigenSolver<typename Derived::PlainObject> es(detail::symmetrize(p),
                                                                  Eigen::EigenvaluesOnly);
  const double lambda_min = es.eigenvalues().minCoeff();
  if (!(lambda_min > 0)) {
    return std::numeric_limits<double>::infinity();
  }
  return es.eigenvalues().maxCoeff() / lambda_min;
}

template <typename Derived>
bool is_positive_definite(const Eigen::MatrixBase<Derived>& p) {
  detail::require_square_symmetric(p, "is_positive_definite");
  Eigen::SelfAdjointEigenSolver<typename Derived::PlainObject> es(detail::symmetrize(p),
                                                                  Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() > 0;
}

// Stabilized SPD inverse via Cholesky. Result is re-symmetrized exactly.
template <typename Derived>
typename Derived::PlainObject inverse_spd(const Eigen::MatrixBase<Derived>& p,
                                          const StabilizeParams& params = {},
                                          StabilizeStats* stats = nullptr) {
  auto s = stabilize(p, params, stats);
  using Plain = typename Derived::PlainObject;
  Eigen::LLT<Plain> llt(s);
  Plain inv = llt.solve(Plain::Identity(p.rows(), p.cols()));
  return detail::symmetrize(inv);
}

}  // namespace radfuse::numerics
