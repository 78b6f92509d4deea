#pragma once

// Minimum-total-cost one-to-one assignment (Kuhn-Munkres with potentials,
// O(n^3)). Rectangular matrices are padded to square with a large finite
// cost; padded and forbidden pairings are stripped from the output.
//
// Disallowed pairings are marked with the `forbidden` sentinel (+inf).
// Among all minimum-cost assignments the lexicographically smallest
// (row, col) pair sequence is returned, which makes results deterministic.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace radfuse::assign {

inline constexpr double forbidden = std::numeric_limits<double>::infinity();

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // sorted by row
  double total_cost = 0.0;
};

namespace detail {

// Optimal assignment cost of a square matrix; all entries finite.
inline double square_optimum(const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  if (n == 0) return 0.0;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += a[p[j] - 1][j - 1];
  return total;
}

// Optimum over the still-active rows/cols of the padded matrix.
inline double residual_optimum(const std::vector<std::vector<double>>& padded,
                               const std::vector<int>& rows, const std::vector<int>& cols) {
  std::vector<std::vector<double>> sub(rows.size(), std::vector<double>(cols.size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < cols.size(); ++j) sub[i][j] = padded[rows[i]][cols[j]];
  return square_optimum(sub);
}

}  // namespace detail

inline Assignment solve_assignment(const Eigen::MatrixXd& costs) {
  Assignment out;
  const int m = static_cast<int>(costs.rows());
  const int k = static_cast<int>(costs.cols());
  if (m == 0 || k == 0) return out;

  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j)
      if (std::isnan(costs(i, j)) || costs(i, j) == -forbidden)
        throw std::invalid_argument("solve_assignment: costs must be finite or +inf");

  const int n = std::max(m, k);
  double max_abs = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j)
      if (std::isfinite(costs(i, j))) max_abs = std::max(max_abs, std::abs(costs(i, j)));
  // Exceeds any achievable spread of real totals, so the solver uses the
  // fewest possible padded/forbidden cells before optimizing real cost.
  const double big = 2.0 * (max_abs + 1.0) * (n + 1);

  std::vector<std::vector<double>> padded(n, std::vector<double>(n, big));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j)
      if (std::isfinite(costs(i, j))) padded[i][j] = costs(i, j);

  const double optimum = detail::square_optimum(padded);
  const double tol = 1e-9 * std::max(1.0, static_cast<double>(n) * (max_abs + 1.0));

  // Fix pairs row by row, smallest feasible column first, keeping the
  // remaining problem solvable at the global optimum.
  std::vector<int> rows(n), cols(n);
  for (int i = 0; i < n; ++i) rows[i] = i;
  for (int j = 0; j < n; ++j) cols[j] = j;
  double acc = 0.0;
  for (int r = 0; r < m; ++r) {
    auto rit = std::find(rows.begin(), rows.end(), r);
    std::vector<int> rows_left(rows);
    rows_left.erase(std::find(rows_left.begin(), rows_left.end(), r));
    int chosen = -1;
    // Real allowed columns first: any real pair at this row is
    // lexicographically smaller than leaving the row unassigned.
    for (int pass = 0; pass < 2 && chosen < 0; ++pass) {
      for (int c : cols) {
        const bool real_allowed = c < k && std::isfinite(costs(r, c));
        if ((pass == 0) != real_allowed) continue;
        std::vector<int> cols_left(cols);
        cols_left.erase(std::find(cols_left.begin(), cols_left.end(), c));
        const double completion =
            acc + padded[r][c] + detail::residual_optimum(padded, rows_left, cols_left);
        if (std::abs(completion - optimum) <= tol) {
          chosen = c;
          if (real_allowed) {
            out.pairs.emplace_back(r, c);
            out.total_cost += costs(r, c);
          }
          acc += padded[r][c];
          cols.erase(std::find(cols.begin(), cols.end(), c));
          break;
        }
      }
    }
    rows.erase(rit);
    (void)chosen;
  }
  return out;
}

}  // namespace radfuse::assign
