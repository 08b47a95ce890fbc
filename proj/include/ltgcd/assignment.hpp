#pragma once

#include <limits>
#include <vector>

#include "ltgcd/core.hpp"

namespace ltgcd {

// Min-cost assignment (Jonker-Volgenant with potentials, O(n^2 m)).
// cost is R x C with R <= C; returns for each row the assigned column.
inline std::vector<int> solve_assignment(const Matrix& cost) {
  const int R = static_cast<int>(cost.rows());
  const int C = static_cast<int>(cost.cols());
  require(R <= C, "assignment requires rows <= cols");
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // 1-based potentials over an implicit extra column 0.
  std::vector<double> u(R + 1, 0.0), v(C + 1, 0.0);
  std::vector<int> col_to_row(C + 1, 0);  // 0 = unassigned
  for (int r = 1; r <= R; ++r) {
    std::vector<double> min_to(C + 1, kInf);
    std::vector<int> prev(C + 1, -1);
    std::vector<char> in_tree(C + 1, 0);
    int j0 = 0;
    col_to_row[0] = r;
    do {
      in_tree[j0] = 1;
      const int r0 = col_to_row[j0];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= C; ++j) {
        if (in_tree[j]) continue;
        const double cur = cost(r0 - 1, j - 1) - u[r0] - v[j];
        if (cur < min_to[j]) {
          min_to[j] = cur;
          prev[j] = j0;
        }
        if (min_to[j] < delta) {
          delta = min_to[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= C; ++j) {
        if (in_tree[j]) {
          u[col_to_row[j]] += delta;
          v[j] -= delta;
        } else {
          min_to[j] -= delta;
        }
      }
      j0 = j1;
    } while (col_to_row[j0] != 0);
    // Augment along the alternating path.
    while (j0 != 0) {
      const int j1 = prev[j0];
      col_to_row[j0] = col_to_row[j1];
      j0 = j1;
    }
  }

  std::vector<int> row_to_col(R, -1);
  for (int j = 1; j <= C; ++j)
    if (col_to_row[j] != 0) row_to_col[col_to_row[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace ltgcd
