#pragma once

#include <Eigen/Core>

namespace proxrl {

/// Shape and spacing of a rectangular (x, c) state grid. One-dimensional
/// grids use nc == 1; an axis with a single point contributes no
/// finite-difference pairs.
struct GridMeta {
  int nx = 0;
  int nc = 1;
  double dx = 0.0;
  double dc = 0.0;

  int n_states() const { return nx * nc; }
};

/// Discretized value function over a state grid, stored x-major:
/// values[i * nc + j] is the value at (x_i, c_j).
struct ValueGrid {
  Eigen::VectorXd values;
  GridMeta meta;
};

}  // namespace proxrl
