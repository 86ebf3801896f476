#pragma once

#include <Eigen/Core>
#include <vector>

#include "proxrl/constraints.hpp"
#include "proxrl/grid.hpp"

namespace proxrl {

/// Finite MDP with dense transitions. Row (s * n_actions + a) of `transition`
/// is the next-state distribution of (s, a).
struct DiscreteMdp {
  int n_states = 0;
  int n_actions = 0;
  Eigen::MatrixXd reward;      // n_states x n_actions
  Eigen::MatrixXd transition;  // (n_states * n_actions) x n_states
  double gamma = 0.9;

  double r_max() const { return reward.size() ? reward.cwiseAbs().maxCoeff() : 0.0; }
  void validate() const;
};

/// One optimal backup: (Tv)(s) = max_a [ r(s,a) + gamma * sum_s' P(s'|s,a) v(s') ].
Eigen::VectorXd bellman_backup(const Eigen::VectorXd& v, const DiscreteMdp& m);

/// Backed-up Q-row of one state: r(s,.) + gamma * (P v)(s,.).
Eigen::VectorXd backup_q_row(const Eigen::VectorXd& v, const DiscreteMdp& m, int s);

/// One sweep of the constrained operator: each state's backed-up Q-row runs
/// through the exact prox for the spec (projection for the cone, Newton prox
/// for the penalty), then the value is the max of the constrained row.
/// lambda == 0 reduces to bellman_backup exactly.
Eigen::VectorXd constrained_backup(const Eigen::VectorXd& v, const DiscreteMdp& m,
                                   const ConstraintSpec& spec, double lambda,
                                   double prox_tol = 1e-12);

struct FixedPointResult {
  Eigen::VectorXd values;
  double residual = 0.0;  // sup-norm change of the final sweep
  int iterations = 0;
};

/// Iterates the constrained operator from v = 0 until the sweep changes by at
/// most tol in sup norm. Throws SolverError past the contraction-derived
/// iteration cap.
FixedPointResult solve_fixed_point(const DiscreteMdp& m, const ConstraintSpec& spec,
                                   double lambda, double tol);

struct ContinuationPoint {
  double lambda = 0.0;
  double distance = 0.0;  // sup distance to the unconstrained fixed point
};

/// Distances ||v_lambda - v_0||_inf for a nonincreasing lambda schedule.
std::vector<ContinuationPoint> penalty_continuation(const DiscreteMdp& m,
                                                    const ConstraintSpec& spec,
                                                    const std::vector<double>& lambdas,
                                                    double tol);

}  // namespace proxrl
