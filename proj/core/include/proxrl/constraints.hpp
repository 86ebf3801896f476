#pragma once

#include <Eigen/Core>

#include "proxrl/grid.hpp"

namespace proxrl {

enum class ConstraintKind { MonotonePenalty, MonotoneCone, LipschitzPenalty };

/// Which convex structural functional is active, plus its parameters.
struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::MonotonePenalty;
  double lipschitz_bound = 1.0;  // only read for LipschitzPenalty
  double grid_spacing = 1.0;     // fallback spacing for grids without meta

  void validate() const;
};

/// Nonnegative penalty weight together with its dual-ascent step size.
struct DualState {
  double lambda = 0.0;
  double eta_lambda = 0.05;
};

/// Squared hinge on adjacent decreases: sum_i max(0, -(q[i+1]-q[i]))^2.
/// Zero exactly on nondecreasing rows. Throws DomainError on non-finite input.
double monotone_penalty(const Eigen::Ref<const Eigen::VectorXd>& q);

/// Exact gradient of monotone_penalty.
Eigen::VectorXd monotone_penalty_grad(const Eigen::Ref<const Eigen::VectorXd>& q);

/// Hessian-vector product of monotone_penalty at q. The Hessian is piecewise
/// constant: 2(e_i - e_{i+1})(e_i - e_{i+1})^T per strictly violated gap.
Eigen::VectorXd monotone_penalty_hess_vec(const Eigen::Ref<const Eigen::VectorXd>& q,
                                          const Eigen::Ref<const Eigen::VectorXd>& w);

/// Euclidean projection onto the nondecreasing cone (pool-adjacent-violators).
/// Idempotent; pooling happens only on strict decreases of block means.
Eigen::VectorXd project_monotone_cone(const Eigen::Ref<const Eigen::VectorXd>& q);

/// argmin_u 0.5*||u - y||^2 + lambda * monotone_penalty(u), solved by damped
/// Newton iterations on the piecewise-quadratic objective. Returns u with
/// ||u - y + lambda*grad(u)||_inf <= tol; throws SolverError past the
/// iteration cap. lambda == 0 returns y unchanged.
Eigen::VectorXd prox_monotone_penalty(const Eigen::Ref<const Eigen::VectorXd>& y,
                                      double lambda, double tol = 1e-10);

/// Squared violation of a global slope bound over adjacent grid pairs:
/// sum over pairs of max(0, |v(s)-v(s')|/ds - L)^2. Axis spacings come from
/// the grid meta when set, otherwise from spec.grid_spacing.
double lipschitz_penalty(const ValueGrid& v, const ConstraintSpec& spec);

/// lambda' = max(0, lambda + eta * c_value).
DualState dual_update(DualState d, double c_value);

/// Averages cot over each maximal run of exactly equal entries of u. This is
/// how the derivative of the cone projection transports cotangents: pooled
/// blocks share one degree of freedom.
Eigen::VectorXd pooled_block_average(const Eigen::Ref<const Eigen::VectorXd>& u,
                                     const Eigen::Ref<const Eigen::VectorXd>& cot);

}  // namespace proxrl
