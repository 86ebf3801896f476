#include "proxrl/implicit.hpp"

#include <cmath>

#include "proxrl/errors.hpp"

namespace proxrl {

void Batch::validate(int n_actions) const {
  const int b = size();
  if (b < 1) throw DomainError("Batch: must hold at least one transition");
  if (states.cols() != b || next_states.cols() != b || actions.size() != b)
    throw DomainError("Batch: column count mismatch");
  if (!states.allFinite() || !next_states.allFinite() || !rewards.allFinite())
    throw DomainError("Batch: non-finite fields");
  for (int i = 0; i < b; ++i)
    if (actions[i] < 0 || actions[i] >= n_actions)
      throw DomainError("Batch: action index out of range");
}

Eigen::MatrixXd constrained_q_batch(const MlpParams& theta,
                                    const Eigen::Ref<const Eigen::MatrixXd>& X,
                                    ProxMode mode, double lambda) {
  Eigen::MatrixXd rows = forward_batch(theta, X);
  if (mode == ProxMode::Off || (mode == ProxMode::Penalty && lambda == 0.0) ||
      (mode == ProxMode::Projection && lambda == 0.0))
    return rows;
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    if (mode == ProxMode::Projection)
      rows.col(j) = project_monotone_cone(rows.col(j));
    else
      rows.col(j) = prox_monotone_penalty(rows.col(j), lambda, 1e-10);
  }
  return rows;
}

Eigen::VectorXd constrained_q_row(const MlpParams& theta,
                                  const Eigen::Ref<const Eigen::VectorXd>& x,
                                  ProxMode mode, double lambda) {
  return constrained_q_batch(theta, x, mode, lambda).col(0);
}

Eigen::VectorXd bellman_targets(const Batch& batch, const BatchQFn& target_rows, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("bellman_targets: gamma must be in [0,1)");
  const Eigen::MatrixXd rows = target_rows(batch.next_states);
  if (rows.cols() != batch.size()) throw DomainError("bellman_targets: provider shape mismatch");
  if (!rows.allFinite()) throw TrainingError("bellman_targets: non-finite critic output");
  return batch.rewards + gamma * rows.colwise().maxCoeff().transpose();
}

Eigen::VectorXd bellman_targets(const Batch& batch, const MlpParams& theta_bar, double gamma) {
  return bellman_targets(
      batch, [&](const Eigen::Ref<const Eigen::MatrixXd>& X) { return forward_batch(theta_bar, X); },
      gamma);
}

double batch_objective(const Eigen::Ref<const Eigen::VectorXd>& u,
                       const Eigen::Ref<const Eigen::VectorXd>& y, double lambda,
                       double c_value) {
  if (u.size() != y.size()) throw DomainError("batch_objective: length mismatch");
  if (u.size() == 0) throw DomainError("batch_objective: empty batch");
  const double data = 0.5 * (u - y).squaredNorm() / static_cast<double>(u.size());
  return data + lambda * c_value;
}

Eigen::MatrixXd prox_residual(const Eigen::Ref<const Eigen::MatrixXd>& U,
                              const Eigen::Ref<const Eigen::MatrixXd>& T, double lambda) {
  if (U.rows() != T.rows() || U.cols() != T.cols())
    throw DomainError("prox_residual: shape mismatch");
  if (lambda < 0.0) throw DomainError("prox_residual: lambda must be >= 0");
  Eigen::MatrixXd g = U - T;
  if (lambda != 0.0)
    for (Eigen::Index j = 0; j < U.cols(); ++j)
      g.col(j) += lambda * monotone_penalty_grad(U.col(j));
  return g;
}

namespace {

double rows_objective(const Eigen::Ref<const Eigen::MatrixXd>& U,
                      const Eigen::Ref<const Eigen::MatrixXd>& T, double lambda) {
  double total = 0.5 * (U - T).squaredNorm();
  if (lambda != 0.0)
    for (Eigen::Index j = 0; j < U.cols(); ++j) total += lambda * monotone_penalty(U.col(j));
  return total / static_cast<double>(U.cols());
}

}  // namespace

Eigen::MatrixXd prox_step(const Eigen::Ref<const Eigen::MatrixXd>& U0,
                          const Eigen::Ref<const Eigen::MatrixXd>& T,
                          const DualState& dual, double step, int inner_iters,
                          bool project) {
  if (!(step > 0.0)) throw DomainError("prox_step: step must be > 0");
  if (inner_iters < 1) throw DomainError("prox_step: inner_iters must be >= 1");
  if (U0.rows() != T.rows() || U0.cols() != T.cols()) throw DomainError("prox_step: shape mismatch");

  const double before = rows_objective(U0, T, dual.lambda);
  Eigen::MatrixXd U = U0;
  for (int it = 0; it < inner_iters; ++it) {
    U -= step * prox_residual(U, T, dual.lambda);
    if (project)
      for (Eigen::Index j = 0; j < U.cols(); ++j) U.col(j) = project_monotone_cone(U.col(j));
  }
  const double after = rows_objective(U, T, dual.lambda);
  if (after > before + 1e-9 * (1.0 + std::abs(before)))
    throw SolverError("prox_step: objective increased; step size too large", after - before);
  return U;
}

CgResult cg_solve(const MatVec& apply, const Eigen::Ref<const Eigen::VectorXd>& b, double tol,
                  int max_iter, const Eigen::VectorXd* x0) {
  if (!(tol > 0.0)) throw DomainError("cg_solve: tol must be > 0");
  const Eigen::Index n = b.size();
  if (max_iter < 0) max_iter = static_cast<int>(n);

  const double bnorm = b.norm();
  if (bnorm == 0.0) return {Eigen::VectorXd::Zero(n), 0, 0.0};

  Eigen::VectorXd x = (x0 && x0->size() == n) ? *x0 : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = b - apply(x);
  double rnorm = r.norm();
  if (rnorm <= tol * bnorm) return {x, 0, rnorm};

  Eigen::VectorXd p = r;
  double rs = rnorm * rnorm;
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXd ap = apply(p);
    const double denom = p.dot(ap);
    if (!(denom > 0.0))
      throw SolverError("cg_solve: operator is not positive definite", rnorm);
    const double alpha = rs / denom;
    x += alpha * p;
    r -= alpha * ap;
    const double rs_next = r.squaredNorm();
    rnorm = std::sqrt(rs_next);
    if (rnorm <= tol * bnorm) return {x, it, rnorm};
    p = r + (rs_next / rs) * p;
    rs = rs_next;
  }
  throw SolverError("cg_solve: no convergence within max_iter", rnorm);
}

Eigen::VectorXd implicit_gradient(const MlpParams& theta, const Batch& batch,
                                  const ForwardTrace& trace,
                                  const Eigen::Ref<const Eigen::MatrixXd>& u,
                                  const Eigen::Ref<const Eigen::VectorXd>& y,
                                  const ImplicitGradientOptions& opt) {
  const int b = batch.size();
  const int n_actions = theta.output_dim();
  if (u.rows() != n_actions || u.cols() != b) throw DomainError("implicit_gradient: u shape");
  if (y.size() != b) throw DomainError("implicit_gradient: target length");
  if (opt.lambda < 0.0) throw DomainError("implicit_gradient: lambda must be >= 0");

  const double inv_b = 1.0 / static_cast<double>(b);
  Eigen::MatrixXd cots(n_actions, b);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_actions);
  for (int i = 0; i < b; ++i) {
    const int a = batch.actions[i];
    const double res = (u(a, i) - y[i]) * inv_b;
    rhs.setZero();
    rhs[a] = res;
    if (opt.mode == ProxMode::Off || opt.lambda == 0.0) {
      cots.col(i) = rhs;
    } else if (opt.mode == ProxMode::Projection) {
      cots.col(i) = pooled_block_average(u.col(i), rhs);
    } else {
      const Eigen::VectorXd urow = u.col(i);
      const double lambda = opt.lambda;
      auto apply = [&urow, lambda](const Eigen::Ref<const Eigen::VectorXd>& w) {
        return (w + lambda * monotone_penalty_hess_vec(urow, w)).eval();
      };
      const Eigen::VectorXd* warm = nullptr;
      Eigen::VectorXd warm_store;
      if (opt.z_warm && opt.z_warm->cols() == b) {
        warm_store = opt.z_warm->col(i);
        warm = &warm_store;
      }
      CgResult cg = cg_solve(apply, rhs, opt.cg_tol, n_actions, warm);
      if (opt.z_warm && opt.z_warm->cols() == b) opt.z_warm->col(i) = cg.x;
      cots.col(i) = cg.x;
    }
  }

  Eigen::VectorXd grad = vjp_batch(theta, trace, cots);
  if (!grad.allFinite()) throw TrainingError("implicit_gradient: non-finite gradient");
  return grad;
}

Eigen::VectorXd implicit_gradient(const MlpParams& theta, const Batch& batch,
                                  const Eigen::Ref<const Eigen::MatrixXd>& u,
                                  const Eigen::Ref<const Eigen::VectorXd>& y,
                                  const ImplicitGradientOptions& opt) {
  ForwardTrace trace;
  forward_batch_traced(theta, batch.states, trace);
  return implicit_gradient(theta, batch, trace, u, y, opt);
}

}  // namespace proxrl
