#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "proxrl/constraints.hpp"
#include "proxrl/mlp.hpp"

namespace proxrl {

/// How the critic's raw action-value rows are constrained before use.
enum class ProxMode {
  Off,         // raw rows
  Penalty,     // prox of the weighted squared-hinge penalty
  Projection,  // exact projection onto the nondecreasing cone
};

/// Mini-batch of logged transitions in column form.
struct Batch {
  Eigen::MatrixXd states;       // state_dim x B
  Eigen::MatrixXd next_states;  // state_dim x B
  Eigen::VectorXi actions;      // logged action indices
  Eigen::VectorXd rewards;
  std::vector<std::int64_t> indices;  // positions in the source dataset

  int size() const { return static_cast<int>(rewards.size()); }
  void validate(int n_actions) const;
};

/// Constrained critic output: the prox layer applied to each raw Q-row.
Eigen::MatrixXd constrained_q_batch(const MlpParams& theta,
                                    const Eigen::Ref<const Eigen::MatrixXd>& X,
                                    ProxMode mode, double lambda);
Eigen::VectorXd constrained_q_row(const MlpParams& theta,
                                  const Eigen::Ref<const Eigen::VectorXd>& x,
                                  ProxMode mode, double lambda);

/// Per-sample targets y_i = r_i + gamma * max_a q(s'_i, a). The row provider
/// receives all next states at once (columns) and must return Q-rows as
/// columns; targets carry no gradient dependence.
using BatchQFn = std::function<Eigen::MatrixXd(const Eigen::Ref<const Eigen::MatrixXd>&)>;
Eigen::VectorXd bellman_targets(const Batch& batch, const BatchQFn& target_rows, double gamma);
Eigen::VectorXd bellman_targets(const Batch& batch, const MlpParams& theta_bar, double gamma);

/// Empirical prox objective: (1/2|B|) sum (u_i - y_i)^2 + lambda * c_value.
double batch_objective(const Eigen::Ref<const Eigen::VectorXd>& u,
                       const Eigen::Ref<const Eigen::VectorXd>& y, double lambda,
                       double c_value);

/// First-order residual of the per-row prox subproblem, columnwise:
/// g = U - T + lambda * grad_penalty(U). Zero iff U solves the subproblem.
Eigen::MatrixXd prox_residual(const Eigen::Ref<const Eigen::MatrixXd>& U,
                              const Eigen::Ref<const Eigen::MatrixXd>& T, double lambda);

/// inner_iters damped steps U <- U - step * g, warm-started at U0; with
/// `project` each step lands back on the nondecreasing cone. Throws
/// SolverError if the batch objective increases beyond tolerance.
Eigen::MatrixXd prox_step(const Eigen::Ref<const Eigen::MatrixXd>& U0,
                          const Eigen::Ref<const Eigen::MatrixXd>& T,
                          const DualState& dual, double step, int inner_iters,
                          bool project = false);

struct CgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double residual = 0.0;  // final ||Ax - b||
};

using MatVec = std::function<Eigen::VectorXd(const Eigen::Ref<const Eigen::VectorXd>&)>;

/// Conjugate gradients for SPD operators; stops at ||Ax-b|| <= tol*||b||.
/// max_iter < 0 means the dimension of b. Throws SolverError on
/// non-convergence.
CgResult cg_solve(const MatVec& apply, const Eigen::Ref<const Eigen::VectorXd>& b,
                  double tol = 1e-8, int max_iter = -1,
                  const Eigen::VectorXd* x0 = nullptr);

/// Online/target critics plus the warm-start pools for the inner solver.
struct CriticState {
  MlpParams theta;
  MlpParams theta_bar;
  DualState dual;
  Eigen::MatrixXd u_prev;  // n_actions x N constrained-row warm starts
  Eigen::MatrixXd z_prev;  // n_actions x N CG warm starts
  std::vector<char> seen;  // per dataset index
};

struct ImplicitGradientOptions {
  double lambda = 0.0;
  ProxMode mode = ProxMode::Off;
  double cg_tol = 1e-8;
  Eigen::MatrixXd* z_warm = nullptr;  // optional per-sample CG warm starts (n_actions x B)
};

/// Gradient of (1/2|B|) sum_i (u_i[a_i] - y_i)^2 through the prox layer:
/// per sample the residual cotangent is transported by the inverse prox
/// Jacobian (a CG solve on w -> w + lambda * H_penalty w, or pooled-block
/// averaging for the projection), then pulled back through the network.
/// `trace` must come from forward_batch_traced(theta, batch.states).
Eigen::VectorXd implicit_gradient(const MlpParams& theta, const Batch& batch,
                                  const ForwardTrace& trace,
                                  const Eigen::Ref<const Eigen::MatrixXd>& u,
                                  const Eigen::Ref<const Eigen::VectorXd>& y,
                                  const ImplicitGradientOptions& opt);

/// Convenience overload that recomputes the forward trace.
Eigen::VectorXd implicit_gradient(const MlpParams& theta, const Batch& batch,
                                  const Eigen::Ref<const Eigen::MatrixXd>& u,
                                  const Eigen::Ref<const Eigen::VectorXd>& y,
                                  const ImplicitGradientOptions& opt);

}  // namespace proxrl
