#include "proxrl/tabular.hpp"

#include <cmath>

#include "proxrl/errors.hpp"

namespace proxrl {

void DiscreteMdp::validate() const {
  if (n_states < 1 || n_actions < 1) throw DomainError("DiscreteMdp: empty state or action set");
  if (reward.rows() != n_states || reward.cols() != n_actions)
    throw DomainError("DiscreteMdp: reward shape mismatch");
  if (transition.rows() != static_cast<Eigen::Index>(n_states) * n_actions ||
      transition.cols() != n_states)
    throw DomainError("DiscreteMdp: transition shape mismatch");
  if (!reward.allFinite() || !transition.allFinite())
    throw DomainError("DiscreteMdp: non-finite entries");
  if (transition.minCoeff() < 0.0) throw DomainError("DiscreteMdp: negative probability");
  for (Eigen::Index row = 0; row < transition.rows(); ++row) {
    if (std::abs(transition.row(row).sum() - 1.0) > 1e-12)
      throw DomainError("DiscreteMdp: transition row does not sum to 1");
  }
  // gamma == 0 is admitted for the myopic limit.
  if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("DiscreteMdp: gamma must be in [0,1)");
}

Eigen::VectorXd bellman_backup(const Eigen::VectorXd& v, const DiscreteMdp& m) {
  if (v.size() != m.n_states) throw DomainError("bellman_backup: value dimension mismatch");
  // Continuations for all (s, a) pairs in one product.
  const Eigen::VectorXd cont = m.transition * v;  // (S*A)
  Eigen::VectorXd out(m.n_states);
  for (int s = 0; s < m.n_states; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < m.n_actions; ++a) {
      const double q = m.reward(s, a) + m.gamma * cont[static_cast<Eigen::Index>(s) * m.n_actions + a];
      best = std::max(best, q);
    }
    out[s] = best;
  }
  return out;
}

Eigen::VectorXd backup_q_row(const Eigen::VectorXd& v, const DiscreteMdp& m, int s) {
  if (v.size() != m.n_states) throw DomainError("backup_q_row: value dimension mismatch");
  if (s < 0 || s >= m.n_states) throw DomainError("backup_q_row: state out of range");
  Eigen::VectorXd row(m.n_actions);
  for (int a = 0; a < m.n_actions; ++a) {
    const Eigen::Index idx = static_cast<Eigen::Index>(s) * m.n_actions + a;
    row[a] = m.reward(s, a) + m.gamma * m.transition.row(idx).dot(v);
  }
  return row;
}

Eigen::VectorXd constrained_backup(const Eigen::VectorXd& v, const DiscreteMdp& m,
                                   const ConstraintSpec& spec, double lambda,
                                   double prox_tol) {
  if (lambda < 0.0) throw DomainError("constrained_backup: lambda must be >= 0");
  if (lambda == 0.0) return bellman_backup(v, m);
  if (spec.kind == ConstraintKind::LipschitzPenalty)
    throw DomainError("constrained_backup: no exact per-state prox for the Lipschitz penalty");

  Eigen::VectorXd out(m.n_states);
  for (int s = 0; s < m.n_states; ++s) {
    Eigen::VectorXd row = backup_q_row(v, m, s);
    if (spec.kind == ConstraintKind::MonotoneCone)
      row = project_monotone_cone(row);
    else
      row = prox_monotone_penalty(row, lambda, prox_tol);
    out[s] = row.maxCoeff();
  }
  return out;
}

FixedPointResult solve_fixed_point(const DiscreteMdp& m, const ConstraintSpec& spec,
                                   double lambda, double tol) {
  if (!(tol > 0.0)) throw DomainError("solve_fixed_point: tol must be > 0");
  m.validate();

  const double rmax = m.r_max();
  long cap = 2;
  if (m.gamma > 0.0 && rmax > 0.0) {
    const double bound = tol * (1.0 - m.gamma) / rmax;
    cap = bound < 1.0 ? static_cast<long>(std::ceil(std::log(bound) / std::log(m.gamma))) : 1;
    cap += 100;
  }

  Eigen::VectorXd v = Eigen::VectorXd::Zero(m.n_states);
  double residual = std::numeric_limits<double>::infinity();
  for (long it = 0; it < cap; ++it) {
    Eigen::VectorXd next = constrained_backup(v, m, spec, lambda);
    residual = (next - v).lpNorm<Eigen::Infinity>();
    v = std::move(next);
    if (residual <= tol) return {v, residual, static_cast<int>(it + 1)};
  }
  throw SolverError("solve_fixed_point: iteration cap exceeded", residual);
}

std::vector<ContinuationPoint> penalty_continuation(const DiscreteMdp& m,
                                                    const ConstraintSpec& spec,
                                                    const std::vector<double>& lambdas,
                                                    double tol) {
  if (lambdas.empty()) throw DomainError("penalty_continuation: empty schedule");
  for (size_t i = 0; i < lambdas.size(); ++i) {
    if (lambdas[i] < 0.0) throw DomainError("penalty_continuation: lambda must be >= 0");
    if (i > 0 && lambdas[i] > lambdas[i - 1])
      throw DomainError("penalty_continuation: schedule must be nonincreasing");
  }

  const Eigen::VectorXd v0 = solve_fixed_point(m, spec, 0.0, tol).values;
  std::vector<ContinuationPoint> out;
  out.reserve(lambdas.size());
  for (double lam : lambdas) {
    const Eigen::VectorXd vl = solve_fixed_point(m, spec, lam, tol).values;
    out.push_back({lam, (vl - v0).lpNorm<Eigen::Infinity>()});
  }
  return out;
}

}  // namespace proxrl
