#include "proxrl/constraints.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "proxrl/errors.hpp"

namespace proxrl {

namespace {

void check_finite(const Eigen::Ref<const Eigen::VectorXd>& q, const char* who) {
  if (!q.allFinite()) throw DomainError(std::string(who) + ": non-finite input");
}

}  // namespace

void ConstraintSpec::validate() const {
  if (kind == ConstraintKind::LipschitzPenalty && !(lipschitz_bound > 0.0))
    throw DomainError("ConstraintSpec: lipschitz_bound must be > 0");
  if (!(grid_spacing > 0.0)) throw DomainError("ConstraintSpec: grid_spacing must be > 0");
}

double monotone_penalty(const Eigen::Ref<const Eigen::VectorXd>& q) {
  check_finite(q, "monotone_penalty");
  double total = 0.0;
  for (Eigen::Index i = 0; i + 1 < q.size(); ++i) {
    const double drop = q[i] - q[i + 1];
    if (drop > 0.0) total += drop * drop;
  }
  return total;
}

Eigen::VectorXd monotone_penalty_grad(const Eigen::Ref<const Eigen::VectorXd>& q) {
  check_finite(q, "monotone_penalty_grad");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(q.size());
  for (Eigen::Index i = 0; i + 1 < q.size(); ++i) {
    const double drop = q[i] - q[i + 1];
    if (drop > 0.0) {
      g[i] += 2.0 * drop;
      g[i + 1] -= 2.0 * drop;
    }
  }
  return g;
}

Eigen::VectorXd monotone_penalty_hess_vec(const Eigen::Ref<const Eigen::VectorXd>& q,
                                          const Eigen::Ref<const Eigen::VectorXd>& w) {
  check_finite(q, "monotone_penalty_hess_vec");
  if (q.size() != w.size())
    throw DomainError("monotone_penalty_hess_vec: size mismatch");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(q.size());
  for (Eigen::Index i = 0; i + 1 < q.size(); ++i) {
    if (q[i] - q[i + 1] > 0.0) {
      const double d = 2.0 * (w[i] - w[i + 1]);
      out[i] += d;
      out[i + 1] -= d;
    }
  }
  return out;
}

Eigen::VectorXd project_monotone_cone(const Eigen::Ref<const Eigen::VectorXd>& q) {
  check_finite(q, "project_monotone_cone");
  const Eigen::Index n = q.size();
  if (n == 0) return Eigen::VectorXd();

  // Block stack of (sum, count); pool only while the incoming block mean is
  // strictly below the mean on top of the stack.
  std::vector<double> sum;
  std::vector<Eigen::Index> count;
  sum.reserve(static_cast<size_t>(n));
  count.reserve(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    sum.push_back(q[i]);
    count.push_back(1);
    while (sum.size() >= 2) {
      const size_t k = sum.size() - 1;
      const double mean_top = sum[k] / static_cast<double>(count[k]);
      const double mean_prev = sum[k - 1] / static_cast<double>(count[k - 1]);
      if (mean_top < mean_prev) {
        sum[k - 1] += sum[k];
        count[k - 1] += count[k];
        sum.pop_back();
        count.pop_back();
      } else {
        break;
      }
    }
  }

  Eigen::VectorXd out(n);
  Eigen::Index pos = 0;
  for (size_t b = 0; b < sum.size(); ++b) {
    const double mean = sum[b] / static_cast<double>(count[b]);
    for (Eigen::Index j = 0; j < count[b]; ++j) out[pos++] = mean;
  }
  return out;
}

namespace {

double prox_objective(const Eigen::Ref<const Eigen::VectorXd>& u,
                      const Eigen::Ref<const Eigen::VectorXd>& y, double lambda) {
  return 0.5 * (u - y).squaredNorm() + lambda * monotone_penalty(u);
}

}  // namespace

Eigen::VectorXd prox_monotone_penalty(const Eigen::Ref<const Eigen::VectorXd>& y,
                                      double lambda, double tol) {
  check_finite(y, "prox_monotone_penalty");
  if (lambda < 0.0) throw DomainError("prox_monotone_penalty: lambda must be >= 0");
  if (!(tol > 0.0)) throw DomainError("prox_monotone_penalty: tol must be > 0");
  if (lambda == 0.0) return y;

  const Eigen::Index n = y.size();
  constexpr int kMaxIters = 50;

  Eigen::VectorXd u = y;
  Eigen::VectorXd grad = (u - y) + lambda * monotone_penalty_grad(u);
  double fval = prox_objective(u, y, lambda);

  for (int iter = 0; iter < kMaxIters; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() <= tol) return u;

    // Hessian of the active piece: I + 2*lambda per violated gap.
    Eigen::MatrixXd hess = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      if (u[i] - u[i + 1] > 0.0) {
        hess(i, i) += 2.0 * lambda;
        hess(i + 1, i + 1) += 2.0 * lambda;
        hess(i, i + 1) -= 2.0 * lambda;
        hess(i + 1, i) -= 2.0 * lambda;
      }
    }
    const Eigen::VectorXd step = hess.ldlt().solve(-grad);

    // Backtrack until the piecewise-quadratic objective decreases.
    double t = 1.0;
    const double slope = grad.dot(step);
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Eigen::VectorXd cand = u + t * step;
      const double fcand = prox_objective(cand, y, lambda);
      if (fcand <= fval + 1e-4 * t * slope) {
        u = cand;
        fval = fcand;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    grad = (u - y) + lambda * monotone_penalty_grad(u);
  }

  const double residual = grad.lpNorm<Eigen::Infinity>();
  if (residual <= tol) return u;
  throw SolverError("prox_monotone_penalty: no convergence within iteration cap", residual);
}

double lipschitz_penalty(const ValueGrid& v, const ConstraintSpec& spec) {
  if (spec.kind != ConstraintKind::LipschitzPenalty)
    throw DomainError("lipschitz_penalty: spec kind must be LipschitzPenalty");
  spec.validate();
  if (!v.values.allFinite()) throw DomainError("lipschitz_penalty: non-finite grid");

  const GridMeta& m = v.meta;
  if (m.nx * m.nc != v.values.size() || m.nx < 1 || m.nc < 1)
    throw DomainError("lipschitz_penalty: grid meta inconsistent with values");
  if (m.nx < 2 && m.nc < 2)
    throw DomainError("lipschitz_penalty: grid needs at least 2 points on some axis");

  const double bound = spec.lipschitz_bound;
  const double dx = m.dx > 0.0 ? m.dx : spec.grid_spacing;
  const double dc = m.dc > 0.0 ? m.dc : spec.grid_spacing;

  auto at = [&](int i, int j) { return v.values[i * m.nc + j]; };

  double total = 0.0;
  for (int i = 0; i + 1 < m.nx; ++i)
    for (int j = 0; j < m.nc; ++j) {
      const double excess = std::abs(at(i + 1, j) - at(i, j)) / dx - bound;
      if (excess > 0.0) total += excess * excess;
    }
  for (int i = 0; i < m.nx; ++i)
    for (int j = 0; j + 1 < m.nc; ++j) {
      const double excess = std::abs(at(i, j + 1) - at(i, j)) / dc - bound;
      if (excess > 0.0) total += excess * excess;
    }
  return total;
}

DualState dual_update(DualState d, double c_value) {
  if (!(c_value >= 0.0) || !std::isfinite(c_value))
    throw DomainError("dual_update: c_value must be finite and >= 0");
  d.lambda = std::max(0.0, d.lambda + d.eta_lambda * c_value);
  return d;
}

Eigen::VectorXd pooled_block_average(const Eigen::Ref<const Eigen::VectorXd>& u,
                                     const Eigen::Ref<const Eigen::VectorXd>& cot) {
  if (u.size() != cot.size()) throw DomainError("pooled_block_average: size mismatch");
  const Eigen::Index n = u.size();
  Eigen::VectorXd out(n);
  Eigen::Index start = 0;
  while (start < n) {
    Eigen::Index end = start + 1;
    while (end < n && u[end] == u[start]) ++end;
    const double mean = cot.segment(start, end - start).mean();
    out.segment(start, end - start).setConstant(mean);
    start = end;
  }
  return out;
}

}  // namespace proxrl
