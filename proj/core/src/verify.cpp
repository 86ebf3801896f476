#include "proxrl/verify.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "proxrl/bidclick.hpp"
#include "proxrl/errors.hpp"
#include "proxrl/implicit.hpp"
#include "proxrl/mlp.hpp"
#include "proxrl/rng.hpp"

namespace proxrl {

namespace oracle {

Eigen::VectorXd isotonic_qp(const Eigen::Ref<const Eigen::VectorXd>& q) {
  const int n = static_cast<int>(q.size());
  // Every candidate solution is block-constant with block means; enumerate
  // all 2^(n-1) consecutive-block partitions and keep the feasible minimizer.
  double best_cost = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best = q;
  const unsigned partitions = 1u << (n - 1);
  for (unsigned mask = 0; mask < partitions; ++mask) {
    Eigen::VectorXd cand(n);
    int start = 0;
    bool feasible = true;
    double prev_mean = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      const bool boundary = (i == n - 1) || ((mask >> i) & 1u);
      if (!boundary) continue;
      const int len = i - start + 1;
      const double mean = q.segment(start, len).mean();
      if (mean < prev_mean) {
        feasible = false;
        break;
      }
      cand.segment(start, len).setConstant(mean);
      prev_mean = mean;
      start = i + 1;
    }
    if (!feasible) continue;
    const double cost = (cand - q).squaredNorm();
    if (cost < best_cost) {
      best_cost = cost;
      best = cand;
    }
  }
  return best;
}

DiscreteMdp random_mdp(int n_states, int n_actions, double gamma, std::uint64_t seed) {
  Rng rng(seed, stream_id("random-mdp"));
  DiscreteMdp m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  m.reward.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) m.reward(s, a) = rng.uniform(-1.0, 1.0);
  m.transition.resize(static_cast<Eigen::Index>(n_states) * n_actions, n_states);
  for (Eigen::Index row = 0; row < m.transition.rows(); ++row) {
    double total = 0.0;
    for (int s = 0; s < n_states; ++s) {
      const double w = -std::log(1.0 - rng.uniform());  // Exp(1)
      m.transition(row, s) = w;
      total += w;
    }
    m.transition.row(row) /= total;
  }
  m.validate();
  return m;
}

}  // namespace oracle

namespace {

CheckResult check(const std::string& name, bool ok, const std::string& detail) {
  return {name, ok, detail};
}

std::string fmt(const char* pattern, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), pattern, a, b);
  return buf;
}

Eigen::VectorXd random_row(Rng& rng, int n, double scale) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(-scale, scale);
  return v;
}

// ---------------------------------------------------------------------------
// props

std::vector<CheckResult> props_impl(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed, stream_id("props"));

  {  // projection vs exhaustive oracle on all 5-vectors with entries -2..2
    double worst = 0.0;
    for (int v0 = -2; v0 <= 2; ++v0)
      for (int v1 = -2; v1 <= 2; ++v1)
        for (int v2 = -2; v2 <= 2; ++v2)
          for (int v3 = -2; v3 <= 2; ++v3)
            for (int v4 = -2; v4 <= 2; ++v4) {
              Eigen::VectorXd q(5);
              q << v0, v1, v2, v3, v4;
              const Eigen::VectorXd got = project_monotone_cone(q);
              const Eigen::VectorXd want = oracle::isotonic_qp(q);
              worst = std::max(worst, (got - want).lpNorm<Eigen::Infinity>());
            }
    out.push_back(check("projection matches exhaustive oracle on integer grid", worst <= 1e-9,
                        fmt("max deviation %.3g", worst)));
  }

  {  // idempotence, bit for bit
    bool ok = true;
    for (int trial = 0; trial < 1000 && ok; ++trial) {
      const Eigen::VectorXd q = random_row(rng, 5, 3.0);
      const Eigen::VectorXd once = project_monotone_cone(q);
      const Eigen::VectorXd twice = project_monotone_cone(once);
      ok = std::memcmp(once.data(), twice.data(), sizeof(double) * 5) == 0;
    }
    out.push_back(check("projection is idempotent bit-for-bit", ok, "1000 random rows"));
  }

  {  // firm nonexpansiveness over 10^4 pairs
    double worst = -1.0;
    for (int trial = 0; trial < 10000; ++trial) {
      const Eigen::VectorXd x = random_row(rng, 5, 3.0);
      const Eigen::VectorXd y = random_row(rng, 5, 3.0);
      const Eigen::VectorXd dp = project_monotone_cone(x) - project_monotone_cone(y);
      const double lhs = dp.squaredNorm();
      const double rhs = dp.dot(x - y);
      worst = std::max(worst, lhs - rhs);
    }
    out.push_back(check("projection is firmly nonexpansive (1e4 pairs)", worst <= 1e-12,
                        fmt("max violation %.3g", worst)));
  }

  {  // prox nonexpansiveness across lambdas
    double worst = -1.0;
    for (double lambda : {0.01, 0.1, 1.0, 10.0})
      for (int trial = 0; trial < 1000; ++trial) {
        const Eigen::VectorXd x = random_row(rng, 5, 3.0);
        const Eigen::VectorXd y = random_row(rng, 5, 3.0);
        const double lhs =
            (prox_monotone_penalty(x, lambda) - prox_monotone_penalty(y, lambda)).norm();
        worst = std::max(worst, lhs - (x - y).norm());
      }
    out.push_back(check("prox is nonexpansive for lambda in {0.01,0.1,1,10}", worst <= 1e-9,
                        fmt("max violation %.3g", worst)));
  }

  {  // prox identities
    bool ok = true;
    for (int trial = 0; trial < 200 && ok; ++trial) {
      const Eigen::VectorXd y = random_row(rng, 5, 3.0);
      const Eigen::VectorXd same = prox_monotone_penalty(y, 0.0);
      ok = std::memcmp(same.data(), y.data(), sizeof(double) * 5) == 0;
      if (ok) {
        const Eigen::VectorXd mono = project_monotone_cone(y);
        ok = (prox_monotone_penalty(mono, 7.5) - mono).lpNorm<Eigen::Infinity>() == 0.0;
      }
    }
    out.push_back(check("prox is the identity at lambda 0 and on feasible rows", ok, ""));
  }

  {  // lambda -> infinity limit of the prox is the projection
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::VectorXd y = random_row(rng, 5, 3.0);
      const Eigen::VectorXd u = prox_monotone_penalty(y, 1e6, 1e-6);
      worst = std::max(worst, (u - project_monotone_cone(y)).lpNorm<Eigen::Infinity>());
    }
    Eigen::VectorXd spot(5);
    spot << 3, 1, 2, 4, 5;
    const double spot_err =
        (prox_monotone_penalty(spot, 1e6, 1e-6) - project_monotone_cone(spot))
            .lpNorm<Eigen::Infinity>();
    worst = std::max(worst, spot_err);
    out.push_back(check("prox at lambda=1e6 matches the cone projection to 1e-3", worst <= 1e-3,
                        fmt("max distance %.3g", worst)));
  }

  {  // penalty gradient vs central differences
    const double h = 1e-5;
    double worst = 0.0;
    int done = 0;
    int attempt = 0;
    while (done < 1000) {
      Eigen::VectorXd q = random_row(rng, 5, 2.0);
      ++attempt;
      bool near_kink = false;
      for (int i = 0; i + 1 < 5; ++i)
        if (std::abs(q[i] - q[i + 1]) < 1e-3) near_kink = true;
      if (near_kink && attempt < 100000) continue;
      const Eigen::VectorXd dir = random_row(rng, 5, 1.0).normalized();
      const double analytic = monotone_penalty_grad(q).dot(dir);
      const double numeric =
          (monotone_penalty(q + h * dir) - monotone_penalty(q - h * dir)) / (2.0 * h);
      const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, rel);
      ++done;
    }
    out.push_back(check("penalty gradient matches finite differences (1e3 rows)", worst <= 1e-6,
                        fmt("max rel error %.3g", worst)));
  }

  {  // slope-bound penalty: homogeneity of the squared excess at L = 0
    GridMeta meta{2, 1, 1.0, 0.0};
    ConstraintSpec spec;
    spec.kind = ConstraintKind::LipschitzPenalty;
    spec.lipschitz_bound = 1e-300;  // effectively zero bound
    bool ok = true;
    for (int trial = 0; trial < 100 && ok; ++trial) {
      Eigen::VectorXd v = random_row(rng, 2, 2.0);
      ValueGrid g1{v, meta};
      ValueGrid g2{2.0 * v, meta};
      const double p1 = lipschitz_penalty(g1, spec);
      const double p2 = lipschitz_penalty(g2, spec);
      ok = std::abs(p2 - 4.0 * p1) <= 1e-9 * std::max(1.0, p2);
    }
    out.push_back(check("doubling slopes quadruples the slope penalty at bound 0", ok, ""));
  }

  return out;
}

// ---------------------------------------------------------------------------
// oracle (dynamic programming)

std::vector<CheckResult> oracle_impl(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed, stream_id("oracle"));

  const ConstraintSpec cone{ConstraintKind::MonotoneCone, 1.0, 1.0};
  const ConstraintSpec penalty{ConstraintKind::MonotonePenalty, 1.0, 1.0};

  {  // sup-norm contraction of the plain backup
    double worst = -1.0;
    for (int trial = 0; trial < 10; ++trial) {
      const DiscreteMdp m = oracle::random_mdp(12, 5, 0.9, seed + trial);
      for (int pair = 0; pair < 100; ++pair) {
        const Eigen::VectorXd v1 = random_row(rng, m.n_states, 5.0);
        const Eigen::VectorXd v2 = random_row(rng, m.n_states, 5.0);
        const double lhs = (bellman_backup(v1, m) - bellman_backup(v2, m)).lpNorm<Eigen::Infinity>();
        worst = std::max(worst, lhs - m.gamma * (v1 - v2).lpNorm<Eigen::Infinity>());
      }
    }
    out.push_back(check("optimal backup is a gamma-contraction (1e3 pairs)", worst <= 1e-12,
                        fmt("max violation %.3g", worst)));
  }

  {  // contraction of the constrained backup across lambdas and both specs
    double worst = -1.0;
    for (double lambda : {0.0, 0.01, 0.1, 1.0, 10.0}) {
      const DiscreteMdp m = oracle::random_mdp(10, 5, 0.9, seed + 77);
      for (int pair = 0; pair < 100; ++pair) {
        const Eigen::VectorXd v1 = random_row(rng, m.n_states, 5.0);
        const Eigen::VectorXd v2 = random_row(rng, m.n_states, 5.0);
        for (const ConstraintSpec& spec : {cone, penalty}) {
          const double lhs = (constrained_backup(v1, m, spec, lambda) -
                              constrained_backup(v2, m, spec, lambda))
                                 .lpNorm<Eigen::Infinity>();
          worst = std::max(worst, lhs - m.gamma * (v1 - v2).lpNorm<Eigen::Infinity>());
        }
      }
    }
    out.push_back(check("constrained backup stays a gamma-contraction (lambda sweep)",
                        worst <= 1e-9, fmt("max violation %.3g", worst)));
  }

  {  // monotonicity of the backup
    bool ok = true;
    const DiscreteMdp m = oracle::random_mdp(12, 4, 0.9, seed + 5);
    for (int trial = 0; trial < 200 && ok; ++trial) {
      const Eigen::VectorXd v1 = random_row(rng, m.n_states, 5.0);
      Eigen::VectorXd bump(m.n_states);
      for (int i = 0; i < m.n_states; ++i) bump[i] = rng.uniform();
      const Eigen::VectorXd v2 = v1 + bump;
      ok = ((bellman_backup(v2, m) - bellman_backup(v1, m)).minCoeff() >= -1e-12);
    }
    out.push_back(check("optimal backup preserves pointwise order", ok, "200 pairs"));
  }

  {  // fixed point: bound, and independence of the start
    const double tol = 1e-10;
    bool ok = true;
    double worst_gap = 0.0;
    for (int trial = 0; trial < 5 && ok; ++trial) {
      const DiscreteMdp m = oracle::random_mdp(15, 5, 0.9, seed + 11 + trial);
      const FixedPointResult fp = solve_fixed_point(m, cone, 1.0, tol);
      const double bound = m.r_max() / (1.0 - m.gamma) + tol;
      ok = fp.values.lpNorm<Eigen::Infinity>() <= bound;
      if (!ok) break;
      // second start
      Eigen::VectorXd v = random_row(rng, m.n_states, 3.0);
      for (int it = 0; it < 2000; ++it) {
        Eigen::VectorXd next = constrained_backup(v, m, cone, 1.0);
        const double r = (next - v).lpNorm<Eigen::Infinity>();
        v = std::move(next);
        if (r <= tol) break;
      }
      const double gap = (v - fp.values).lpNorm<Eigen::Infinity>();
      worst_gap = std::max(worst_gap, gap);
      ok = gap <= 2.0 * tol / (1.0 - m.gamma);
    }
    out.push_back(check("fixed point is bounded and start-independent", ok,
                        fmt("max start gap %.3g", worst_gap)));
  }

  {  // penalty continuation distances are nonincreasing
    const double tol = 1e-10;
    const double slack = 4.0 * tol / (1.0 - 0.9);
    bool ok = true;
    for (int trial = 0; trial < 10 && ok; ++trial) {
      const DiscreteMdp m = oracle::random_mdp(20, 5, 0.9, seed + 101 + trial);
      const auto pts = penalty_continuation(m, penalty, {1.0, 0.1, 0.01, 0.001}, tol);
      for (size_t i = 1; i < pts.size(); ++i)
        if (pts[i].distance > pts[i - 1].distance + slack) ok = false;
    }
    out.push_back(check("continuation distances shrink as the penalty vanishes", ok, "10 MDPs"));
  }

  {  // cone fixed point has exactly nondecreasing rows
    const DiscreteMdp m = make_auction_mdp(15, 9, 0.9);
    const FixedPointResult fp = solve_fixed_point(m, cone, 1.0, 1e-10);
    long errors = 0;
    for (int s = 0; s < m.n_states; ++s) {
      const Eigen::VectorXd row = project_monotone_cone(backup_q_row(fp.values, m, s));
      for (int a = 0; a + 1 < m.n_actions; ++a)
        if (row[a] > row[a + 1] + 1e-9) ++errors;
    }
    out.push_back(check("cone fixed-point rows are nondecreasing", errors == 0,
                        fmt("%.0f ordering errors", double(errors))));
  }

  return out;
}

// ---------------------------------------------------------------------------
// grad

double pipeline_loss(const MlpParams& theta, const Batch& batch,
                     const Eigen::VectorXd& y, double lambda, ProxMode mode) {
  const Eigen::MatrixXd q = forward_batch(theta, batch.states);
  double loss = 0.0;
  for (int i = 0; i < batch.size(); ++i) {
    Eigen::VectorXd u;
    if (mode == ProxMode::Projection)
      u = project_monotone_cone(q.col(i));
    else
      u = prox_monotone_penalty(q.col(i), lambda, 1e-12);
    const double r = u[batch.actions[i]] - y[i];
    loss += r * r;
  }
  return 0.5 * loss / batch.size();
}

std::vector<CheckResult> grad_impl(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng(seed, stream_id("grad"));

  {  // vjp/jvp transpose identity
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const MlpParams p = make_mlp({2, 6, 6, 3}, trial % 2 ? Activation::Relu : Activation::Tanh,
                                   seed + trial);
      const Eigen::VectorXd x = random_row(rng, 2, 1.0);
      const Eigen::VectorXd cot = random_row(rng, 3, 1.0);
      Eigen::VectorXd tangent = random_row(rng, static_cast<int>(p.param_count()), 1.0);
      const double lhs = vjp(p, x, cot).dot(tangent);
      const double rhs = cot.dot(jvp_params(p, x, tangent));
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
    }
    out.push_back(check("vjp and jvp agree through the transpose identity", worst <= 1e-10,
                        fmt("max rel error %.3g", worst)));
  }

  {  // vjp vs finite differences
    const double h = 1e-5;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      MlpParams p = make_mlp({2, 16, 16, 1}, Activation::Tanh, seed + 31 + trial);
      const Eigen::VectorXd x = random_row(rng, 2, 1.0);
      const Eigen::VectorXd cot = Eigen::VectorXd::Ones(1);
      const Eigen::VectorXd grad = vjp(p, x, cot);
      const Eigen::VectorXd dir = random_row(rng, static_cast<int>(p.param_count()), 1.0).normalized();
      const Eigen::VectorXd flat = flatten_params(p);
      MlpParams plus = p, minus = p;
      set_from_flat(plus, flat + h * dir);
      set_from_flat(minus, flat - h * dir);
      const double numeric = (forward(plus, x)[0] - forward(minus, x)[0]) / (2.0 * h);
      worst = std::max(worst, std::abs(grad.dot(dir) - numeric) / std::max(1.0, std::abs(numeric)));
    }
    out.push_back(check("reverse-mode gradient matches finite differences", worst <= 1e-5,
                        fmt("max rel error %.3g", worst)));
  }

  {  // deterministic initialization
    const MlpParams a = make_mlp({2, 64, 64, 5}, Activation::Tanh, 42);
    const MlpParams b = make_mlp({2, 64, 64, 5}, Activation::Tanh, 42);
    const Eigen::VectorXd fa = flatten_params(a), fb = flatten_params(b);
    const bool ok = std::memcmp(fa.data(), fb.data(), sizeof(double) * fa.size()) == 0;
    out.push_back(check("identical seeds give bit-identical parameters", ok, ""));
  }

  {  // spectral norm estimate within 1e-3 at 30 iterations
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const int rows = 2 + rng.uniform_int(30);
      const int cols = 2 + rng.uniform_int(30);
      Eigen::MatrixXd w(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) w(r, c) = rng.normal();
      const double estimate = spectral_norm_estimate(w, 30);
      const double truth = w.jacobiSvd().singularValues()[0];
      worst = std::max(worst, std::abs(estimate - truth));
    }
    out.push_back(check("power iteration reaches the top singular value (30 iters)",
                        worst <= 1e-3, fmt("max abs error %.3g", worst)));
  }

  {  // normalized tanh networks are 1-Lipschitz
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      MlpParams p = make_mlp({2, 16, 16, 1}, Activation::Tanh, seed + 900 + trial);
      for (auto& w : p.weights) w *= 4.0;  // make normalization bite
      p = spectral_normalize(p, 50);
      for (int probe = 0; probe < 50; ++probe) {
        const Eigen::VectorXd x = random_row(rng, 2, 1.0);
        const Eigen::VectorXd d = random_row(rng, 2, 1.0).normalized();
        const double step = 1e-3;
        const double diff =
            std::abs(forward(p, x + step * d)[0] - forward(p, x)[0]) / step;
        worst = std::max(worst, diff);
      }
    }
    out.push_back(check("spectral-normalized tanh net is 1-Lipschitz", worst <= 1.0 + 1e-3,
                        fmt("max local slope %.6f", worst)));
  }

  {  // conjugate gradients on random SPD systems up to dim 64
    bool ok = true;
    double worst = 0.0;
    for (int trial = 0; trial < 50 && ok; ++trial) {
      const int n = 2 + rng.uniform_int(63);
      Eigen::MatrixXd r(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) r(i, j) = rng.normal();
      const Eigen::MatrixXd a = r * r.transpose() + Eigen::MatrixXd::Identity(n, n);
      const Eigen::VectorXd b = random_row(rng, n, 1.0);
      // rounding on ill-conditioned draws can push past the exact-arithmetic
      // n-step bound, so give the solver a little slack
      const CgResult res = cg_solve(
          [&](const Eigen::Ref<const Eigen::VectorXd>& w) { return (a * w).eval(); }, b, 1e-8,
          4 * n);
      const double rel = (a * res.x - b).norm() / b.norm();
      worst = std::max(worst, rel);
      ok = rel <= 1e-8;
    }
    out.push_back(check("conjugate gradients solve random SPD systems to 1e-8", ok,
                        fmt("max rel residual %.3g", worst)));
  }

  {  // SPD certificate of the prox curvature operator
    double worst = 1.0;
    for (int trial = 0; trial < 500; ++trial) {
      const Eigen::VectorXd u = random_row(rng, 5, 2.0);
      const double lambda = rng.uniform(0.0, 10.0);
      const Eigen::VectorXd w = random_row(rng, 5, 1.0);
      const Eigen::VectorXd hw = w + lambda * monotone_penalty_hess_vec(u, w);
      worst = std::min(worst, (w.dot(hw)) / w.squaredNorm());
    }
    out.push_back(check("curvature operator is positive definite", worst >= 1.0 - 1e-12,
                        fmt("min Rayleigh quotient %.12f", worst)));
  }

  {  // implicit gradient vs finite differences through the solved prox layer
    const double h = 1e-5;
    double worst = 0.0;
    int done = 0;
    std::uint64_t attempt = 0;
    while (done < 100 && attempt < 5000) {
      ++attempt;
      const double lambda = (done % 3 == 0) ? 0.1 : (done % 3 == 1 ? 0.5 : 1.0);
      MlpParams theta = make_mlp({2, 3, 5}, Activation::Tanh, seed * 1315423911ULL + attempt);
      // Spread the heads so rows carry real violations.
      Rng local(seed + attempt, stream_id("implicit-fd"));
      for (auto& w : theta.weights) w *= 3.0;
      theta.biases.back() = random_row(local, 5, 1.0);

      Batch batch;
      const int b = 4;
      batch.states.resize(2, b);
      batch.next_states.resize(2, b);
      batch.actions.resize(b);
      batch.rewards.resize(b);
      batch.indices.assign(b, 0);
      for (int i = 0; i < b; ++i) {
        batch.states(0, i) = local.uniform();
        batch.states(1, i) = 0.2 + 0.2 * local.uniform();
        batch.next_states.col(i) = batch.states.col(i);
        batch.actions[i] = local.uniform_int(5);
        batch.rewards[i] = local.uniform();
      }
      const Eigen::VectorXd y = random_row(local, b, 1.0);

      // Keep the linearization point away from hinge boundaries so the
      // finite-difference window stays inside one smooth piece.
      const Eigen::MatrixXd q = forward_batch(theta, batch.states);
      Eigen::MatrixXd u(5, b);
      bool near_kink = false;
      for (int i = 0; i < b; ++i) {
        u.col(i) = prox_monotone_penalty(q.col(i), lambda, 1e-12);
        for (int k = 0; k + 1 < 5; ++k)
          if (std::abs(u(k, i) - u(k + 1, i)) < 1e-4) near_kink = true;
      }
      if (near_kink) continue;

      ImplicitGradientOptions opt;
      opt.lambda = lambda;
      opt.mode = ProxMode::Penalty;
      opt.cg_tol = 1e-12;
      const Eigen::VectorXd grad = implicit_gradient(theta, batch, u, y, opt);

      const Eigen::VectorXd flat = flatten_params(theta);
      Eigen::VectorXd numeric(flat.size());
      MlpParams work = theta;
      for (Eigen::Index j = 0; j < flat.size(); ++j) {
        Eigen::VectorXd probe = flat;
        probe[j] = flat[j] + h;
        set_from_flat(work, probe);
        const double up = pipeline_loss(work, batch, y, lambda, ProxMode::Penalty);
        probe[j] = flat[j] - h;
        set_from_flat(work, probe);
        const double down = pipeline_loss(work, batch, y, lambda, ProxMode::Penalty);
        numeric[j] = (up - down) / (2.0 * h);
      }
      const double scale = std::max(numeric.lpNorm<Eigen::Infinity>(), 1e-6);
      const double rel = (grad - numeric).lpNorm<Eigen::Infinity>() / scale;
      worst = std::max(worst, rel);
      ++done;
    }
    out.push_back(check("implicit gradient matches finite differences (100 nets)",
                        done == 100 && worst <= 1e-3,
                        fmt("max rel error %.3g over %.0f nets", worst, double(done))));
  }

  {  // same check through the hard projection layer
    const double h = 1e-6;
    double worst = 0.0;
    int done = 0;
    std::uint64_t attempt = 0;
    while (done < 20 && attempt < 2000) {
      ++attempt;
      MlpParams theta = make_mlp({2, 3, 5}, Activation::Tanh, seed * 2654435761ULL + attempt);
      Rng local(seed + 31 * attempt, stream_id("cone-fd"));
      for (auto& w : theta.weights) w *= 3.0;
      theta.biases.back() = random_row(local, 5, 1.0);

      Batch batch;
      const int b = 3;
      batch.states.resize(2, b);
      batch.next_states.resize(2, b);
      batch.actions.resize(b);
      batch.rewards.resize(b);
      batch.indices.assign(b, 0);
      for (int i = 0; i < b; ++i) {
        batch.states(0, i) = local.uniform();
        batch.states(1, i) = 0.2 + 0.2 * local.uniform();
        batch.next_states.col(i) = batch.states.col(i);
        batch.actions[i] = local.uniform_int(5);
        batch.rewards[i] = local.uniform();
      }
      const Eigen::VectorXd y = random_row(local, b, 1.0);

      const Eigen::MatrixXd q = forward_batch(theta, batch.states);
      Eigen::MatrixXd u(5, b);
      bool degenerate = false;
      for (int i = 0; i < b; ++i) {
        u.col(i) = project_monotone_cone(q.col(i));
        // The block structure must be stable across the FD window.
        for (int k = 0; k + 1 < 5; ++k) {
          const double gap = u(k + 1, i) - u(k, i);
          if (gap != 0.0 && gap < 1e-3) degenerate = true;
        }
        if ((q.col(i) - u.col(i)).lpNorm<Eigen::Infinity>() < 1e-4) degenerate = true;
      }
      if (degenerate) continue;

      ImplicitGradientOptions opt;
      opt.mode = ProxMode::Projection;
      opt.lambda = 1.0;
      const Eigen::VectorXd grad = implicit_gradient(theta, batch, u, y, opt);

      const Eigen::VectorXd flat = flatten_params(theta);
      Eigen::VectorXd numeric(flat.size());
      MlpParams work = theta;
      for (Eigen::Index j = 0; j < flat.size(); ++j) {
        Eigen::VectorXd probe = flat;
        probe[j] = flat[j] + h;
        set_from_flat(work, probe);
        const double up = pipeline_loss(work, batch, y, 0.0, ProxMode::Projection);
        probe[j] = flat[j] - h;
        set_from_flat(work, probe);
        const double down = pipeline_loss(work, batch, y, 0.0, ProxMode::Projection);
        numeric[j] = (up - down) / (2.0 * h);
      }
      const double scale = std::max(numeric.lpNorm<Eigen::Infinity>(), 1e-6);
      worst = std::max(worst, (grad - numeric).lpNorm<Eigen::Infinity>() / scale);
      ++done;
    }
    out.push_back(check("projection-layer gradient matches finite differences",
                        done == 20 && worst <= 1e-3, fmt("max rel error %.3g", worst)));
  }

  return out;
}

}  // namespace

std::vector<CheckResult> run_props_suite(std::uint64_t seed) { return props_impl(seed); }
std::vector<CheckResult> run_oracle_suite(std::uint64_t seed) { return oracle_impl(seed); }
std::vector<CheckResult> run_grad_suite(std::uint64_t seed) { return grad_impl(seed); }

int report_checks(const std::vector<CheckResult>& checks) {
  int failures = 0;
  for (const CheckResult& c : checks) {
    std::printf("[%s] %s%s%s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(),
                c.detail.empty() ? "" : ": ", c.detail.c_str());
    if (!c.passed) ++failures;
  }
  return failures;
}

}  // namespace proxrl
