#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "proxrl/errors.hpp"
#include "proxrl/implicit.hpp"
#include "proxrl/rng.hpp"

using namespace proxrl;

namespace {

Batch tiny_batch(Rng& rng, int b) {
  Batch batch;
  batch.states.resize(2, b);
  batch.next_states.resize(2, b);
  batch.actions.resize(b);
  batch.rewards.resize(b);
  batch.indices.assign(static_cast<size_t>(b), 0);
  for (int i = 0; i < b; ++i) {
    batch.states(0, i) = rng.uniform();
    batch.states(1, i) = 0.2 + 0.2 * rng.uniform();
    batch.next_states(0, i) = rng.uniform();
    batch.next_states(1, i) = 0.2 + 0.2 * rng.uniform();
    batch.actions[i] = rng.uniform_int(5);
    batch.rewards[i] = rng.uniform(-0.4, 1.0);
  }
  return batch;
}

}  // namespace

TEST_CASE("targets from a zero critic are the rewards") {
  Rng rng(3, 0);
  const Batch batch = tiny_batch(rng, 6);
  MlpParams zero = make_mlp({2, 4, 5}, Activation::Tanh, 1);
  for (auto& w : zero.weights) w.setZero();
  for (auto& b : zero.biases) b.setZero();
  const Eigen::VectorXd y = bellman_targets(batch, zero, 0.9);
  CHECK((y - batch.rewards).norm() == 0.0);
}

TEST_CASE("targets at gamma zero are the rewards for any critic") {
  Rng rng(5, 0);
  const Batch batch = tiny_batch(rng, 6);
  const MlpParams critic = make_mlp({2, 8, 5}, Activation::Tanh, 2);
  const Eigen::VectorXd y = bellman_targets(batch, critic, 0.0);
  CHECK((y - batch.rewards).norm() == 0.0);
}

TEST_CASE("targets on a hand batch with a one-layer critic") {
  // critic(s) = W s + b with known numbers
  MlpParams critic = make_mlp({2, 5}, Activation::Tanh, 3);
  critic.weights[0].setZero();
  critic.weights[0](0, 0) = 1.0;   // head 0 reads x
  critic.weights[0](2, 1) = 10.0;  // head 2 reads 10 c
  critic.biases[0] << 0.1, 0.2, 0.0, 0.0, -5.0;

  Batch batch;
  batch.states.resize(2, 2);
  batch.next_states.resize(2, 2);
  batch.actions.resize(2);
  batch.rewards.resize(2);
  batch.indices = {0, 1};
  batch.states << 0.5, 0.25, 0.3, 0.4;
  batch.next_states << 1.0, 0.0, 0.2, 0.4;
  batch.actions << 0, 3;
  batch.rewards << 1.0, -0.1;

  // rows at s' = (1.0, 0.2): {1.1, 0.2, 2.0, 0.0, -5.0} -> max 2.0
  // rows at s' = (0.0, 0.4): {0.1, 0.2, 4.0, 0.0, -5.0} -> max 4.0
  const Eigen::VectorXd y = bellman_targets(batch, critic, 0.5);
  CHECK(y[0] == doctest::Approx(1.0 + 0.5 * 2.0).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(-0.1 + 0.5 * 4.0).epsilon(1e-15));
}

TEST_CASE("targets reject non-finite critic output") {
  Rng rng(7, 0);
  const Batch batch = tiny_batch(rng, 3);
  MlpParams critic = make_mlp({2, 5}, Activation::Tanh, 4);
  critic.biases[0][0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(bellman_targets(batch, critic, 0.9), TrainingError);
}

TEST_CASE("batch objective") {
  Eigen::VectorXd u(2), y(2);
  u << 1.0, 2.0;
  y << 1.0, 2.0;
  CHECK(batch_objective(u, y, 3.0, 0.0) == 0.0);

  y << 0.0, 0.0;
  // (1/4) * (1 + 4) = 1.25 at lambda 0
  CHECK(batch_objective(u, y, 0.0, 123.0) == doctest::Approx(1.25).epsilon(1e-15));

  // hand case with a penalty value
  CHECK(batch_objective(u, y, 2.0, 0.5) == doctest::Approx(1.25 + 1.0).epsilon(1e-15));
  CHECK_THROWS_AS(batch_objective(u, Eigen::VectorXd::Zero(3), 0.0, 0.0), DomainError);
}

TEST_CASE("prox residual forms") {
  Eigen::MatrixXd u(5, 1), t(5, 1);
  u.col(0) << 1, 0, 0, 0, 0;
  t.col(0) << 0.5, 0.5, 0.5, 0.5, 0.5;

  const Eigen::MatrixXd g0 = prox_residual(u, t, 0.0);
  CHECK((g0 - (u - t)).norm() == 0.0);

  const Eigen::MatrixXd g1 = prox_residual(u, t, 1.0);
  const Eigen::VectorXd expect = (u.col(0) - t.col(0)) + monotone_penalty_grad(u.col(0));
  CHECK((g1.col(0) - expect).norm() == 0.0);

  // zero iff the row solves the prox subproblem
  const Eigen::VectorXd solved = prox_monotone_penalty(t.col(0), 1.0);
  Eigen::MatrixXd us(5, 1);
  us.col(0) = solved;
  CHECK(prox_residual(us, t, 1.0).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("prox step basics") {
  Rng rng(11, 0);
  Eigen::MatrixXd t(5, 3);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 5; ++i) t(i, j) = rng.uniform(-1, 1);

  // feasible start equal to the target stays put
  Eigen::MatrixXd feas = t;
  for (int j = 0; j < 3; ++j) feas.col(j) = project_monotone_cone(t.col(j));
  DualState dual{1.0, 0.0};
  const Eigen::MatrixXd kept = prox_step(feas, feas, dual, 0.2, 3);
  CHECK((kept - feas).norm() == 0.0);

  // lambda 0, full step lands on the target (up to one rounding)
  DualState zero{0.0, 0.0};
  const Eigen::MatrixXd jumped = prox_step(feas, t, zero, 1.0, 1);
  CHECK((jumped - t).lpNorm<Eigen::Infinity>() <= 1e-14);
}

TEST_CASE("inner iterations approach the exact prox monotonically") {
  Rng rng(13, 0);
  const double lambda = 1.0;
  DualState dual{lambda, 0.0};
  const double step = 0.5 / (1.0 + 2.0 * lambda);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd t(5, 1);
    for (int i = 0; i < 5; ++i) t(i, 0) = rng.uniform(-2, 2);
    const Eigen::VectorXd exact = prox_monotone_penalty(t.col(0), lambda, 1e-12);

    Eigen::MatrixXd u = t;
    double prev = (u.col(0) - exact).norm();
    for (int it = 0; it < 5; ++it) {
      u = prox_step(u, t, dual, step, 1);
      const double dist = (u.col(0) - exact).norm();
      CHECK(dist <= prev + 1e-12);
      prev = dist;
    }
  }
}

TEST_CASE("projected steps stay on the cone") {
  Rng rng(17, 0);
  DualState dual{2.0, 0.0};
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd t(5, 2), u0(5, 2);
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 5; ++i) {
        t(i, j) = rng.uniform(-2, 2);
        u0(i, j) = rng.uniform(-2, 2);
      }
    for (int j = 0; j < 2; ++j) u0.col(j) = project_monotone_cone(u0.col(j));
    const Eigen::MatrixXd u = prox_step(u0, t, dual, 0.5 / (1 + 2 * dual.lambda), 2, true);
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i + 1 < 5; ++i) CHECK(u(i, j) <= u(i + 1, j));
  }
}

TEST_CASE("prox step rejects bad arguments and guards descent") {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(5, 1);
  DualState dual{1.0, 0.0};
  CHECK_THROWS_AS(prox_step(t, t, dual, 0.0, 1), DomainError);
  CHECK_THROWS_AS(prox_step(t, t, dual, 0.5, 0), DomainError);

  // a grossly oversized step on an infeasible start must be caught
  Eigen::MatrixXd u0(5, 1);
  u0.col(0) << 4, -4, 4, -4, 4;
  DualState heavy{50.0, 0.0};
  CHECK_THROWS_AS(prox_step(u0, t, heavy, 1.0, 1), SolverError);
}

TEST_CASE("conjugate gradients on hand systems") {
  const auto identity = [](const Eigen::Ref<const Eigen::VectorXd>& w) { return w.eval(); };
  Eigen::VectorXd b(2);
  b << 0.7, -0.3;
  const CgResult r1 = cg_solve(identity, b);
  CHECK(r1.iterations == 1);
  CHECK((r1.x - b).norm() == 0.0);

  Eigen::MatrixXd d = Eigen::Vector2d(1, 2).asDiagonal();
  const CgResult r2 = cg_solve(
      [&](const Eigen::Ref<const Eigen::VectorXd>& w) { return (d * w).eval(); },
      Eigen::Vector2d(1, 2));
  CHECK((r2.x - Eigen::Vector2d(1, 1)).lpNorm<Eigen::Infinity>() <= 1e-10);

  Eigen::MatrixXd a(2, 2);
  a << 2, 1, 1, 2;
  const CgResult r3 = cg_solve(
      [&](const Eigen::Ref<const Eigen::VectorXd>& w) { return (a * w).eval(); },
      Eigen::Vector2d(3, 3));
  CHECK((r3.x - Eigen::Vector2d(1, 1)).lpNorm<Eigen::Infinity>() <= 1e-10);

  CHECK(cg_solve(identity, Eigen::VectorXd::Zero(4)).x.norm() == 0.0);
}

TEST_CASE("conjugate gradients reports non-convergence") {
  Eigen::MatrixXd a(2, 2);
  a << 2, 1, 1, 2;
  CHECK_THROWS_AS(cg_solve([&](const Eigen::Ref<const Eigen::VectorXd>& w) { return (a * w).eval(); },
                           Eigen::Vector2d(3, -1), 1e-14, 1),
                  SolverError);
}

TEST_CASE("implicit gradient reduces to the plain semi-gradient at lambda zero") {
  Rng rng(19, 0);
  const Batch batch = tiny_batch(rng, 8);
  const MlpParams theta = make_mlp({2, 8, 5}, Activation::Tanh, 5);
  ForwardTrace tr;
  const Eigen::MatrixXd q = forward_batch_traced(theta, batch.states, tr);
  Eigen::VectorXd y(8);
  for (int i = 0; i < 8; ++i) y[i] = rng.uniform(-1, 1);

  ImplicitGradientOptions opt;
  opt.lambda = 0.0;
  opt.mode = ProxMode::Penalty;
  const Eigen::VectorXd implicit = implicit_gradient(theta, batch, tr, q, y, opt);

  Eigen::MatrixXd cots = Eigen::MatrixXd::Zero(5, 8);
  for (int i = 0; i < 8; ++i) cots(batch.actions[i], i) = (q(batch.actions[i], i) - y[i]) / 8.0;
  const Eigen::VectorXd direct = vjp_batch(theta, tr, cots);
  CHECK((implicit - direct).norm() == 0.0);
}

TEST_CASE("implicit gradient vanishes when the constrained outputs hit the targets") {
  Rng rng(23, 0);
  const Batch batch = tiny_batch(rng, 5);
  const MlpParams theta = make_mlp({2, 8, 5}, Activation::Tanh, 6);
  const Eigen::MatrixXd q = forward_batch(theta, batch.states);
  Eigen::MatrixXd u(5, 5);
  Eigen::VectorXd y(5);
  for (int i = 0; i < 5; ++i) {
    u.col(i) = prox_monotone_penalty(q.col(i), 0.7, 1e-12);
    y[i] = u(batch.actions[i], i);
  }
  ImplicitGradientOptions opt;
  opt.lambda = 0.7;
  opt.mode = ProxMode::Penalty;
  CHECK(implicit_gradient(theta, batch, u, y, opt).norm() == 0.0);
}

TEST_CASE("implicit gradient matches finite differences on a small net") {
  Rng rng(29, 0);
  const double lambda = 0.5;
  const double h = 1e-5;

  MlpParams theta = make_mlp({2, 3, 5}, Activation::Tanh, 7);
  for (auto& w : theta.weights) w *= 3.0;
  Rng brng(31, 0);
  Batch batch = tiny_batch(brng, 3);
  Eigen::VectorXd y(3);
  for (int i = 0; i < 3; ++i) y[i] = rng.uniform(-1, 1);

  const Eigen::MatrixXd q = forward_batch(theta, batch.states);
  Eigen::MatrixXd u(5, 3);
  for (int i = 0; i < 3; ++i) u.col(i) = prox_monotone_penalty(q.col(i), lambda, 1e-12);

  ImplicitGradientOptions opt;
  opt.lambda = lambda;
  opt.mode = ProxMode::Penalty;
  opt.cg_tol = 1e-12;
  const Eigen::VectorXd grad = implicit_gradient(theta, batch, u, y, opt);

  auto loss = [&](const MlpParams& p) {
    const Eigen::MatrixXd rows = forward_batch(p, batch.states);
    double total = 0.0;
    for (int i = 0; i < 3; ++i) {
      const Eigen::VectorXd sol = prox_monotone_penalty(rows.col(i), lambda, 1e-12);
      const double r = sol[batch.actions[i]] - y[i];
      total += r * r;
    }
    return 0.5 * total / 3.0;
  };
  const Eigen::VectorXd flat = flatten_params(theta);
  MlpParams work = theta;
  Eigen::VectorXd numeric(flat.size());
  for (Eigen::Index j = 0; j < flat.size(); ++j) {
    Eigen::VectorXd probe = flat;
    probe[j] += h;
    set_from_flat(work, probe);
    const double up = loss(work);
    probe[j] = flat[j] - h;
    set_from_flat(work, probe);
    numeric[j] = (up - loss(work)) / (2 * h);
  }
  const double scale = std::max(1e-6, numeric.lpNorm<Eigen::Infinity>());
  CHECK((grad - numeric).lpNorm<Eigen::Infinity>() / scale <= 1e-3);
}

TEST_CASE("curvature operator is positive definite") {
  Rng rng(37, 0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd u(5), w(5);
    for (int i = 0; i < 5; ++i) {
      u[i] = rng.uniform(-2, 2);
      w[i] = rng.uniform(-1, 1);
    }
    const double lambda = rng.uniform(0.0, 10.0);
    const Eigen::VectorXd hw = w + lambda * monotone_penalty_hess_vec(u, w);
    CHECK(w.dot(hw) >= w.squaredNorm() - 1e-12);
  }
}

TEST_CASE("batch validation") {
  Rng rng(41, 0);
  Batch batch = tiny_batch(rng, 4);
  batch.actions[2] = 7;
  CHECK_THROWS_AS(batch.validate(5), DomainError);
  batch.actions[2] = 2;
  CHECK_NOTHROW(batch.validate(5));
  batch.rewards[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(batch.validate(5), DomainError);
}
