#include "proxrl/agents.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "proxrl/errors.hpp"

namespace proxrl {

namespace {

std::uint64_t sub_seed(std::uint64_t seed, const char* label) {
  return splitmix64(seed ^ stream_id(label));
}

Eigen::VectorXd log_softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

void polyak_average(MlpParams& target, const MlpParams& online, double tau) {
  for (size_t l = 0; l < target.weights.size(); ++l) {
    target.weights[l] = tau * online.weights[l] + (1.0 - tau) * target.weights[l];
    target.biases[l] = tau * online.biases[l] + (1.0 - tau) * target.biases[l];
  }
}

long count_mono_errors_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows, double tol) {
  long errors = 0;
  for (Eigen::Index j = 0; j < rows.cols(); ++j)
    for (Eigen::Index i = 0; i + 1 < rows.rows(); ++i)
      if (rows(i, j) > rows(i + 1, j) + tol) ++errors;
  return errors;
}

double mean_row_penalty(const Eigen::Ref<const Eigen::MatrixXd>& rows) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < rows.cols(); ++j) total += monotone_penalty(rows.col(j));
  return total / static_cast<double>(rows.cols());
}

// Frozen evaluation data: a state grid for ordering checks and fresh states
// with their exact reward rows for policy value.
struct EvalContext {
  Eigen::MatrixXd grid_X;
  Eigen::MatrixXd fresh_X;
  Eigen::MatrixXd fresh_rows;
};

EvalContext make_eval_context(const TrainConfig& cfg) {
  EvalContext ec;
  const auto grid = evaluation_grid(cfg.eval_grid_nx, cfg.eval_grid_nc);
  ec.grid_X = states_to_columns(grid);
  const auto fresh = sample_states(cfg.eval_fresh_states, sub_seed(cfg.seed, "eval-states"));
  ec.fresh_X = states_to_columns(fresh);
  ec.fresh_rows.resize(kNumBids, static_cast<Eigen::Index>(fresh.size()));
  for (size_t i = 0; i < fresh.size(); ++i)
    ec.fresh_rows.col(static_cast<Eigen::Index>(i)) = expected_reward_row(fresh[i]);
  return ec;
}

double exact_policy_return(const PolicyParams& policy, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& reward_rows) {
  const Eigen::MatrixXd probs = policy_probs_batch(policy, X);
  return (probs.array() * reward_rows.array()).colwise().sum().mean();
}

struct ActorGrad {
  Eigen::VectorXd grad;     // flat, for descent on -J (+ penalty)
  double c_score = 0.0;     // mean penalty of the weighted score rows
};

ActorGrad actor_gradient(const PolicyParams& policy, const Eigen::Ref<const Eigen::MatrixXd>& X,
                         const Eigen::Ref<const Eigen::MatrixXd>& q_eff, const TrainConfig& cfg,
                         bool score_penalty, double lambda, Rng* score_rng) {
  const Eigen::Index b = X.cols();
  ForwardTrace tr;
  const Eigen::MatrixXd logits = forward_batch_traced(policy.phi, X, tr);
  const double inv_b = 1.0 / static_cast<double>(b);
  const double alpha = cfg.alpha_entropy;

  Eigen::MatrixXd cots(logits.rows(), b);
  double c_score_total = 0.0;
  for (Eigen::Index j = 0; j < b; ++j) {
    const Eigen::VectorXd lsm = log_softmax(logits.col(j));
    const Eigen::VectorXd pi = lsm.array().exp();
    const Eigen::VectorXd q = q_eff.col(j);

    Eigen::VectorXd dj;  // ascent direction on the logits
    if (cfg.use_score_function_actor) {
      if (!score_rng) throw TrainingError("score-function actor needs a random stream");
      double rest = score_rng->uniform();
      int a = 0;
      for (; a + 1 < pi.size(); ++a) {
        rest -= pi[a];
        if (rest < 0.0) break;
      }
      const double weight = q[a] - alpha * lsm[a];
      dj = -pi * weight;
      dj[a] += weight;
    } else {
      const Eigen::VectorXd gains = q - alpha * lsm;
      const double mean_gain = pi.dot(gains);
      dj = pi.array() * (gains.array() - mean_gain);
    }
    Eigen::VectorXd cot = -inv_b * dj;

    if (score_penalty && lambda > 0.0) {
      const Eigen::VectorXd scores = pi.array() * q.array();
      c_score_total += monotone_penalty(scores);
      const Eigen::VectorXd gc = monotone_penalty_grad(scores);
      const double mix = (gc.array() * q.array() * pi.array()).sum();
      const Eigen::VectorXd dpen = pi.array() * (q.array() * gc.array() - mix);
      cot += (lambda * inv_b) * dpen;
    }
    cots.col(j) = cot;
  }

  ActorGrad out;
  out.grad = vjp_batch(policy.phi, tr, cots);
  out.c_score = c_score_total * inv_b;
  return out;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::FixedLambdaWeak: return "fixed_lambda_weak";
    case Variant::FixedLambdaStrong: return "fixed_lambda_strong";
    case Variant::SoftPenalty: return "soft_penalty";
    case Variant::NoWarmStart: return "no_warm_start";
    case Variant::Inner1: return "inner1";
    case Variant::Inner5: return "inner5";
    case Variant::NoSpectralNorm: return "no_spectral_norm";
    case Variant::ActorOnlyConstraint: return "actor_only_constraint";
  }
  throw ConfigError("unknown variant");
}

Variant variant_from_string(const std::string& name) {
  if (name == "full") return Variant::Full;
  if (name == "fixed_lambda_weak") return Variant::FixedLambdaWeak;
  if (name == "fixed_lambda_strong") return Variant::FixedLambdaStrong;
  if (name == "soft_penalty") return Variant::SoftPenalty;
  if (name == "no_warm_start") return Variant::NoWarmStart;
  if (name == "inner1") return Variant::Inner1;
  if (name == "inner5") return Variant::Inner5;
  if (name == "no_spectral_norm") return Variant::NoSpectralNorm;
  if (name == "actor_only_constraint") return Variant::ActorOnlyConstraint;
  throw ConfigError("unknown variant: " + name);
}

void TrainConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("TrainConfig: gamma must be in [0,1)");
  if (lambda0 < 0.0) throw ConfigError("TrainConfig: lambda0 must be >= 0");
  if (!(eta_theta > 0.0) || !(eta_phi > 0.0) || eta_lambda < 0.0)
    throw ConfigError("TrainConfig: learning rates must be positive");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("TrainConfig: tau must be in [0,1]");
  if (alpha_entropy < 0.0) throw ConfigError("TrainConfig: alpha_entropy must be >= 0");
  if (inner_iters < 1) throw ConfigError("TrainConfig: inner_iters must be >= 1");
  if (steps < 0) throw ConfigError("TrainConfig: steps must be >= 0");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (hidden_width < 1) throw ConfigError("TrainConfig: hidden_width must be >= 1");
  if (!(mono_tol > 0.0)) throw ConfigError("TrainConfig: mono_tol must be > 0");
  if (!(expectile > 0.0 && expectile < 1.0)) throw ConfigError("TrainConfig: expectile in (0,1)");
  if (cql_weight < 0.0) throw ConfigError("TrainConfig: cql_weight must be >= 0");
}

Eigen::MatrixXd policy_probs_batch(const PolicyParams& policy,
                                   const Eigen::Ref<const Eigen::MatrixXd>& X) {
  Eigen::MatrixXd logits = forward_batch(policy.phi, X);
  for (Eigen::Index j = 0; j < logits.cols(); ++j)
    logits.col(j) = log_softmax(logits.col(j)).array().exp();
  return logits;
}

Eigen::VectorXd policy_probs(const PolicyParams& policy, const AuctionState& s) {
  Eigen::Vector2d x(s.x, s.c);
  return policy_probs_batch(policy, x).col(0);
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_trace_csv: cannot open " + path);
  std::fprintf(f, "step,bellman_residual,c_value,lambda,eval_return,monotonicity_errors\n");
  for (const TraceRow& row : trace) {
    if (row.has_eval)
      std::fprintf(f, "%ld,%.17g,%.17g,%.17g,%.17g,%ld\n", row.step, row.bellman_residual,
                   row.c_value, row.lambda, row.eval_return, row.mono_errors);
    else
      std::fprintf(f, "%ld,%.17g,%.17g,%.17g,,\n", row.step, row.bellman_residual, row.c_value,
                   row.lambda);
  }
  if (std::fclose(f) != 0) throw std::runtime_error("write_trace_csv: write failed");
}

ResolvedPipeline apply_variant(const TrainConfig& cfg) {
  ResolvedPipeline p;
  p.dual_enabled = true;
  p.lambda_init = cfg.lambda0;
  p.warm_start = cfg.warm_start;
  p.inner_iters = cfg.inner_iters;
  p.spectral_norm = cfg.spectral_norm;
  switch (cfg.variant) {
    case Variant::Full:
      p.critic_mode = ProxMode::Projection;
      break;
    case Variant::FixedLambdaWeak:
      // Soft prox layer with a pinned small weight; the hard projection stays off.
      p.critic_mode = ProxMode::Penalty;
      p.dual_enabled = false;
      p.lambda_init = 0.01;
      break;
    case Variant::FixedLambdaStrong:
      // Pinned large weight: projection stays on and the weight throttles the
      // inner solver (step 0.5/(1+2*lambda)) and the first-visit penalty kick.
      p.critic_mode = ProxMode::Projection;
      p.dual_enabled = false;
      p.lambda_init = 10.0;
      break;
    case Variant::SoftPenalty:
      p.critic_mode = ProxMode::Off;
      p.soft_penalty_loss = true;
      break;
    case Variant::NoWarmStart:
      p.critic_mode = ProxMode::Projection;
      p.warm_start = false;
      break;
    case Variant::Inner1:
      p.critic_mode = ProxMode::Projection;
      p.inner_iters = 1;
      break;
    case Variant::Inner5:
      p.critic_mode = ProxMode::Projection;
      p.inner_iters = 5;
      break;
    case Variant::NoSpectralNorm:
      p.critic_mode = ProxMode::Projection;
      p.spectral_norm = false;
      break;
    case Variant::ActorOnlyConstraint:
      p.critic_mode = ProxMode::Off;
      p.actor_score_penalty = true;
      break;
  }
  return p;
}

Batch make_batch(const Dataset& data, const std::vector<std::int64_t>& idx) {
  Batch b;
  const int n = static_cast<int>(idx.size());
  b.states.resize(2, n);
  b.next_states.resize(2, n);
  b.actions.resize(n);
  b.rewards.resize(n);
  b.indices = idx;
  for (int i = 0; i < n; ++i) {
    const Transition& t = data.transitions[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    b.states(0, i) = t.s.x;
    b.states(1, i) = t.s.c;
    b.next_states(0, i) = t.s_next.x;
    b.next_states(1, i) = t.s_next.c;
    b.actions[i] = t.a;
    b.rewards[i] = t.r;
  }
  return b;
}

Batch sample_batch(const Dataset& data, int batch_size, Rng& rng) {
  std::vector<std::int64_t> idx(static_cast<size_t>(batch_size));
  for (auto& i : idx) i = rng.uniform_index(data.size());
  return make_batch(data, idx);
}

namespace {

// Shared fitted-Q skeleton. The constraint-aware pipelines, the plain
// reference, and the conservative baseline differ only in how the critic
// cotangents are produced; keeping one loop makes the lambda->0 and
// cql_weight->0 reductions exact.
TrainResult run_q_loop(const Dataset& data, const TrainConfig& cfg, const ResolvedPipeline& pipe,
                       double cql_weight) {
  cfg.validate();
  data.validate();

  const int h = cfg.hidden_width;
  TrainResult out;
  out.pipeline = pipe;
  CriticState& cs = out.critic;
  cs.theta = make_mlp({2, h, h, kNumBids}, Activation::Tanh, sub_seed(cfg.seed, "critic"));
  cs.theta_bar = cs.theta;
  cs.dual.lambda = pipe.lambda_init;
  cs.dual.eta_lambda = cfg.eta_lambda;
  out.policy.phi = make_mlp({2, h, h, kNumBids}, Activation::Tanh, sub_seed(cfg.seed, "actor"));
  out.policy.temperature = cfg.alpha_entropy;

  const std::int64_t n_data = data.size();
  const bool wants_prox = pipe.critic_mode != ProxMode::Off;
  if (wants_prox) {
    cs.u_prev = Eigen::MatrixXd::Zero(kNumBids, n_data);
    cs.z_prev = Eigen::MatrixXd::Zero(kNumBids, n_data);
    cs.seen.assign(static_cast<size_t>(n_data), 0);
  }

  SgdState st_theta{Eigen::VectorXd(), cfg.momentum};
  SgdState st_phi{Eigen::VectorXd(), cfg.momentum};
  Rng batch_rng(cfg.seed, stream_id("batch"));
  Rng actor_rng(cfg.seed, stream_id("actor-score"));
  const EvalContext ec = make_eval_context(cfg);
  out.trace.reserve(static_cast<size_t>(cfg.steps));

  try {
    for (long t = 1; t <= cfg.steps; ++t) {
      const Batch batch = sample_batch(data, cfg.batch_size, batch_rng);
      const double lam = cs.dual.lambda;
      const bool active = wants_prox && lam > 0.0;
      const ProxMode mode = active ? pipe.critic_mode : ProxMode::Off;

      const Eigen::VectorXd y = bellman_targets(
          batch,
          [&](const Eigen::Ref<const Eigen::MatrixXd>& X) {
            return constrained_q_batch(cs.theta_bar, X, mode, lam);
          },
          cfg.gamma);

      ForwardTrace tr;
      const Eigen::MatrixXd q_raw = forward_batch_traced(cs.theta, batch.states, tr);
      if (!q_raw.allFinite()) throw TrainingError("non-finite critic output");
      const int b = batch.size();
      const double inv_b = 1.0 / static_cast<double>(b);

      Eigen::VectorXd grad;
      double c_value = 0.0;
      double residual = 0.0;

      if (active) {
        const bool project = pipe.critic_mode == ProxMode::Projection;
        Eigen::MatrixXd u0(kNumBids, b);
        for (int i = 0; i < b; ++i) {
          const auto di = batch.indices[static_cast<size_t>(i)];
          if (pipe.warm_start && cs.seen[static_cast<size_t>(di)])
            u0.col(i) = cs.u_prev.col(di);
          else
            u0.col(i) = project ? project_monotone_cone(q_raw.col(i)) : q_raw.col(i);
        }
        const double step = 0.5 / (1.0 + 2.0 * lam);
        const Eigen::MatrixXd u = prox_step(u0, q_raw, cs.dual, step, pipe.inner_iters, project);
        for (int i = 0; i < b; ++i) {
          const auto di = batch.indices[static_cast<size_t>(i)];
          cs.u_prev.col(di) = u.col(i);
          cs.seen[static_cast<size_t>(di)] = 1;
        }
        c_value = mean_row_penalty(u);

        Eigen::MatrixXd z_warm(kNumBids, b);
        for (int i = 0; i < b; ++i) z_warm.col(i) = cs.z_prev.col(batch.indices[static_cast<size_t>(i)]);
        ImplicitGradientOptions opt;
        opt.lambda = lam;
        opt.mode = pipe.critic_mode;
        opt.z_warm = &z_warm;
        grad = implicit_gradient(cs.theta, batch, tr, u, y, opt);
        for (int i = 0; i < b; ++i) cs.z_prev.col(batch.indices[static_cast<size_t>(i)]) = z_warm.col(i);

        for (int i = 0; i < b; ++i) residual += std::abs(u(batch.actions[i], i) - y[i]);
        residual *= inv_b;
      } else {
        Eigen::MatrixXd cots = Eigen::MatrixXd::Zero(kNumBids, b);
        for (int i = 0; i < b; ++i) {
          const int a = batch.actions[i];
          cots(a, i) = (q_raw(a, i) - y[i]) * inv_b;
          residual += std::abs(q_raw(a, i) - y[i]);
        }
        residual *= inv_b;
        c_value = mean_row_penalty(q_raw);
        if (pipe.soft_penalty_loss && lam > 0.0) {
          for (int i = 0; i < b; ++i)
            cots.col(i) += (lam * inv_b) * monotone_penalty_grad(q_raw.col(i));
        }
        if (cql_weight > 0.0) {
          for (int i = 0; i < b; ++i) {
            const Eigen::VectorXd sm = log_softmax(q_raw.col(i)).array().exp();
            cots.col(i) += (cql_weight * inv_b) * sm;
            cots(batch.actions[i], i) -= cql_weight * inv_b;
          }
        }
        grad = vjp_batch(cs.theta, tr, cots);
      }
      if (!grad.allFinite()) throw TrainingError("non-finite critic gradient");

      sgd_step(cs.theta, grad, cfg.eta_theta, st_theta);
      if (pipe.spectral_norm) cs.theta = spectral_normalize(cs.theta, 1);

      // Actor ascent on the constrained critic.
      const Eigen::MatrixXd q_actor = constrained_q_batch(cs.theta, batch.states, mode, lam);
      const ActorGrad ag =
          actor_gradient(out.policy, batch.states, q_actor, cfg, pipe.actor_score_penalty, lam,
                         cfg.use_score_function_actor ? &actor_rng : nullptr);
      if (!ag.grad.allFinite()) throw TrainingError("non-finite actor gradient");
      sgd_step(out.policy.phi, ag.grad, cfg.eta_phi, st_phi);

      if (pipe.dual_enabled)
        cs.dual = dual_update(cs.dual, pipe.actor_score_penalty ? ag.c_score : c_value);
      polyak_average(cs.theta_bar, cs.theta, cfg.tau);

      TraceRow row;
      row.step = t;
      row.bellman_residual = residual;
      row.c_value = pipe.actor_score_penalty ? ag.c_score : c_value;
      row.lambda = cs.dual.lambda;
      if (cfg.eval_every > 0 && (t % cfg.eval_every == 0 || t == cfg.steps)) {
        row.has_eval = true;
        row.eval_return = exact_policy_return(out.policy, ec.fresh_X, ec.fresh_rows);
        const Eigen::MatrixXd grid_rows =
            constrained_q_batch(cs.theta, ec.grid_X, mode, cs.dual.lambda);
        row.mono_errors = count_mono_errors_rows(grid_rows, cfg.mono_tol);
      }
      out.trace.push_back(row);
    }
  } catch (const std::exception& e) {
    out.aborted = true;
    out.abort_reason = e.what();
  }
  return out;
}

}  // namespace

TrainResult train_constraint_aware(const Dataset& data, const TrainConfig& cfg) {
  return run_q_loop(data, cfg, apply_variant(cfg), 0.0);
}

TrainResult train_fitted_q(const Dataset& data, const TrainConfig& cfg) {
  ResolvedPipeline plain;
  plain.critic_mode = ProxMode::Off;
  plain.dual_enabled = false;
  plain.lambda_init = 0.0;
  plain.spectral_norm = false;
  return run_q_loop(data, cfg, plain, 0.0);
}

TrainResult train_cql(const Dataset& data, const TrainConfig& cfg, double cql_weight) {
  if (cql_weight < 0.0) throw ConfigError("train_cql: cql_weight must be >= 0");
  ResolvedPipeline plain;
  plain.critic_mode = ProxMode::Off;
  plain.dual_enabled = false;
  plain.lambda_init = 0.0;
  plain.spectral_norm = false;
  return run_q_loop(data, cfg, plain, cql_weight);
}

double expectile_loss(double u, double tau) {
  const double w = u < 0.0 ? (1.0 - tau) : tau;
  return w * u * u;
}

double conservative_penalty(const Eigen::Ref<const Eigen::VectorXd>& q, int logged) {
  if (logged < 0 || logged >= q.size()) throw DomainError("conservative_penalty: bad index");
  const double m = q.maxCoeff();
  const double lse = m + std::log((q.array() - m).exp().sum());
  return lse - q[logged];
}

TrainResult train_iql(const Dataset& data, const TrainConfig& cfg, double expectile) {
  cfg.validate();
  data.validate();
  if (!(expectile >= 0.5 && expectile < 1.0))
    throw ConfigError("train_iql: expectile must be in [0.5, 1)");

  const int h = cfg.hidden_width;
  TrainResult out;
  out.pipeline.critic_mode = ProxMode::Off;
  out.pipeline.dual_enabled = false;
  out.pipeline.lambda_init = 0.0;
  out.pipeline.spectral_norm = false;
  CriticState& cs = out.critic;
  cs.theta = make_mlp({2, h, h, kNumBids}, Activation::Tanh, sub_seed(cfg.seed, "critic"));
  cs.theta_bar = cs.theta;
  MlpParams vnet = make_mlp({2, h, h, 1}, Activation::Tanh, sub_seed(cfg.seed, "vnet"));
  out.policy.phi = make_mlp({2, h, h, kNumBids}, Activation::Tanh, sub_seed(cfg.seed, "actor"));
  out.policy.temperature = cfg.alpha_entropy;

  SgdState st_q{Eigen::VectorXd(), cfg.momentum};
  SgdState st_v{Eigen::VectorXd(), cfg.momentum};
  SgdState st_phi{Eigen::VectorXd(), cfg.momentum};
  Rng batch_rng(cfg.seed, stream_id("batch"));
  const EvalContext ec = make_eval_context(cfg);
  out.trace.reserve(static_cast<size_t>(cfg.steps));

  try {
    for (long t = 1; t <= cfg.steps; ++t) {
      const Batch batch = sample_batch(data, cfg.batch_size, batch_rng);
      const int b = batch.size();
      const double inv_b = 1.0 / static_cast<double>(b);

      // Value net: expectile regression toward target-critic values at the
      // logged actions.
      const Eigen::MatrixXd rows_bar = forward_batch(cs.theta_bar, batch.states);
      ForwardTrace tr_v;
      const Eigen::MatrixXd v_out = forward_batch_traced(vnet, batch.states, tr_v);
      Eigen::MatrixXd cot_v(1, b);
      Eigen::VectorXd advantage(b);
      for (int i = 0; i < b; ++i) {
        const double u = rows_bar(batch.actions[i], i) - v_out(0, i);
        advantage[i] = u;
        const double w = u < 0.0 ? (1.0 - expectile) : expectile;
        cot_v(0, i) = -2.0 * w * u * inv_b;
      }
      Eigen::VectorXd grad_v = vjp_batch(vnet, tr_v, cot_v);
      if (!grad_v.allFinite()) throw TrainingError("non-finite value gradient");
      sgd_step(vnet, grad_v, cfg.eta_theta, st_v);

      // Critic: squared error toward r + gamma V(s').
      const Eigen::MatrixXd v_next = forward_batch(vnet, batch.next_states);
      const Eigen::VectorXd y = batch.rewards + cfg.gamma * v_next.row(0).transpose();
      ForwardTrace tr_q;
      const Eigen::MatrixXd q_rows = forward_batch_traced(cs.theta, batch.states, tr_q);
      if (!q_rows.allFinite()) throw TrainingError("non-finite critic output");
      Eigen::MatrixXd cot_q = Eigen::MatrixXd::Zero(kNumBids, b);
      double residual = 0.0;
      for (int i = 0; i < b; ++i) {
        const int a = batch.actions[i];
        cot_q(a, i) = (q_rows(a, i) - y[i]) * inv_b;
        residual += std::abs(q_rows(a, i) - y[i]);
      }
      residual *= inv_b;
      Eigen::VectorXd grad_q = vjp_batch(cs.theta, tr_q, cot_q);
      if (!grad_q.allFinite()) throw TrainingError("non-finite critic gradient");
      sgd_step(cs.theta, grad_q, cfg.eta_theta, st_q);

      // Advantage-weighted regression for the actor; advantages are
      // standardized per batch so the temperature is scale-free.
      const double mean_adv = advantage.mean();
      const double std_adv =
          std::sqrt((advantage.array() - mean_adv).square().sum() * inv_b) + 1e-8;
      ForwardTrace tr_pi;
      const Eigen::MatrixXd logits = forward_batch_traced(out.policy.phi, batch.states, tr_pi);
      Eigen::MatrixXd cot_pi(kNumBids, b);
      for (int i = 0; i < b; ++i) {
        const double w =
            std::min(std::exp(cfg.awr_beta * (advantage[i] - mean_adv) / std_adv), 100.0);
        const Eigen::VectorXd pi = log_softmax(logits.col(i)).array().exp();
        cot_pi.col(i) = (w * inv_b) * pi;
        cot_pi(batch.actions[i], i) -= w * inv_b;
      }
      Eigen::VectorXd grad_pi = vjp_batch(out.policy.phi, tr_pi, cot_pi);
      if (!grad_pi.allFinite()) throw TrainingError("non-finite actor gradient");
      sgd_step(out.policy.phi, grad_pi, cfg.eta_phi, st_phi);

      polyak_average(cs.theta_bar, cs.theta, cfg.tau);

      TraceRow row;
      row.step = t;
      row.bellman_residual = residual;
      row.c_value = mean_row_penalty(q_rows);
      row.lambda = 0.0;
      if (cfg.eval_every > 0 && (t % cfg.eval_every == 0 || t == cfg.steps)) {
        row.has_eval = true;
        row.eval_return = exact_policy_return(out.policy, ec.fresh_X, ec.fresh_rows);
        row.mono_errors = count_mono_errors_rows(forward_batch(cs.theta, ec.grid_X), cfg.mono_tol);
      }
      out.trace.push_back(row);
    }
  } catch (const std::exception& e) {
    out.aborted = true;
    out.abort_reason = e.what();
  }
  return out;
}

TrainResult train_bc(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();

  const int h = cfg.hidden_width;
  TrainResult out;
  out.has_critic = false;
  out.pipeline.critic_mode = ProxMode::Off;
  out.pipeline.dual_enabled = false;
  out.pipeline.lambda_init = 0.0;
  out.pipeline.spectral_norm = false;
  out.policy.phi = make_mlp({2, h, h, kNumBids}, Activation::Tanh, sub_seed(cfg.seed, "actor"));
  out.policy.temperature = cfg.alpha_entropy;

  SgdState st_phi{Eigen::VectorXd(), cfg.momentum};
  Rng batch_rng(cfg.seed, stream_id("batch"));
  const EvalContext ec = make_eval_context(cfg);
  out.trace.reserve(static_cast<size_t>(cfg.steps));

  try {
    for (long t = 1; t <= cfg.steps; ++t) {
      const Batch batch = sample_batch(data, cfg.batch_size, batch_rng);
      const int b = batch.size();
      const double inv_b = 1.0 / static_cast<double>(b);

      ForwardTrace tr;
      const Eigen::MatrixXd logits = forward_batch_traced(out.policy.phi, batch.states, tr);
      Eigen::MatrixXd cots(kNumBids, b);
      double ce = 0.0;
      for (int i = 0; i < b; ++i) {
        const Eigen::VectorXd lsm = log_softmax(logits.col(i));
        ce -= lsm[batch.actions[i]] * inv_b;
        cots.col(i) = inv_b * lsm.array().exp();
        cots(batch.actions[i], i) -= inv_b;
      }
      Eigen::VectorXd grad = vjp_batch(out.policy.phi, tr, cots);
      if (!grad.allFinite()) throw TrainingError("non-finite actor gradient");
      sgd_step(out.policy.phi, grad, cfg.eta_phi, st_phi);

      TraceRow row;
      row.step = t;
      row.bellman_residual = ce;  // cross-entropy; there is no critic
      row.c_value = 0.0;
      row.lambda = 0.0;
      if (cfg.eval_every > 0 && (t % cfg.eval_every == 0 || t == cfg.steps)) {
        row.has_eval = true;
        row.eval_return = exact_policy_return(out.policy, ec.fresh_X, ec.fresh_rows);
        row.mono_errors =
            count_mono_errors_rows(forward_batch(out.policy.phi, ec.grid_X), cfg.mono_tol);
      }
      out.trace.push_back(row);
    }
  } catch (const std::exception& e) {
    out.aborted = true;
    out.abort_reason = e.what();
  }
  return out;
}

PolicyParams actor_update(PolicyParams policy, const CriticState& cs, const Batch& batch,
                          const TrainConfig& cfg) {
  const ResolvedPipeline pipe = apply_variant(cfg);
  const double lam = cs.dual.lambda;
  const ProxMode mode = (pipe.critic_mode != ProxMode::Off && lam > 0.0) ? pipe.critic_mode
                                                                         : ProxMode::Off;
  const Eigen::MatrixXd q_eff = constrained_q_batch(cs.theta, batch.states, mode, lam);
  if (!q_eff.allFinite()) throw TrainingError("actor_update: non-finite critic");
  Rng score_rng(cfg.seed, stream_id("actor-score"));
  const ActorGrad ag = actor_gradient(policy, batch.states, q_eff, cfg, pipe.actor_score_penalty,
                                      lam, cfg.use_score_function_actor ? &score_rng : nullptr);
  SgdState st{Eigen::VectorXd(), 0.0};
  sgd_step(policy.phi, ag.grad, cfg.eta_phi, st);
  return policy;
}

StateQFn deployed_q_fn(const TrainResult& result, const TrainConfig& cfg) {
  if (!result.has_critic) {
    const MlpParams phi = result.policy.phi;
    return [phi](const AuctionState& s) {
      Eigen::Vector2d x(s.x, s.c);
      return forward(phi, x);
    };
  }
  const MlpParams theta = result.critic.theta;
  const double lam = result.critic.dual.lambda;
  const ProxMode mode =
      (result.pipeline.critic_mode != ProxMode::Off && lam > 0.0) ? result.pipeline.critic_mode
                                                                  : ProxMode::Off;
  (void)cfg;
  return [theta, mode, lam](const AuctionState& s) {
    Eigen::Vector2d x(s.x, s.c);
    return constrained_q_row(theta, x, mode, lam);
  };
}

}  // namespace proxrl
