#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "proxrl/bidclick.hpp"
#include "proxrl/implicit.hpp"
#include "proxrl/mlp.hpp"

namespace proxrl {

enum class Variant {
  Full,
  FixedLambdaWeak,
  FixedLambdaStrong,
  SoftPenalty,
  NoWarmStart,
  Inner1,
  Inner5,
  NoSpectralNorm,
  ActorOnlyConstraint,
};

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

struct TrainConfig {
  double gamma = 0.9;
  double lambda0 = 0.1;
  double eta_theta = 1e-3;
  double eta_phi = 1e-3;
  double eta_lambda = 0.05;
  double tau = 0.005;
  double alpha_entropy = 0.01;
  int inner_iters = 1;
  bool warm_start = true;
  bool spectral_norm = true;
  Variant variant = Variant::Full;
  long steps = 50000;
  int batch_size = 256;
  std::uint64_t seed = 0;

  // auxiliary knobs (overridable, not variant-controlled)
  double momentum = 0.9;
  double expectile = 0.7;
  double cql_weight = 1.0;
  double awr_beta = 3.0;
  bool use_score_function_actor = false;
  long eval_every = 1000;
  int hidden_width = 64;
  int eval_grid_nx = 50;
  int eval_grid_nc = 20;
  int eval_fresh_states = 10000;
  double mono_tol = 1e-6;

  void validate() const;
};

/// Softmax policy over the 5 bids; `temperature` is the entropy weight the
/// actor was trained with.
struct PolicyParams {
  MlpParams phi;
  double temperature = 0.01;
};

Eigen::VectorXd policy_probs(const PolicyParams& policy, const AuctionState& s);
Eigen::MatrixXd policy_probs_batch(const PolicyParams& policy,
                                   const Eigen::Ref<const Eigen::MatrixXd>& X);

struct TraceRow {
  long step = 0;
  double bellman_residual = 0.0;
  double c_value = 0.0;
  double lambda = 0.0;
  double eval_return = 0.0;
  long mono_errors = 0;
  bool has_eval = false;
};

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

/// Concrete pipeline derived from a variant; see apply_variant.
struct ResolvedPipeline {
  ProxMode critic_mode = ProxMode::Projection;
  bool soft_penalty_loss = false;   // penalty added to the critic loss instead
  bool actor_score_penalty = false; // penalty on the actor's weighted scores
  bool dual_enabled = true;
  double lambda_init = 0.1;
  bool warm_start = true;
  int inner_iters = 1;
  bool spectral_norm = true;
};

ResolvedPipeline apply_variant(const TrainConfig& cfg);

struct TrainResult {
  CriticState critic;
  PolicyParams policy;
  std::vector<TraceRow> trace;
  ResolvedPipeline pipeline;
  bool has_critic = true;
  bool aborted = false;
  std::string abort_reason;
};

/// Full constraint-aware loop: targets from the constrained target critic,
/// warm-started inner prox steps, implicit critic gradient, dual update,
/// actor ascent, Polyak averaging.
TrainResult train_constraint_aware(const Dataset& data, const TrainConfig& cfg);

/// Plain fitted Q (no constraint machinery); the reference pipeline.
TrainResult train_fitted_q(const Dataset& data, const TrainConfig& cfg);

/// Asymmetric squared loss |tau - 1(u < 0)| * u^2.
double expectile_loss(double u, double tau);

/// Expectile-regression baseline: V by asymmetric squared loss, Q by squared
/// error to r + gamma*V(s'), policy by advantage-weighted regression.
TrainResult train_iql(const Dataset& data, const TrainConfig& cfg, double expectile);

/// logsumexp over the row minus the logged entry; zero for one-entry rows.
double conservative_penalty(const Eigen::Ref<const Eigen::VectorXd>& q, int logged);

/// Conservative baseline: fitted Q plus weight * (logsumexp_a Q - Q(a_logged)).
TrainResult train_cql(const Dataset& data, const TrainConfig& cfg, double cql_weight);

/// Behavior cloning: cross-entropy fit of the policy to logged actions.
TrainResult train_bc(const Dataset& data, const TrainConfig& cfg);

/// One ascent step on the soft policy objective
/// J = E_s sum_a pi(a|s) (Q(s,a) - alpha log pi(a|s)), with Q the constrained
/// critic rows of cs.theta under the config's variant.
PolicyParams actor_update(PolicyParams policy, const CriticState& cs, const Batch& batch,
                          const TrainConfig& cfg);

/// Q-row function the agent deploys (and is measured on): constrained rows
/// for the projection variants, raw critic rows for baselines, policy logits
/// for behavior cloning.
StateQFn deployed_q_fn(const TrainResult& result, const TrainConfig& cfg);

Batch sample_batch(const Dataset& data, int batch_size, Rng& rng);
Batch make_batch(const Dataset& data, const std::vector<std::int64_t>& idx);

}  // namespace proxrl
