#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "proxrl/agents.hpp"

namespace proxrl {

struct AgentSpec {
  std::string agent = "constraint_aware";  // constraint_aware|iql|cql|bc|fitted_q
  Variant variant = Variant::Full;         // read for constraint_aware only

  std::string label() const;
};

struct DatasetSpec {
  std::string path;             // load when set, otherwise generate
  std::int64_t n = 100000;
  std::uint64_t seed = 12345;
};

struct EvalSpec {
  int grid_nx = 50;
  int grid_nc = 20;
  int n_fresh = 10000;
  std::uint64_t seed = 9990;  // shared across cells so comparisons are paired
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<AgentSpec> agents;
  std::vector<int> seeds = {0, 1, 2, 3, 4};
  std::vector<double> subsample_fractions = {1.0, 0.25, 0.0625};
  EvalSpec eval;
  std::string output_dir;
  TrainConfig train;
  int workers = 0;  // 0 = hardware concurrency

  void validate() const;
};

ExperimentConfig parse_experiment_config_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

/// One experiment row.
struct MetricsRecord {
  std::string agent;
  std::string variant;
  int seed = 0;
  double fraction = 1.0;
  double return_norm = 0.0;
  double regret_norm = 0.0;
  double oracle_value = 0.0;
  long monotonicity_errors = 0;
  double residual_at_convergence = 0.0;
  double wallclock_seconds = 0.0;
  std::string config_hash;
  bool failed = false;
  std::string error;
};

struct PolicyEvaluation {
  double ret = 0.0;
  double regret = 0.0;
  double oracle = 0.0;
};

/// Exact expected per-step reward of the policy over n sampled states, and
/// the regret against the one-step oracle on the same states. By definition
/// ret + regret equals the mean oracle value.
PolicyEvaluation evaluate_policy(const PolicyParams& policy, int n_states, std::uint64_t seed);

/// Same evaluation for an arbitrary state -> action-distribution map.
using StatePolicyFn = std::function<Eigen::VectorXd(const AuctionState&)>;
PolicyEvaluation evaluate_policy_fn(const StatePolicyFn& probs_fn, int n_states,
                                    std::uint64_t seed);

/// Mean absolute Bellman inconsistency of the deployed critic over a fresh
/// evaluation batch, with the expected (noise-free) reward.
double bellman_residual_eval(const StateQFn& q_fn, int n, std::uint64_t seed, double gamma);

/// First round(n * fraction) transitions; smaller fractions are subsets of
/// larger ones by construction.
Dataset subsample_prefix(const Dataset& full, double fraction);

/// One record per (agent, seed) at the full dataset. Aborted trainings are
/// recorded as failed rows; the run continues.
std::vector<MetricsRecord> run_experiment(const ExperimentConfig& cfg);

/// One record per (agent, fraction, seed) over the configured fractions.
std::vector<MetricsRecord> subsample_sweep(const ExperimentConfig& cfg);

enum class ReportFormat { Markdown, Csv };

std::string render_records_csv(const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> load_records_csv(const std::string& path);
std::string render_report_markdown(const std::vector<MetricsRecord>& records);
std::string render_aggregates_csv(const std::vector<MetricsRecord>& records);

/// Writes records.csv plus report.md or aggregates.csv under out_dir.
void emit_report(const std::vector<MetricsRecord>& records, ReportFormat format,
                 const std::string& out_dir);

struct AggregateRow {
  std::string agent;
  std::string variant;
  double fraction = 1.0;
  int count = 0;
  double return_mean = 0.0, return_std = 0.0;
  double regret_mean = 0.0, regret_std = 0.0;
  double mono_mean = 0.0, mono_std = 0.0;
  double residual_mean = 0.0, residual_std = 0.0;
};

/// Mean and sample standard deviation per (agent, variant, fraction) group,
/// failed records excluded. Throws if nothing aggregates.
std::vector<AggregateRow> aggregate_records(const std::vector<MetricsRecord>& records);

std::string config_hash_hex(const AgentSpec& spec, int seed, double fraction,
                            const TrainConfig& train);

}  // namespace proxrl
