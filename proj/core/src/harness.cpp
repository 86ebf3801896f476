#include "proxrl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "proxrl/errors.hpp"

namespace proxrl {

namespace {

using nlohmann::json;

void require_keys(const json& j, const std::set<std::string>& allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError(std::string(where) + ": unknown key '" + it.key() + "'");
}

std::uint64_t fnv1a_string(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

TrainResult dispatch_training(const AgentSpec& spec, const Dataset& data, const TrainConfig& tc) {
  if (spec.agent == "constraint_aware") return train_constraint_aware(data, tc);
  if (spec.agent == "iql") return train_iql(data, tc, tc.expectile);
  if (spec.agent == "cql") return train_cql(data, tc, tc.cql_weight);
  if (spec.agent == "bc") return train_bc(data, tc);
  if (spec.agent == "fitted_q") return train_fitted_q(data, tc);
  throw ConfigError("unknown agent: " + spec.agent);
}

std::string fraction_tag(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", fraction);
  std::string s(buf);
  for (char& ch : s)
    if (ch == '.') ch = 'p';
  return s;
}

MetricsRecord run_cell(const Dataset& full, const AgentSpec& spec, int seed, double fraction,
                       const ExperimentConfig& cfg) {
  MetricsRecord rec;
  rec.agent = spec.agent;
  rec.variant = spec.agent == "constraint_aware" ? to_string(spec.variant) : "-";
  rec.seed = seed;
  rec.fraction = fraction;

  TrainConfig tc = cfg.train;
  tc.variant = spec.variant;
  tc.seed = static_cast<std::uint64_t>(seed);
  tc.eval_grid_nx = cfg.eval.grid_nx;
  tc.eval_grid_nc = cfg.eval.grid_nc;
  rec.config_hash = config_hash_hex(spec, seed, fraction, tc);

  const auto t0 = std::chrono::steady_clock::now();
  try {
    Dataset subset;
    const Dataset* data = &full;
    if (fraction < 1.0) {
      subset = subsample_prefix(full, fraction);
      data = &subset;
    }
    TrainResult result = dispatch_training(spec, *data, tc);
    if (result.aborted) throw TrainingError(result.abort_reason);

    const PolicyEvaluation ev = evaluate_policy(result.policy, cfg.eval.n_fresh, cfg.eval.seed);
    rec.return_norm = ev.ret;
    rec.regret_norm = ev.regret;
    rec.oracle_value = ev.oracle;

    const StateQFn q_fn = deployed_q_fn(result, tc);
    const auto grid = evaluation_grid(cfg.eval.grid_nx, cfg.eval.grid_nc);
    rec.monotonicity_errors = count_monotonicity_errors(q_fn, grid, tc.mono_tol);
    rec.residual_at_convergence =
        result.has_critic
            ? bellman_residual_eval(q_fn, cfg.eval.n_fresh, cfg.eval.seed + 1, tc.gamma)
            : std::numeric_limits<double>::quiet_NaN();

    if (!cfg.output_dir.empty()) {
      namespace fs = std::filesystem;
      const fs::path dir = fs::path(cfg.output_dir) / "traces";
      fs::create_directories(dir);
      const std::string name = spec.label() + "_s" + std::to_string(seed) + "_f" +
                               fraction_tag(fraction) + ".csv";
      write_trace_csv(result.trace, (dir / name).string());
    }
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.error = e.what();
    rec.return_norm = rec.regret_norm = rec.oracle_value = std::numeric_limits<double>::quiet_NaN();
    rec.residual_at_convergence = std::numeric_limits<double>::quiet_NaN();
    rec.monotonicity_errors = -1;
  }
  rec.wallclock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::vector<MetricsRecord> run_cells(const ExperimentConfig& cfg,
                                     const std::vector<double>& fractions) {
  cfg.validate();
  Dataset full = cfg.dataset.path.empty() ? generate_dataset(cfg.dataset.n, cfg.dataset.seed)
                                          : load_dataset_jsonl(cfg.dataset.path);

  struct Cell {
    AgentSpec spec;
    int seed;
    double fraction;
  };
  std::vector<Cell> cells;
  for (double f : fractions)
    for (const AgentSpec& spec : cfg.agents)
      for (int seed : cfg.seeds) cells.push_back({spec, seed, f});

  std::vector<MetricsRecord> records(cells.size());
  unsigned workers = cfg.workers > 0 ? static_cast<unsigned>(cfg.workers)
                                     : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(cells.size()));

  if (workers <= 1) {
    for (size_t i = 0; i < cells.size(); ++i)
      records[i] = run_cell(full, cells[i].spec, cells[i].seed, cells[i].fraction, cfg);
  } else {
    std::atomic<size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= cells.size()) return;
        records[i] = run_cell(full, cells[i].spec, cells[i].seed, cells[i].fraction, cfg);
      }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return records;
}

double group_std(double sum, double sum_sq, int n) {
  if (n < 2) return 0.0;
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1));
  return std::sqrt(var);
}

}  // namespace

std::string AgentSpec::label() const {
  return agent == "constraint_aware" ? agent + "_" + to_string(variant) : agent;
}

void ExperimentConfig::validate() const {
  if (agents.empty()) throw ConfigError("ExperimentConfig: need at least one agent");
  if (seeds.empty()) throw ConfigError("ExperimentConfig: need at least one seed");
  if (subsample_fractions.empty())
    throw ConfigError("ExperimentConfig: need at least one fraction");
  for (size_t i = 0; i < subsample_fractions.size(); ++i) {
    const double f = subsample_fractions[i];
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("ExperimentConfig: fractions must be in (0,1]");
    if (i > 0 && f > subsample_fractions[i - 1])
      throw ConfigError("ExperimentConfig: fractions must be sorted descending");
  }
  if (eval.grid_nx < 2 || eval.grid_nc < 2 || eval.n_fresh < 1)
    throw ConfigError("ExperimentConfig: bad eval spec");
  if (dataset.path.empty() && dataset.n < 1)
    throw ConfigError("ExperimentConfig: dataset size must be >= 1");
  train.validate();
  for (const AgentSpec& a : agents)
    if (a.agent != "constraint_aware" && a.agent != "iql" && a.agent != "cql" && a.agent != "bc" &&
        a.agent != "fitted_q")
      throw ConfigError("ExperimentConfig: unknown agent " + a.agent);
}

namespace {

TrainConfig parse_train_config(const json& j, TrainConfig base) {
  require_keys(j,
               {"gamma", "lambda0", "eta_theta", "eta_phi", "eta_lambda", "tau", "alpha_entropy",
                "inner_iters", "warm_start", "spectral_norm", "variant", "steps", "batch_size",
                "seed", "momentum", "expectile", "cql_weight", "awr_beta",
                "use_score_function_actor", "eval_every", "hidden_width", "eval_fresh_states",
                "mono_tol"},
               "train");
  if (j.contains("gamma")) base.gamma = j["gamma"].get<double>();
  if (j.contains("lambda0")) base.lambda0 = j["lambda0"].get<double>();
  if (j.contains("eta_theta")) base.eta_theta = j["eta_theta"].get<double>();
  if (j.contains("eta_phi")) base.eta_phi = j["eta_phi"].get<double>();
  if (j.contains("eta_lambda")) base.eta_lambda = j["eta_lambda"].get<double>();
  if (j.contains("tau")) base.tau = j["tau"].get<double>();
  if (j.contains("alpha_entropy")) base.alpha_entropy = j["alpha_entropy"].get<double>();
  if (j.contains("inner_iters")) base.inner_iters = j["inner_iters"].get<int>();
  if (j.contains("warm_start")) base.warm_start = j["warm_start"].get<bool>();
  if (j.contains("spectral_norm")) base.spectral_norm = j["spectral_norm"].get<bool>();
  if (j.contains("variant")) base.variant = variant_from_string(j["variant"].get<std::string>());
  if (j.contains("steps")) base.steps = j["steps"].get<long>();
  if (j.contains("batch_size")) base.batch_size = j["batch_size"].get<int>();
  if (j.contains("seed")) base.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("momentum")) base.momentum = j["momentum"].get<double>();
  if (j.contains("expectile")) base.expectile = j["expectile"].get<double>();
  if (j.contains("cql_weight")) base.cql_weight = j["cql_weight"].get<double>();
  if (j.contains("awr_beta")) base.awr_beta = j["awr_beta"].get<double>();
  if (j.contains("use_score_function_actor"))
    base.use_score_function_actor = j["use_score_function_actor"].get<bool>();
  if (j.contains("eval_every")) base.eval_every = j["eval_every"].get<long>();
  if (j.contains("hidden_width")) base.hidden_width = j["hidden_width"].get<int>();
  if (j.contains("eval_fresh_states")) base.eval_fresh_states = j["eval_fresh_states"].get<int>();
  if (j.contains("mono_tol")) base.mono_tol = j["mono_tol"].get<double>();
  return base;
}

}  // namespace

ExperimentConfig parse_experiment_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  require_keys(j,
               {"dataset", "agents", "seeds", "subsample_fractions", "eval_states", "output_dir",
                "train", "workers"},
               "config");

  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    require_keys(d, {"path", "n", "seed"}, "dataset");
    if (d.contains("path")) cfg.dataset.path = d["path"].get<std::string>();
    if (d.contains("n")) cfg.dataset.n = d["n"].get<std::int64_t>();
    if (d.contains("seed")) cfg.dataset.seed = d["seed"].get<std::uint64_t>();
  }
  if (!j.contains("agents")) throw ConfigError("config: 'agents' is required");
  cfg.agents.clear();
  for (const json& a : j["agents"]) {
    require_keys(a, {"agent", "variant"}, "agents[]");
    AgentSpec spec;
    if (a.contains("agent")) spec.agent = a["agent"].get<std::string>();
    if (a.contains("variant")) spec.variant = variant_from_string(a["variant"].get<std::string>());
    cfg.agents.push_back(spec);
  }
  if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<int>>();
  if (j.contains("subsample_fractions"))
    cfg.subsample_fractions = j["subsample_fractions"].get<std::vector<double>>();
  if (j.contains("eval_states")) {
    const json& e = j["eval_states"];
    require_keys(e, {"grid_nx", "grid_nc", "n_fresh", "seed"}, "eval_states");
    if (e.contains("grid_nx")) cfg.eval.grid_nx = e["grid_nx"].get<int>();
    if (e.contains("grid_nc")) cfg.eval.grid_nc = e["grid_nc"].get<int>();
    if (e.contains("n_fresh")) cfg.eval.n_fresh = e["n_fresh"].get<int>();
    if (e.contains("seed")) cfg.eval.seed = e["seed"].get<std::uint64_t>();
  }
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("train")) cfg.train = parse_train_config(j["train"], cfg.train);
  if (j.contains("workers")) cfg.workers = j["workers"].get<int>();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config_json(ss.str());
}

PolicyEvaluation evaluate_policy_fn(const StatePolicyFn& probs_fn, int n_states,
                                    std::uint64_t seed) {
  if (n_states < 1) throw DomainError("evaluate_policy: n_states must be >= 1");
  const auto states = sample_states(n_states, seed);

  double ret = 0.0, oracle = 0.0;
  for (const AuctionState& s : states) {
    const Eigen::VectorXd row = expected_reward_row(s);
    ret += probs_fn(s).dot(row);
    oracle += row.maxCoeff();
  }
  ret /= static_cast<double>(n_states);
  oracle /= static_cast<double>(n_states);
  return {ret, oracle - ret, oracle};
}

PolicyEvaluation evaluate_policy(const PolicyParams& policy, int n_states, std::uint64_t seed) {
  return evaluate_policy_fn(
      [&policy](const AuctionState& s) { return policy_probs(policy, s); }, n_states, seed);
}

double bellman_residual_eval(const StateQFn& q_fn, int n, std::uint64_t seed, double gamma) {
  if (n < 1) throw DomainError("bellman_residual_eval: n must be >= 1");
  Rng rng(seed, stream_id("residual-eval"));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const AuctionState s = sample_state(rng);
    const int a = behavior_action(rng);
    const AuctionState s_next = sample_state(rng);
    const double expected_r = click_prob(s, kBidFractions[a]) - s.c * kBidFractions[a];
    const double target = expected_r + gamma * q_fn(s_next).maxCoeff();
    total += std::abs(q_fn(s)[a] - target);
  }
  return total / n;
}

Dataset subsample_prefix(const Dataset& full, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw DomainError("subsample_prefix: fraction must be in (0,1]");
  const auto k = static_cast<std::int64_t>(std::llround(fraction * full.size()));
  if (k < 1) throw DomainError("subsample_prefix: empty subsample");
  Dataset out;
  out.seed = full.seed;
  out.generator_version = full.generator_version;
  out.transitions.assign(full.transitions.begin(), full.transitions.begin() + k);
  return out;
}

std::vector<MetricsRecord> run_experiment(const ExperimentConfig& cfg) {
  return run_cells(cfg, {1.0});
}

std::vector<MetricsRecord> subsample_sweep(const ExperimentConfig& cfg) {
  return run_cells(cfg, cfg.subsample_fractions);
}

std::string config_hash_hex(const AgentSpec& spec, int seed, double fraction,
                            const TrainConfig& train) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%s|%s|%d|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%d|%d|%d|%s|%ld|%d|"
                "%.17g|%.17g|%.17g|%.17g|%d|%d",
                spec.agent.c_str(), to_string(spec.variant).c_str(), seed, fraction, train.gamma,
                train.lambda0, train.eta_theta, train.eta_phi, train.eta_lambda, train.tau,
                train.alpha_entropy, train.inner_iters, train.warm_start ? 1 : 0,
                train.spectral_norm ? 1 : 0, to_string(train.variant).c_str(), train.steps,
                train.batch_size, train.momentum, train.expectile, train.cql_weight,
                train.awr_beta, train.hidden_width, train.use_score_function_actor ? 1 : 0);
  return hex64(fnv1a_string(buf));
}

std::vector<AggregateRow> aggregate_records(const std::vector<MetricsRecord>& records) {
  if (records.empty()) throw ConfigError("aggregate_records: no records");

  struct Acc {
    int n = 0;
    double ret = 0, ret2 = 0, reg = 0, reg2 = 0, mono = 0, mono2 = 0, res = 0, res2 = 0;
    bool has_residual = false;
  };
  std::vector<std::string> order;
  std::vector<AggregateRow> rows;
  std::vector<Acc> accs;

  auto key_of = [](const MetricsRecord& r) {
    return r.agent + "|" + r.variant + "|" + std::to_string(r.fraction);
  };
  for (const MetricsRecord& r : records) {
    if (r.failed) continue;
    const std::string key = key_of(r);
    size_t slot = order.size();
    for (size_t i = 0; i < order.size(); ++i)
      if (order[i] == key) {
        slot = i;
        break;
      }
    if (slot == order.size()) {
      order.push_back(key);
      AggregateRow row;
      row.agent = r.agent;
      row.variant = r.variant;
      row.fraction = r.fraction;
      rows.push_back(row);
      accs.push_back(Acc{});
    }
    Acc& a = accs[slot];
    a.n += 1;
    a.ret += r.return_norm;
    a.ret2 += r.return_norm * r.return_norm;
    a.reg += r.regret_norm;
    a.reg2 += r.regret_norm * r.regret_norm;
    a.mono += static_cast<double>(r.monotonicity_errors);
    a.mono2 += static_cast<double>(r.monotonicity_errors) * r.monotonicity_errors;
    if (std::isfinite(r.residual_at_convergence)) {
      a.res += r.residual_at_convergence;
      a.res2 += r.residual_at_convergence * r.residual_at_convergence;
      a.has_residual = true;
    }
  }
  if (rows.empty()) throw ConfigError("aggregate_records: every record failed");

  for (size_t i = 0; i < rows.size(); ++i) {
    const Acc& a = accs[i];
    AggregateRow& row = rows[i];
    row.count = a.n;
    row.return_mean = a.ret / a.n;
    row.return_std = group_std(a.ret, a.ret2, a.n);
    row.regret_mean = a.reg / a.n;
    row.regret_std = group_std(a.reg, a.reg2, a.n);
    row.mono_mean = a.mono / a.n;
    row.mono_std = group_std(a.mono, a.mono2, a.n);
    if (a.has_residual) {
      row.residual_mean = a.res / a.n;
      row.residual_std = group_std(a.res, a.res2, a.n);
    } else {
      row.residual_mean = std::numeric_limits<double>::quiet_NaN();
      row.residual_std = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return rows;
}

namespace {

std::vector<MetricsRecord> sorted_records(std::vector<MetricsRecord> records) {
  std::sort(records.begin(), records.end(), [](const MetricsRecord& a, const MetricsRecord& b) {
    if (a.agent != b.agent) return a.agent < b.agent;
    if (a.variant != b.variant) return a.variant < b.variant;
    if (a.fraction != b.fraction) return a.fraction > b.fraction;
    return a.seed < b.seed;
  });
  return records;
}

std::string cell_pm(double mean, double std, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f ± %.*f", precision, mean, precision, std);
  return buf;
}

}  // namespace

std::string render_records_csv(const std::vector<MetricsRecord>& records) {
  if (records.empty()) throw ConfigError("render_records_csv: no records");
  std::string out =
      "agent,variant,seed,fraction,return,regret,oracle_value,monotonicity_errors,"
      "residual_at_convergence,config_hash,failed,error,wallclock_seconds\n";
  char buf[512];
  for (const MetricsRecord& r : sorted_records(records)) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.17g,%.17g,%.17g,%.17g,%ld,%.17g,%s,%d,%s,%.3f\n",
                  r.agent.c_str(), r.variant.c_str(), r.seed, r.fraction, r.return_norm,
                  r.regret_norm, r.oracle_value, r.monotonicity_errors,
                  r.residual_at_convergence, r.config_hash.c_str(), r.failed ? 1 : 0,
                  r.error.c_str(), r.wallclock_seconds);
    out += buf;
  }
  return out;
}

std::vector<MetricsRecord> load_records_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_records_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("load_records_csv: empty file");

  std::vector<MetricsRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    fields.push_back(cur);
    if (fields.size() != 13) throw ConfigError("load_records_csv: malformed row");
    MetricsRecord r;
    r.agent = fields[0];
    r.variant = fields[1];
    r.seed = std::stoi(fields[2]);
    r.fraction = std::stod(fields[3]);
    r.return_norm = std::stod(fields[4]);
    r.regret_norm = std::stod(fields[5]);
    r.oracle_value = std::stod(fields[6]);
    r.monotonicity_errors = std::stol(fields[7]);
    r.residual_at_convergence = std::stod(fields[8]);
    r.config_hash = fields[9];
    r.failed = fields[10] == "1";
    r.error = fields[11];
    r.wallclock_seconds = std::stod(fields[12]);
    records.push_back(r);
  }
  if (records.empty()) throw ConfigError("load_records_csv: no records in " + path);
  return records;
}

std::string render_aggregates_csv(const std::vector<MetricsRecord>& records) {
  const auto rows = aggregate_records(records);
  std::string out =
      "agent,variant,fraction,count,return_mean,return_std,regret_mean,regret_std,"
      "mono_mean,mono_std,residual_mean,residual_std\n";
  char buf[512];
  for (const AggregateRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.agent.c_str(), r.variant.c_str(), r.fraction, r.count, r.return_mean,
                  r.return_std, r.regret_mean, r.regret_std, r.mono_mean, r.mono_std,
                  r.residual_mean, r.residual_std);
    out += buf;
  }
  return out;
}

std::string render_report_markdown(const std::vector<MetricsRecord>& records) {
  const auto rows = aggregate_records(records);

  std::string out;
  out += "# Benchmark report\n\n";

  // Algorithm comparison at the full dataset.
  out += "## Algorithm performance (fraction 1.0)\n\n";
  out += "| Algorithm | Return ↑ | Regret ↓ | Monotonicity errors ↓ |\n";
  out += "|---|---|---|---|\n";
  bool any = false;
  for (const AggregateRow& r : rows) {
    if (r.fraction != 1.0) continue;
    if (r.agent == "constraint_aware" && r.variant != "full") continue;
    out += "| " + r.agent + " | " + cell_pm(r.return_mean, r.return_std, 3) + " | " +
           cell_pm(r.regret_mean, r.regret_std, 3) + " | " +
           cell_pm(r.mono_mean, r.mono_std, 1) + " |\n";
    any = true;
  }
  if (!any) throw ConfigError("render_report_markdown: no rows at fraction 1.0");

  // Variant ablation for the constraint-aware agent.
  bool have_variants = false;
  for (const AggregateRow& r : rows)
    if (r.agent == "constraint_aware" && r.fraction == 1.0) have_variants = true;
  if (have_variants) {
    out += "\n## Variant ablation (constraint_aware, fraction 1.0)\n\n";
    out += "| Variant | Return ↑ | Regret ↓ | Monotonicity errors ↓ | Residual at conv. ↓ |\n";
    out += "|---|---|---|---|---|\n";
    char buf[64];
    for (const AggregateRow& r : rows) {
      if (r.agent != "constraint_aware" || r.fraction != 1.0) continue;
      std::snprintf(buf, sizeof(buf), "%.3f", r.residual_mean);
      out += "| " + r.variant + " | " + cell_pm(r.return_mean, r.return_std, 3) + " | " +
             cell_pm(r.regret_mean, r.regret_std, 3) + " | " + cell_pm(r.mono_mean, r.mono_std, 1) +
             " | " + buf + " |\n";
    }
  }

  // Sub-sampling sweep when more than one fraction is present.
  bool have_fracs = false;
  for (const AggregateRow& r : rows)
    if (r.fraction != 1.0) have_fracs = true;
  if (have_fracs) {
    out += "\n## Sub-sampling sweep\n\n";
    out += "| Agent | Fraction | Return ↑ | Regret ↓ | Monotonicity errors ↓ |\n";
    out += "|---|---|---|---|---|\n";
    char buf[32];
    for (const AggregateRow& r : rows) {
      std::snprintf(buf, sizeof(buf), "%g", r.fraction);
      const std::string name =
          r.agent == "constraint_aware" ? r.agent + "/" + r.variant : r.agent;
      out += "| " + name + " | " + buf + " | " + cell_pm(r.return_mean, r.return_std, 3) + " | " +
             cell_pm(r.regret_mean, r.regret_std, 3) + " | " + cell_pm(r.mono_mean, r.mono_std, 1) +
             " |\n";
    }
  }
  return out;
}

void emit_report(const std::vector<MetricsRecord>& records, ReportFormat format,
                 const std::string& out_dir) {
  if (records.empty()) throw ConfigError("emit_report: no records");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  auto write_file = [&](const std::string& name, const std::string& content) {
    const fs::path p = fs::path(out_dir) / name;
    std::ofstream out(p);
    if (!out) throw std::runtime_error("emit_report: cannot open " + p.string());
    out << content;
    if (!out) throw std::runtime_error("emit_report: write failed for " + p.string());
  };

  write_file("records.csv", render_records_csv(records));
  write_file("aggregates.csv", render_aggregates_csv(records));
  if (format == ReportFormat::Markdown) write_file("report.md", render_report_markdown(records));
}

}  // namespace proxrl
