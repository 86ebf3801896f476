#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "proxrl/errors.hpp"
#include "proxrl/harness.hpp"

using namespace proxrl;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::vector<MetricsRecord> fixture_records() {
  std::vector<MetricsRecord> records;
  const char* agents[4] = {"constraint_aware", "iql", "cql", "bc"};
  const double returns[4] = {0.55, 0.53, 0.52, 0.50};
  const long monos[4] = {0, 210, 300, 290};
  for (int a = 0; a < 4; ++a)
    for (int seed = 0; seed < 2; ++seed) {
      MetricsRecord r;
      r.agent = agents[a];
      r.variant = a == 0 ? "full" : "-";
      r.seed = seed;
      r.fraction = 1.0;
      r.return_norm = returns[a] + 0.001 * seed;
      r.oracle_value = 0.56;
      r.regret_norm = r.oracle_value - r.return_norm;
      r.monotonicity_errors = monos[a] + seed;
      r.residual_at_convergence = a == 3 ? std::nan("") : 0.03 + 0.01 * a;
      r.wallclock_seconds = 1.25;
      r.config_hash = "00000000deadbeef";
      records.push_back(r);
    }
  return records;
}

}  // namespace

TEST_CASE("policy evaluation identity and the uniform closed form") {
  const int n = 2000;
  const StatePolicyFn uniform = [](const AuctionState&) {
    return Eigen::VectorXd::Constant(5, 0.2).eval();
  };
  const PolicyEvaluation ev = evaluate_policy_fn(uniform, n, 4242);
  CHECK(std::abs(ev.ret + ev.regret - ev.oracle) <= 1e-12);

  // closed form of the uniform policy value over the same states
  const auto states = sample_states(n, 4242);
  double expect = 0.0;
  for (const AuctionState& s : states) expect += expected_reward_row(s).mean();
  expect /= n;
  CHECK(ev.ret == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("the oracle-greedy policy has zero regret") {
  const StatePolicyFn greedy = [](const AuctionState& s) {
    Eigen::Index best;
    expected_reward_row(s).maxCoeff(&best);
    Eigen::VectorXd probs = Eigen::VectorXd::Zero(5);
    probs[best] = 1.0;
    return probs;
  };
  const PolicyEvaluation ev = evaluate_policy_fn(greedy, 3000, 1717);
  CHECK(std::abs(ev.regret) <= 1e-12);
  CHECK(ev.ret == doctest::Approx(ev.oracle).epsilon(1e-15));
}

TEST_CASE("prefix subsampling is exact and nested") {
  const Dataset full = generate_dataset(1000, 5);
  const Dataset quarter = subsample_prefix(full, 0.25);
  const Dataset sixteenth = subsample_prefix(full, 0.0625);
  CHECK(quarter.size() == 250);
  CHECK(sixteenth.size() == 62);  // round(0.0625 * 1000)
  for (std::int64_t i = 0; i < sixteenth.size(); ++i) {
    CHECK(sixteenth.transitions[i].s.x == quarter.transitions[i].s.x);
    CHECK(quarter.transitions[i].s.x == full.transitions[i].s.x);
  }
  CHECK_THROWS_AS(subsample_prefix(full, 0.0), DomainError);
  CHECK_THROWS_AS(subsample_prefix(full, 1.5), DomainError);
}

TEST_CASE("config parsing accepts the documented schema") {
  const std::string text = R"json({
    "dataset": {"n": 500, "seed": 3},
    "agents": [{"agent": "bc"}, {"agent": "constraint_aware", "variant": "inner5"}],
    "seeds": [0, 1],
    "subsample_fractions": [1.0, 0.25],
    "eval_states": {"grid_nx": 10, "grid_nc": 5, "n_fresh": 100, "seed": 7},
    "output_dir": "",
    "workers": 1,
    "train": {"steps": 10, "batch_size": 16, "hidden_width": 8, "eval_every": 0}
  })json";
  const ExperimentConfig cfg = parse_experiment_config_json(text);
  CHECK(cfg.dataset.n == 500);
  CHECK(cfg.agents.size() == 2);
  CHECK(cfg.agents[1].variant == Variant::Inner5);
  CHECK(cfg.seeds == std::vector<int>{0, 1});
  CHECK(cfg.train.steps == 10);
  CHECK(cfg.eval.grid_nx == 10);
}

TEST_CASE("config parsing rejects unknown keys and bad shapes") {
  CHECK_THROWS_AS(parse_experiment_config_json(R"({"agents": [{"agent": "bc"}], "bogus": 1})"),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_config_json(R"({"agents": [{"agent": "bc", "oops": 2}]})"),
      ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_config_json(R"({"agents": [{"agent": "bc"}], "train": {"nope": 3}})"),
      ConfigError);
  CHECK_THROWS_AS(parse_experiment_config_json(R"({"agents": []})"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config_json("{}"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config_json("not json"), ConfigError);
  // ascending fractions are rejected
  CHECK_THROWS_AS(parse_experiment_config_json(
                      R"({"agents": [{"agent": "bc"}], "subsample_fractions": [0.25, 1.0]})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_config_json(
                      R"({"agents": [{"agent": "wat"}]})"),
                  ConfigError);
}

TEST_CASE("config hashes separate cells and stay stable") {
  AgentSpec a{"iql", Variant::Full};
  AgentSpec b{"cql", Variant::Full};
  TrainConfig tc;
  CHECK(config_hash_hex(a, 0, 1.0, tc) == config_hash_hex(a, 0, 1.0, tc));
  CHECK(config_hash_hex(a, 0, 1.0, tc) != config_hash_hex(b, 0, 1.0, tc));
  CHECK(config_hash_hex(a, 0, 1.0, tc) != config_hash_hex(a, 1, 1.0, tc));
  CHECK(config_hash_hex(a, 0, 1.0, tc) != config_hash_hex(a, 0, 0.25, tc));
}

TEST_CASE("a tiny experiment runs, aggregates and repeats byte-identically") {
  ExperimentConfig cfg;
  cfg.dataset.n = 400;
  cfg.dataset.seed = 9;
  cfg.agents = {{"bc", Variant::Full}, {"fitted_q", Variant::Full}};
  cfg.seeds = {0};
  cfg.subsample_fractions = {1.0};
  cfg.eval.grid_nx = 8;
  cfg.eval.grid_nc = 4;
  cfg.eval.n_fresh = 200;
  cfg.train = TrainConfig{};
  cfg.train.steps = 40;
  cfg.train.batch_size = 32;
  cfg.train.hidden_width = 8;
  cfg.train.eval_every = 0;
  cfg.train.eval_fresh_states = 100;
  cfg.workers = 1;

  const auto records = run_experiment(cfg);
  REQUIRE(records.size() == 2);
  for (const auto& r : records) {
    CHECK_FALSE(r.failed);
    CHECK(std::abs(r.return_norm + r.regret_norm - r.oracle_value) <= 1e-12);
    CHECK(r.monotonicity_errors >= 0);
    CHECK(r.wallclock_seconds >= 0.0);
  }

  const auto again = run_experiment(cfg);
  REQUIRE(again.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].agent == again[i].agent);
    CHECK(records[i].return_norm == again[i].return_norm);
    CHECK(records[i].regret_norm == again[i].regret_norm);
    CHECK(records[i].monotonicity_errors == again[i].monotonicity_errors);
    CHECK(records[i].config_hash == again[i].config_hash);
  }

  // zero-step runs produce untrained-policy metrics without failing
  ExperimentConfig zero = cfg;
  zero.agents = {{"bc", Variant::Full}};
  zero.train.steps = 0;
  const auto zrec = run_experiment(zero);
  REQUIRE(zrec.size() == 1);
  CHECK_FALSE(zrec[0].failed);
}

TEST_CASE("sweeps tag every fraction and keep failed cells nonfatal") {
  ExperimentConfig cfg;
  cfg.dataset.n = 400;
  cfg.dataset.seed = 10;
  cfg.agents = {{"bc", Variant::Full}};
  cfg.seeds = {0, 1};
  cfg.subsample_fractions = {1.0, 0.25};
  cfg.eval.grid_nx = 8;
  cfg.eval.grid_nc = 4;
  cfg.eval.n_fresh = 100;
  cfg.train.steps = 20;
  cfg.train.batch_size = 16;
  cfg.train.hidden_width = 8;
  cfg.train.eval_every = 0;
  cfg.train.eval_fresh_states = 100;
  cfg.workers = 1;

  const auto records = subsample_sweep(cfg);
  REQUIRE(records.size() == 4);
  int full = 0, quarter = 0;
  for (const auto& r : records) {
    if (r.fraction == 1.0) ++full;
    if (r.fraction == 0.25) ++quarter;
  }
  CHECK(full == 2);
  CHECK(quarter == 2);

  // a diverging cell is recorded as failed, the sweep still completes
  ExperimentConfig bad = cfg;
  bad.agents = {{"fitted_q", Variant::Full}, {"bc", Variant::Full}};
  bad.seeds = {0};
  bad.subsample_fractions = {1.0};
  bad.train.eta_theta = 1e12;
  const auto mixed = subsample_sweep(bad);
  REQUIRE(mixed.size() == 2);
  int failed = 0;
  for (const auto& r : mixed) failed += r.failed ? 1 : 0;
  CHECK(failed == 1);
}

TEST_CASE("aggregation groups by agent, variant and fraction") {
  const auto rows = aggregate_records(fixture_records());
  REQUIRE(rows.size() == 4);
  for (const auto& row : rows) {
    CHECK(row.count == 2);
    if (row.agent == "constraint_aware") {
      CHECK(row.mono_mean == doctest::Approx(0.5));
      CHECK(row.return_mean == doctest::Approx(0.5505));
    }
    if (row.agent == "bc") CHECK(std::isnan(row.residual_mean));
  }
  CHECK_THROWS_AS(aggregate_records({}), ConfigError);

  MetricsRecord dead;
  dead.agent = "bc";
  dead.failed = true;
  CHECK_THROWS_AS(aggregate_records({dead}), ConfigError);
}

TEST_CASE("reports render to the golden fixtures") {
  const auto records = fixture_records();
  const std::string md = render_report_markdown(records);
  const std::string csv = render_records_csv(records);

  const std::string golden_dir = PROXRL_TEST_DATA_DIR;
  CHECK(md == slurp(golden_dir + "/report.md"));
  CHECK(csv == slurp(golden_dir + "/records.csv"));
}

TEST_CASE("report emission writes the expected files and rejects empties") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "proxrl_report_test";
  fs::remove_all(dir);
  emit_report(fixture_records(), ReportFormat::Markdown, dir.string());
  CHECK(fs::exists(dir / "records.csv"));
  CHECK(fs::exists(dir / "aggregates.csv"));
  CHECK(fs::exists(dir / "report.md"));

  const auto loaded = load_records_csv((dir / "records.csv").string());
  CHECK(loaded.size() == fixture_records().size());

  CHECK_THROWS_AS(emit_report({}, ReportFormat::Csv, dir.string()), ConfigError);
  fs::remove_all(dir);
}
