#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "proxrl/bidclick.hpp"
#include "proxrl/errors.hpp"
#include "proxrl/harness.hpp"
#include "proxrl/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitTrainingAbort = 2;

int cmd_gen_data(std::int64_t n, std::uint64_t seed, const std::string& out) {
  const proxrl::Dataset data = proxrl::generate_dataset(n, seed);
  proxrl::save_dataset_jsonl(data, out);
  std::printf("wrote %lld transitions (seed %llu) to %s\n",
              static_cast<long long>(data.size()), static_cast<unsigned long long>(seed),
              out.c_str());
  std::printf("file hash: %016llx\n",
              static_cast<unsigned long long>(proxrl::fnv1a_file_hash(out)));
  return kExitOk;
}

int run_and_emit(const proxrl::ExperimentConfig& cfg, bool sweep) {
  const auto records = sweep ? proxrl::subsample_sweep(cfg) : proxrl::run_experiment(cfg);
  if (!cfg.output_dir.empty())
    proxrl::emit_report(records, proxrl::ReportFormat::Markdown, cfg.output_dir);

  int failed = 0;
  for (const auto& r : records) {
    if (r.failed) {
      ++failed;
      std::fprintf(stderr, "aborted: %s seed %d fraction %g: %s\n", r.agent.c_str(), r.seed,
                   r.fraction, r.error.c_str());
    }
  }
  std::printf("%zu records (%d failed)%s%s\n", records.size(), failed,
              cfg.output_dir.empty() ? "" : ", report in ",
              cfg.output_dir.empty() ? "" : cfg.output_dir.c_str());
  return failed > 0 ? kExitTrainingAbort : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constraint-aware offline RL benchmark on the synthetic bid-click auction"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a logged-transition dataset (JSON lines)");
  std::int64_t gen_n = 100000;
  std::uint64_t gen_seed = 12345;
  std::string gen_out = "dataset.jsonl";
  gen->add_option("--n", gen_n, "Number of transitions");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output path")->required();

  // train
  auto* train = app.add_subcommand("train", "Train the configured agents on the full dataset");
  std::string train_config, train_out;
  train->add_option("--config", train_config, "Experiment config (JSON)")->required();
  train->add_option("--out", train_out, "Output directory (overrides config)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Train over the configured subsample fractions");
  std::string sweep_config, sweep_out;
  sweep->add_option("--config", sweep_config, "Experiment config (JSON)")->required();
  sweep->add_option("--out", sweep_out, "Output directory (overrides config)");

  // report
  auto* report = app.add_subcommand("report", "Re-render reports from a records.csv");
  std::string report_in, report_format = "markdown", report_out = ".";
  report->add_option("--in", report_in, "records.csv produced by train/sweep")->required();
  report->add_option("--format", report_format, "markdown|csv")
      ->check(CLI::IsMember({"markdown", "csv"}));
  report->add_option("--out", report_out, "Output directory");

  // verify
  auto* verify = app.add_subcommand("verify", "Run the property suites");
  std::string suite = "all";
  verify->add_option("--suite", suite, "props|oracle|grad|all")
      ->check(CLI::IsMember({"props", "oracle", "grad", "all"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_n, gen_seed, gen_out);

    if (train->parsed() || sweep->parsed()) {
      const bool is_sweep = sweep->parsed();
      proxrl::ExperimentConfig cfg =
          proxrl::load_experiment_config(is_sweep ? sweep_config : train_config);
      const std::string& out_override = is_sweep ? sweep_out : train_out;
      if (!out_override.empty()) cfg.output_dir = out_override;
      return run_and_emit(cfg, is_sweep);
    }

    if (report->parsed()) {
      const auto records = proxrl::load_records_csv(report_in);
      proxrl::emit_report(records,
                          report_format == "markdown" ? proxrl::ReportFormat::Markdown
                                                      : proxrl::ReportFormat::Csv,
                          report_out);
      std::printf("report written to %s\n", report_out.c_str());
      return kExitOk;
    }

    if (verify->parsed()) {
      std::vector<proxrl::CheckResult> checks;
      auto append = [&checks](std::vector<proxrl::CheckResult> more) {
        checks.insert(checks.end(), more.begin(), more.end());
      };
      if (suite == "props" || suite == "all") append(proxrl::run_props_suite());
      if (suite == "oracle" || suite == "all") append(proxrl::run_oracle_suite());
      if (suite == "grad" || suite == "all") append(proxrl::run_grad_suite());
      const int failures = proxrl::report_checks(checks);
      std::printf("%zu checks, %d failures\n", checks.size(), failures);
      return failures == 0 ? kExitOk : kExitValidation;
    }
  } catch (const proxrl::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitValidation;
  } catch (const proxrl::DomainError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  } catch (const proxrl::TrainingError& e) {
    std::fprintf(stderr, "training abort: %s\n", e.what());
    return kExitTrainingAbort;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitOk;
}
