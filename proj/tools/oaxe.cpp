// Command line entry point: generate, train, eval, sweep, bench.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "oaxe/commands.hpp"

namespace fs = std::filesystem;
using namespace oaxe;

namespace {

struct GlobalOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

ExperimentConfig load_config(const GlobalOptions& g) {
  ExperimentConfig cfg = g.config.empty() ? parse_config("") : parse_config(read_file(g.config));
  if (g.seed) cfg.run.seed = *g.seed;
  if (g.threads) cfg.run.threads = *g.threads;
  cfg.finalize();
  cfg.validate();
  return cfg;
}

fs::path require_out(const GlobalOptions& g) {
  if (g.out.empty()) throw Error(ErrorKind::Usage, "--out is required");
  return g.out;
}

void print_row(const MetricRow& r) { std::cerr << to_csv_row(r) << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Order-agnostic cross entropy laboratory"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "Experiment config (sectioned key = value)");
  app.add_option("--out", g.out, "Output directory (or CSV file for eval)");
  app.add_option("--seed", g.seed, "Root seed, overrides [run] seed");
  app.add_option("--threads", g.threads, "Worker threads per training step");

  auto* generate = app.add_subcommand("generate", "Write train/valid/test splits and dataset.meta");

  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint, metrics and manifest");
  std::string train_data, train_init, train_loss;
  train_cmd->add_option("--data", train_data, "Dataset directory (default: [train] data_dir)");
  train_cmd->add_option("--init", train_init, "Pre-trained checkpoint to fine-tune (default: [train] init_checkpoint)");
  train_cmd->add_option("--loss", train_loss, "Loss kind, overrides [train] loss_kind");

  auto* eval_cmd = app.add_subcommand("eval", "Decode the test split and append an EvalReport CSV row");
  std::string eval_ckpt, eval_data, eval_run_id, eval_loss;
  bool eval_dedup = false;
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_flag("--dedup", eval_dedup, "Collapse repeated tokens before repetition rate and NCM");
  eval_cmd->add_option("--run-id", eval_run_id);
  eval_cmd->add_option("--loss-kind", eval_loss);

  auto* sweep = app.add_subcommand("sweep", "Mode sweep: 1..5 modes x {xe, oaxe}");

  auto* bench = app.add_subcommand("bench", "Compare mean XE and OaXE training step time");
  std::string bench_data, bench_init;
  bench->add_option("--data", bench_data, "Dataset directory (default: [train] data_dir)");
  bench->add_option("--init", bench_init, "Checkpoint to start from (default: fresh initialization)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const ExperimentConfig cfg = load_config(g);
    if (*generate) {
      const fs::path out = require_out(g);
      cmd_generate(cfg, out);
      std::cout << "wrote dataset to " << out.string() << " (sha256 " << dataset_checksum(out) << ")\n";
    } else if (*train_cmd) {
      ExperimentConfig c = cfg;
      if (!train_loss.empty()) c.train.loss_kind = parse_loss_kind(train_loss);
      const std::string data = train_data.empty() ? c.data_dir : train_data;
      if (data.empty()) throw Error(ErrorKind::Usage, "no dataset: pass --data or set [train] data_dir");
      const std::string init = train_init.empty() ? c.init_checkpoint : train_init;
      std::optional<fs::path> init_path;
      if (!init.empty()) init_path = fs::path(init);
      const auto outcome = cmd_train(c, data, require_out(g), init_path, print_row);
      std::cout << "run " << outcome.run_id << ": best epoch " << outcome.result.best_epoch
                << ", valid exact match " << outcome.result.best_exact_match << ", checkpoint "
                << outcome.checkpoint.string() << "\n";
    } else if (*eval_cmd) {
      std::optional<fs::path> csv;
      if (!g.out.empty()) csv = fs::path(g.out);
      const EvalReport r = cmd_eval(eval_ckpt, eval_data, csv, {eval_dedup, eval_run_id, eval_loss});
      std::cout << kEvalCsvHeader << "\n" << to_csv_row(r) << "\n";
    } else if (*sweep) {
      const auto rows = cmd_sweep(cfg, require_out(g), [](const std::string& s) { std::cerr << s << std::endl; });
      std::cout << kEvalCsvHeader << "\n";
      for (const auto& r : rows) std::cout << to_csv_row(r) << "\n";
    } else if (*bench) {
      const std::string data = bench_data.empty() ? cfg.data_dir : bench_data;
      if (data.empty()) throw Error(ErrorKind::Usage, "no dataset: pass --data or set [train] data_dir");
      std::optional<fs::path> init;
      if (!bench_init.empty()) init = fs::path(bench_init);
      const BenchReport r = cmd_bench(cfg, data, init);
      std::printf("steps,xe_mean_ms,oaxe_mean_ms,ratio\n%d,%.4f,%.4f,%.4f\n", r.steps, r.xe_mean_seconds * 1e3,
                  r.oaxe_mean_seconds * 1e3, r.ratio());
    }
  } catch (const Error& e) {
    std::cerr << "oaxe: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "oaxe: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
