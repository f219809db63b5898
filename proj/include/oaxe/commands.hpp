#pragma once

// Implementation of the command line verbs: generate, train, eval, sweep and
// bench. Each validates its whole configuration before touching the disk.

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "oaxe/checkpoint.hpp"
#include "oaxe/config.hpp"
#include "oaxe/error.hpp"
#include "oaxe/metrics.hpp"
#include "oaxe/synthdata.hpp"
#include "oaxe/trainharness.hpp"

namespace oaxe {

namespace fs = std::filesystem;

inline constexpr const char* kTrainFile = "train.tsv";
inline constexpr const char* kValidFile = "valid.tsv";
inline constexpr const char* kTestFile = "test.tsv";
inline constexpr const char* kMetaFile = "dataset.meta";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kManifestFile = "manifest.json";

inline std::string digest_hex(const EVP_MD* md, std::string_view bytes) {
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, md, nullptr);
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, out, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char hex[] = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[out[i] >> 4];
    s += hex[out[i] & 15];
  }
  return s;
}

// Same id `git hash-object` would print for the content.
inline std::string git_blob_hash(std::string_view bytes) {
  std::string blob = "blob " + std::to_string(bytes.size());
  blob.push_back('\0');
  blob.append(bytes);
  return digest_hex(EVP_sha1(), blob);
}

inline std::string dataset_checksum(const fs::path& dir) {
  std::string all;
  for (const char* name : {kMetaFile, kTrainFile, kValidFile, kTestFile}) {
    const std::string content = read_file(dir / name);
    all += std::string(name) + '\0' + std::to_string(content.size()) + '\0' + content;
  }
  return digest_hex(EVP_sha256(), all);
}

// Exclusive lock on an output directory for the lifetime of the object.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".oaxe.lock") {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) throw Error(ErrorKind::Usage, "output directory " + dir.string() + " is locked by another command");
    ::close(fd);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorKind::Io, "cannot create directory " + dir.string());
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct LoadedDataset {
  SynthConfig synth;
  std::vector<SynthExample> train, valid, test;
};

inline void write_dataset(const fs::path& dir, const SynthConfig& cfg, const SynthDataset& data) {
  ensure_dir(dir);
  write_file_atomic(dir / kTrainFile, format_split(data.train));
  write_file_atomic(dir / kValidFile, format_split(data.valid));
  write_file_atomic(dir / kTestFile, format_split(data.test));
  // Sidecar last: its presence marks a complete dataset.
  write_file_atomic(dir / kMetaFile, dataset_meta_text(cfg));
}

inline LoadedDataset load_dataset(const fs::path& dir) {
  if (!fs::exists(dir / kMetaFile)) throw Error(ErrorKind::Io, "no dataset at " + dir.string() + " (missing dataset.meta)");
  LoadedDataset d;
  d.synth = parse_dataset_meta(read_file(dir / kMetaFile));
  d.train = parse_split(read_file(dir / kTrainFile));
  d.valid = parse_split(read_file(dir / kValidFile));
  d.test = parse_split(read_file(dir / kTestFile));
  for (const auto* split : {&d.train, &d.valid, &d.test}) {
    for (const auto& ex : *split) {
      for (int t : ex.source) {
        if (t < 0 || t >= d.synth.vocab_size) throw Error(ErrorKind::Io, "dataset token outside vocabulary");
      }
    }
  }
  return d;
}

inline void cmd_generate(const ExperimentConfig& cfg, const fs::path& out) {
  cfg.validate();
  ensure_dir(out);
  DirLock lock(out);
  write_dataset(out, cfg.synth, generate_dataset(cfg.synth));
}

struct TrainOutcome {
  TrainResult result;
  std::string run_id;
  fs::path checkpoint;
};

// Trains per cfg.train on the dataset in `data_dir` and writes checkpoint.bin,
// metrics.csv and manifest.json into `out`.
inline TrainOutcome cmd_train(const ExperimentConfig& cfg, const fs::path& data_dir, const fs::path& out,
                              const std::optional<fs::path>& init_checkpoint,
                              const std::function<void(const MetricRow&)>& on_row = {}) {
  cfg.validate();
  if (is_finetune_only(cfg.train.loss_kind) && !init_checkpoint) {
    throw Error(ErrorKind::Config, "loss_kind " + to_string(cfg.train.loss_kind) +
                                       " requires an XE pre-trained checkpoint (train.init_checkpoint or --init)");
  }
  if (init_checkpoint && !fs::exists(*init_checkpoint)) {
    throw Error(ErrorKind::Config, "init checkpoint " + init_checkpoint->string() + " does not exist");
  }
  const LoadedDataset data = load_dataset(data_dir);
  if (data.synth.vocab_size != cfg.model.vocab_size) {
    throw Error(ErrorKind::Compatibility, "dataset vocabulary " + std::to_string(data.synth.vocab_size) +
                                              " != configured vocabulary " + std::to_string(cfg.model.vocab_size));
  }
  std::optional<Checkpoint> init;
  std::string init_hash;
  if (init_checkpoint) {
    const std::string bytes = read_file(*init_checkpoint);
    init = deserialize_checkpoint(bytes);
    init_hash = git_blob_hash(bytes);
    if (init->params.config.vocab_size != data.synth.vocab_size) {
      throw Error(ErrorKind::Compatibility, "init checkpoint vocabulary does not match the dataset");
    }
  }

  ensure_dir(out);
  DirLock lock(out);
  const std::string run_id =
      cfg.run.run_id.empty() ? to_string(cfg.train.loss_kind) + "-seed" + std::to_string(cfg.run.seed) : cfg.run.run_id;
  const std::string started = utc_timestamp();

  TrainingData td{data.synth, data.train, data.valid};
  TrainOutcome outcome;
  outcome.result = train(cfg.model, td, cfg.train, init, on_row);
  outcome.run_id = run_id;
  outcome.checkpoint = out / kCheckpointFile;

  std::string csv = std::string(kMetricCsvHeader) + "\n";
  for (const auto& row : outcome.result.log) csv += to_csv_row(row) + "\n";
  write_file_atomic(out / kMetricsFile, csv);
  const std::string ckpt_bytes = serialize_checkpoint(outcome.result.best);
  write_file_atomic(outcome.checkpoint, ckpt_bytes);

  nlohmann::ordered_json manifest;
  manifest["run_id"] = run_id;
  manifest["loss_kind"] = to_string(cfg.train.loss_kind);
  manifest["config"] = to_text(cfg);
  manifest["dataset_dir"] = fs::absolute(data_dir).string();
  manifest["dataset_checksum"] = dataset_checksum(data_dir);
  manifest["init_checkpoint_hash"] = init_hash;
  manifest["checkpoint_hash"] = git_blob_hash(ckpt_bytes);
  manifest["best_epoch"] = outcome.result.best_epoch;
  manifest["best_valid_exact_match"] = outcome.result.best_exact_match;
  manifest["started_at"] = started;
  manifest["finished_at"] = utc_timestamp();
  write_file_atomic(out / kManifestFile, manifest.dump(2) + "\n");
  return outcome;
}

inline void append_eval_row(const fs::path& csv, const EvalReport& report) {
  const bool fresh = !fs::exists(csv) || fs::file_size(csv) == 0;
  if (csv.has_parent_path()) ensure_dir(csv.parent_path());
  std::ofstream out(csv, std::ios::app);
  if (!out) throw Error(ErrorKind::Io, "cannot append to " + csv.string());
  if (fresh) out << kEvalCsvHeader << "\n";
  out << to_csv_row(report) << "\n";
}

struct EvalOptions {
  bool dedup = false;
  std::string run_id;     // default: manifest next to the checkpoint, else file stem
  std::string loss_kind;  // same
};

inline EvalReport cmd_eval(const fs::path& checkpoint, const fs::path& data_dir, const std::optional<fs::path>& csv,
                           const EvalOptions& opts) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const LoadedDataset data = load_dataset(data_dir);
  if (ckpt.params.config.vocab_size != data.synth.vocab_size) {
    throw Error(ErrorKind::Compatibility, "checkpoint vocabulary " + std::to_string(ckpt.params.config.vocab_size) +
                                              " != dataset vocabulary " + std::to_string(data.synth.vocab_size));
  }
  EvalReport report = evaluate(ckpt.params, data.test, data.synth, opts.dedup);
  report.run_id = opts.run_id;
  report.loss_kind = opts.loss_kind;
  const fs::path manifest_path = checkpoint.parent_path() / kManifestFile;
  if ((report.run_id.empty() || report.loss_kind.empty()) && fs::exists(manifest_path)) {
    const auto manifest = nlohmann::json::parse(read_file(manifest_path));
    if (report.run_id.empty()) report.run_id = manifest.value("run_id", "");
    if (report.loss_kind.empty()) report.loss_kind = manifest.value("loss_kind", "");
  }
  if (report.run_id.empty()) report.run_id = checkpoint.stem().string();
  if (report.loss_kind.empty()) report.loss_kind = "unknown";
  if (csv) append_eval_row(*csv, report);
  return report;
}

// For every mode count 1..5: generate, XE pre-train, then fine-tune the
// pre-trained model with OaXE and (for an equal budget) with XE, and evaluate
// both. Rows go to out/sweep.csv.
inline std::vector<EvalReport> cmd_sweep(const ExperimentConfig& base, const fs::path& out,
                                         const std::function<void(const std::string&)>& progress = {}) {
  base.validate();
  ensure_dir(out);
  const fs::path csv = out / "sweep.csv";
  std::error_code ec;
  fs::remove(csv, ec);
  std::vector<EvalReport> rows;
  auto note = [&](const std::string& s) {
    if (progress) progress(s);
  };
  for (int modes = 1; modes <= kNumOrderingModes; ++modes) {
    ExperimentConfig cfg = base;
    cfg.synth.num_modes = modes;
    cfg.synth.mode_probs = default_mode_probs(modes);
    cfg.validate();
    const fs::path dir = out / ("modes" + std::to_string(modes));
    note("modes=" + std::to_string(modes) + ": generating data");
    cmd_generate(cfg, dir / "data");

    ExperimentConfig pre = cfg;
    pre.train.loss_kind = LossKind::Xe;
    pre.run.run_id = "modes" + std::to_string(modes) + "-pretrain";
    note("modes=" + std::to_string(modes) + ": XE pre-training");
    const auto pretrained = cmd_train(pre, dir / "data", dir / "pretrain", std::nullopt);

    for (LossKind kind : {LossKind::Xe, base.sweep.oaxe_kind}) {
      ExperimentConfig ft = cfg;
      ft.train.loss_kind = kind;
      const std::string label = kind == LossKind::Xe ? "xe" : "oaxe";
      ft.run.run_id = "modes" + std::to_string(modes) + "-" + label;
      note("modes=" + std::to_string(modes) + ": fine-tuning with " + to_string(kind));
      const auto tuned = cmd_train(ft, dir / "data", dir / label, pretrained.checkpoint);
      EvalOptions opts;
      opts.run_id = ft.run.run_id;
      opts.loss_kind = label;
      rows.push_back(cmd_eval(tuned.checkpoint, dir / "data", csv, opts));
      note(to_csv_row(rows.back()));
    }
  }
  return rows;
}

inline BenchReport cmd_bench(const ExperimentConfig& cfg, const fs::path& data_dir,
                             const std::optional<fs::path>& init_checkpoint) {
  cfg.validate();
  const LoadedDataset data = load_dataset(data_dir);
  Parameters<float> params;
  if (init_checkpoint) {
    params = load_checkpoint(*init_checkpoint).params;
  } else {
    ModelConfig mc = cfg.model;
    mc.vocab_size = data.synth.vocab_size;
    mc.seed = substream_seed(cfg.run.seed, "init");
    params = init_parameters<float>(mc);
  }
  if (params.config.vocab_size != data.synth.vocab_size) {
    throw Error(ErrorKind::Compatibility, "checkpoint vocabulary does not match the dataset");
  }
  return bench_step_times(params, data.train, cfg.train, cfg.bench.steps, cfg.bench.warm_in);
}

}  // namespace oaxe
