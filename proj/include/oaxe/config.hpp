#pragma once

// Experiment configuration as sectioned key = value text:
//
//   # comment
//   [synth]
//   num_modes = 5
//   mode_probs = 0.14, 0.25, 0.13, 0.39, 0.09
//
// Every key has a default; unknown sections or keys are errors.

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "oaxe/error.hpp"
#include "oaxe/seqmodel.hpp"
#include "oaxe/synthdata.hpp"
#include "oaxe/trainharness.hpp"

namespace oaxe {

struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string run_id;  // empty: derived from the command
};

struct BenchConfig {
  int steps = 200;
  int warm_in = 20;
};

struct SweepConfig {
  LossKind oaxe_kind = LossKind::Oaxe;
};

struct ExperimentConfig {
  RunConfig run;
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  BenchConfig bench;
  SweepConfig sweep;
  std::string init_checkpoint;  // [train] init_checkpoint
  std::string data_dir;         // [train] data_dir

  // Seeds flow from run.seed; model dimensions follow the dataset vocabulary.
  void finalize() {
    synth.seed = run.seed;
    train.seed = run.seed;
    train.threads = run.threads;
    model.vocab_size = synth.vocab_size;
  }

  void validate() const {
    synth.validate();
    model.validate();
    train.validate();
    if (run.threads < 1) throw Error(ErrorKind::Config, "run.threads must be >= 1");
    if (bench.steps <= 0 || bench.warm_in < 0) throw Error(ErrorKind::Config, "bench.steps must be positive");
    if (synth.len_max > model.max_len) throw Error(ErrorKind::Config, "synth.len_max exceeds model.max_len");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw Error(ErrorKind::Config, "bad value for " + key + ": '" + text + "'");
  return value;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, trim(item)));
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Flat "section.key" -> value map, rejecting duplicates and keys outside a section.
inline std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": bad section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty()) throw Error(ErrorKind::Config, "line " + std::to_string(line_no) + ": key outside of a section");
    const std::string key = section + "." + detail::trim(line.substr(0, eq));
    if (!out.emplace(key, detail::trim(line.substr(eq + 1))).second) {
      throw Error(ErrorKind::Config, "duplicate key " + key);
    }
  }
  return out;
}

inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  bool probs_given = false;
  for (const auto& [key, value] : parse_key_values(text)) {
    using detail::parse_number;
    auto i32 = [&] { return parse_number<int>(key, value); };
    auto f64 = [&] { return parse_number<double>(key, value); };
    if (key == "run.seed") c.run.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "run.threads") c.run.threads = i32();
    else if (key == "run.run_id") c.run.run_id = value;
    else if (key == "synth.vocab_size") c.synth.vocab_size = i32();
    else if (key == "synth.len_min") c.synth.len_min = i32();
    else if (key == "synth.len_max") c.synth.len_max = i32();
    else if (key == "synth.train_size") c.synth.train_size = i32();
    else if (key == "synth.valid_size") c.synth.valid_size = i32();
    else if (key == "synth.test_size") c.synth.test_size = i32();
    else if (key == "synth.num_modes") c.synth.num_modes = i32();
    else if (key == "synth.mode_probs") { c.synth.mode_probs = detail::parse_list(key, value); probs_given = true; }
    else if (key == "model.embed_dim") c.model.embed_dim = i32();
    else if (key == "model.ffn_dim") c.model.ffn_dim = i32();
    else if (key == "model.enc_layers") c.model.enc_layers = i32();
    else if (key == "model.dec_layers") c.model.dec_layers = i32();
    else if (key == "model.heads") c.model.heads = i32();
    else if (key == "model.max_len") c.model.max_len = i32();
    else if (key == "train.loss_kind") c.train.loss_kind = parse_loss_kind(value);
    else if (key == "train.pretrain_steps") c.train.pretrain_steps = i32();
    else if (key == "train.finetune_epochs") c.train.finetune_epochs = i32();
    else if (key == "train.batch_tokens") c.train.batch_tokens = i32();
    else if (key == "train.lr_peak") c.train.lr_peak = f64();
    else if (key == "train.finetune_lr_peak") c.train.finetune_lr_peak = f64();
    else if (key == "train.warmup_steps") c.train.warmup_steps = i32();
    else if (key == "train.finetune_warmup_steps") c.train.finetune_warmup_steps = i32();
    else if (key == "train.anneal_c") c.train.anneal_c = f64();
    else if (key == "train.anneal_lambda") c.train.anneal_lambda = f64();
    else if (key == "train.anneal_epochs") c.train.anneal_epochs = i32();
    else if (key == "train.trunc_pi") c.train.trunc_pi = f64();
    else if (key == "train.total_steps") c.train.total_steps = i32();
    else if (key == "train.init_checkpoint") c.init_checkpoint = value;
    else if (key == "train.data_dir") c.data_dir = value;
    else if (key == "bench.steps") c.bench.steps = i32();
    else if (key == "bench.warm_in") c.bench.warm_in = i32();
    else if (key == "sweep.oaxe_kind") c.sweep.oaxe_kind = parse_loss_kind(value);
    else throw Error(ErrorKind::Config, "unknown config key " + key);
  }
  if (!probs_given && c.synth.num_modes >= 1 && c.synth.num_modes <= kNumOrderingModes) {
    c.synth.mode_probs = default_mode_probs(c.synth.num_modes);
  }
  c.finalize();
  c.validate();
  return c;
}

inline std::string synth_to_text(const SynthConfig& s) {
  std::ostringstream out;
  out << "[synth]\n"
      << "vocab_size = " << s.vocab_size << "\n"
      << "len_min = " << s.len_min << "\n"
      << "len_max = " << s.len_max << "\n"
      << "train_size = " << s.train_size << "\n"
      << "valid_size = " << s.valid_size << "\n"
      << "test_size = " << s.test_size << "\n"
      << "num_modes = " << s.num_modes << "\n"
      << "mode_probs = ";
  for (std::size_t i = 0; i < s.mode_probs.size(); ++i) out << (i ? ", " : "") << detail::format_double(s.mode_probs[i]);
  out << "\n";
  return out.str();
}

// Full snapshot that parses back to the same configuration.
inline std::string to_text(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[run]\n"
      << "seed = " << c.run.seed << "\n"
      << "threads = " << c.run.threads << "\n";
  if (!c.run.run_id.empty()) out << "run_id = " << c.run.run_id << "\n";
  out << "\n" << synth_to_text(c.synth) << "\n";
  out << "[model]\n"
      << "embed_dim = " << c.model.embed_dim << "\n"
      << "ffn_dim = " << c.model.ffn_dim << "\n"
      << "enc_layers = " << c.model.enc_layers << "\n"
      << "dec_layers = " << c.model.dec_layers << "\n"
      << "heads = " << c.model.heads << "\n"
      << "max_len = " << c.model.max_len << "\n\n";
  const auto& t = c.train;
  out << "[train]\n"
      << "loss_kind = " << to_string(t.loss_kind) << "\n"
      << "pretrain_steps = " << t.pretrain_steps << "\n"
      << "finetune_epochs = " << t.finetune_epochs << "\n"
      << "batch_tokens = " << t.batch_tokens << "\n"
      << "lr_peak = " << detail::format_double(t.lr_peak) << "\n"
      << "finetune_lr_peak = " << detail::format_double(t.finetune_lr_peak) << "\n"
      << "warmup_steps = " << t.warmup_steps << "\n"
      << "finetune_warmup_steps = " << t.finetune_warmup_steps << "\n"
      << "anneal_c = " << detail::format_double(t.anneal_c) << "\n"
      << "anneal_lambda = " << detail::format_double(t.anneal_lambda) << "\n"
      << "anneal_epochs = " << t.anneal_epochs << "\n"
      << "trunc_pi = " << detail::format_double(t.trunc_pi) << "\n"
      << "total_steps = " << t.total_steps << "\n";
  if (!c.init_checkpoint.empty()) out << "init_checkpoint = " << c.init_checkpoint << "\n";
  if (!c.data_dir.empty()) out << "data_dir = " << c.data_dir << "\n";
  out << "\n[bench]\n"
      << "steps = " << c.bench.steps << "\n"
      << "warm_in = " << c.bench.warm_in << "\n\n"
      << "[sweep]\n"
      << "oaxe_kind = " << to_string(c.sweep.oaxe_kind) << "\n";
  return out.str();
}

// Dataset sidecar: the generating [synth] section plus the seed.
inline std::string dataset_meta_text(const SynthConfig& s) {
  return synth_to_text(s) + "\n[run]\nseed = " + std::to_string(s.seed) + "\n";
}

inline SynthConfig parse_dataset_meta(std::string_view text) {
  return parse_config(text).synth;
}

}  // namespace oaxe
