#pragma once

// Training loop for the toy parallel decoder: Adam with warmup and
// inverse-square-root decay, XE pre-training, OaXE fine-tuning (optionally
// truncated) and the annealed XE/OaXE joint loss.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "oaxe/checkpoint.hpp"
#include "oaxe/error.hpp"
#include "oaxe/losses.hpp"
#include "oaxe/metrics.hpp"
#include "oaxe/random.hpp"
#include "oaxe/seqmodel.hpp"
#include "oaxe/synthdata.hpp"

namespace oaxe {

enum class LossKind { Xe, Oaxe, OaxeTrunc, JointAnneal };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::Xe: return "xe";
    case LossKind::Oaxe: return "oaxe";
    case LossKind::OaxeTrunc: return "oaxe_trunc";
    case LossKind::JointAnneal: return "joint_anneal";
  }
  return "?";
}

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "xe") return LossKind::Xe;
  if (s == "oaxe") return LossKind::Oaxe;
  if (s == "oaxe_trunc") return LossKind::OaxeTrunc;
  if (s == "joint_anneal") return LossKind::JointAnneal;
  throw Error(ErrorKind::Config, "unknown loss_kind '" + s + "' (xe, oaxe, oaxe_trunc, joint_anneal)");
}

struct TrainConfig {
  LossKind loss_kind = LossKind::Xe;
  int pretrain_steps = 4000;  // optimizer steps when training from scratch with xe
  int finetune_epochs = 10;
  int batch_tokens = 2048;
  double lr_peak = 5e-4;
  double finetune_lr_peak = 0.0;  // 0 means lr_peak / 100
  int warmup_steps = 500;
  int finetune_warmup_steps = 100;
  double anneal_c = 16.0;
  double anneal_lambda = 0.95;
  int anneal_epochs = 20;  // M
  double trunc_pi = 0.15;
  std::uint64_t seed = 1;
  int total_steps = 1000000;  // hard cap across all phases
  int threads = 1;

  double effective_finetune_lr_peak() const { return finetune_lr_peak > 0.0 ? finetune_lr_peak : lr_peak / 100.0; }

  void validate() const {
    if (pretrain_steps <= 0 || finetune_epochs <= 0 || batch_tokens <= 0 || warmup_steps <= 0 ||
        finetune_warmup_steps <= 0 || anneal_epochs <= 0 || total_steps <= 0) {
      throw Error(ErrorKind::Config, "step, epoch and batch counts must be positive");
    }
    if (!(lr_peak > 0.0) || !(finetune_lr_peak >= 0.0)) throw Error(ErrorKind::Config, "learning rates must be positive");
    if (!(trunc_pi >= 0.0 && trunc_pi < 1.0)) throw Error(ErrorKind::Config, "trunc_pi must be in [0,1)");
    if (!(anneal_c > 1.0)) throw Error(ErrorKind::Config, "anneal_c must be > 1");
    if (!(anneal_lambda >= 0.0 && anneal_lambda <= 1.0)) throw Error(ErrorKind::Config, "anneal_lambda must be in [0,1]");
    if (threads < 1) throw Error(ErrorKind::Config, "threads must be >= 1");
  }
};

// Linear warmup to `peak`, then peak * sqrt(warmup / step).
inline double lr_schedule(std::int64_t step, double peak, int warmup) {
  const double s = static_cast<double>(std::max<std::int64_t>(step, 1));
  const double w = static_cast<double>(warmup);
  return s < w ? peak * s / w : peak * std::sqrt(w / s);
}

inline double lr_schedule(std::int64_t step, const TrainConfig& cfg) {
  return lr_schedule(step, cfg.lr_peak, cfg.warmup_steps);
}

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.98;
inline constexpr double kAdamEps = 1e-8;

// One bias-corrected Adam update of a single tensor; `step` counts from 1.
inline void adam_update(Mat<float>& param, const Mat<float>& grad, Mat<float>& m, Mat<float>& v, std::int64_t step,
                        double lr) {
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
  const float b1 = static_cast<float>(kAdamBeta1), b2 = static_cast<float>(kAdamBeta2);
  const float step_size = static_cast<float>(lr / c1);
  const float inv_sqrt_c2 = static_cast<float>(1.0 / std::sqrt(c2));
  const float eps = static_cast<float>(kAdamEps);
  m.array() = b1 * m.array() + (1.0f - b1) * grad.array();
  v.array() = b2 * v.array() + (1.0f - b2) * grad.array().square();
  param.array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_c2 + eps);
}

inline bool all_finite(const Parameters<float>& grads) {
  bool ok = true;
  for_each_tensor(grads, [&](const std::string&, const Mat<float>& t) { ok = ok && t.allFinite(); });
  return ok;
}

inline void optimizer_step(Parameters<float>& params, const Parameters<float>& grads, OptimizerState& state,
                           double lr) {
  if (!all_finite(grads)) throw Error(ErrorKind::Divergence, "non-finite gradient at step " + std::to_string(state.step + 1));
  ++state.step;
  std::vector<Mat<float>*> p, m, v;
  for_each_tensor(params, [&](const std::string&, Mat<float>& t) { p.push_back(&t); });
  for_each_tensor(state.first_moment, [&](const std::string&, Mat<float>& t) { m.push_back(&t); });
  for_each_tensor(state.second_moment, [&](const std::string&, Mat<float>& t) { v.push_back(&t); });
  std::size_t i = 0;
  for_each_tensor(grads, [&](const std::string&, const Mat<float>& g) {
    adam_update(*p[i], g, *m[i], *v[i], state.step, lr);
    ++i;
  });
}

struct LossSpec {
  LossKind kind = LossKind::Xe;
  double temperature = 0.0;  // joint_anneal only
  double margin = 0.15;      // oaxe_trunc only
};

template <typename S>
LossResult<S> compute_loss(const LossSpec& spec, const LogProbMatrix<S>& log_probs, std::span<const int> target) {
  switch (spec.kind) {
    case LossKind::Xe: return xe_loss(log_probs, target);
    case LossKind::Oaxe: return oaxe_loss(log_probs, target);
    case LossKind::OaxeTrunc: return oaxe_truncated_loss(log_probs, target, spec.margin);
    case LossKind::JointAnneal: return joint_loss(log_probs, target, spec.temperature);
  }
  throw Error(ErrorKind::Parameter, "unknown loss kind");
}

// Token-count batches of similar lengths. Examples are shuffled, stably
// sorted by length and packed; the batch order is shuffled again.
inline std::vector<std::vector<std::size_t>> make_batches(std::span<const SynthExample> examples, int batch_tokens,
                                                          std::mt19937_64& rng) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return examples[a].target.size() < examples[b].target.size();
  });
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> current;
  std::size_t tokens = 0;
  for (std::size_t idx : order) {
    const std::size_t len = examples[idx].target.size();
    if (!current.empty() && tokens + len > static_cast<std::size_t>(batch_tokens)) {
      batches.push_back(std::move(current));
      current.clear();
      tokens = 0;
    }
    current.push_back(idx);
    tokens += len;
  }
  if (!current.empty()) batches.push_back(std::move(current));
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

// Mean per-example loss and its parameter gradient over one batch. With
// several threads each worker owns a contiguous slice and an accumulator; the
// accumulators are summed in slice order.
inline double batch_gradients(const Parameters<float>& params, std::span<const SynthExample> examples,
                              std::span<const std::size_t> batch, const LossSpec& spec, Parameters<float>& grads,
                              int threads = 1) {
  const float weight = 1.0f / static_cast<float>(batch.size());
  auto run_slice = [&](std::size_t begin, std::size_t end, Parameters<float>& acc) {
    double loss = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& ex = examples[batch[i]];
      const auto trace = forward_trace(params, ex.source, static_cast<int>(ex.target.size()));
      const auto result = compute_loss(spec, trace.log_probs, ex.target);
      loss += result.loss;
      accumulate_gradients(params, trace, result.grad, acc, weight);
    }
    return loss;
  };

  for_each_tensor(grads, [](const std::string&, Mat<float>& t) { t.setZero(); });
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), batch.size());
  if (workers <= 1) return run_slice(0, batch.size(), grads) / static_cast<double>(batch.size());

  std::vector<Parameters<float>> partial(workers, zeros_like(params));
  std::vector<double> losses(workers, 0.0);
  std::vector<std::thread> pool;
  const std::size_t chunk = (batch.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(batch.size(), w * chunk), end = std::min(batch.size(), begin + chunk);
    pool.emplace_back([&, w, begin, end] { losses[w] = run_slice(begin, end, partial[w]); });
  }
  for (auto& t : pool) t.join();
  double loss = 0.0;
  for (std::size_t w = 0; w < workers; ++w) {
    for_each_tensor_pair(partial[w], grads, [](const std::string&, const Mat<float>& src, Mat<float>& dst) { dst += src; });
    loss += losses[w];
  }
  return loss / static_cast<double>(batch.size());
}

struct DecodedSplit {
  std::vector<Sequence> sources, outputs;
  std::vector<double> neg_log_probs;  // of each output under the model
};

inline DecodedSplit decode_split(const Parameters<float>& params, std::span<const SynthExample> examples) {
  DecodedSplit d;
  for (const auto& ex : examples) {
    const auto lp = forward(params, ex.source, static_cast<int>(ex.target.size()));
    auto out = argmax_rows(lp);
    double nll = 0.0;
    for (std::size_t j = 0; j < out.size(); ++j) nll -= static_cast<double>(lp(j, out[j]));
    d.sources.push_back(ex.source);
    d.outputs.push_back(std::move(out));
    d.neg_log_probs.push_back(nll);
  }
  return d;
}

// Metrics for given outputs. Exact match is always on the raw outputs;
// `dedup` collapses repeats before repetition rate and NCM.
inline EvalReport evaluate_outputs(const Parameters<float>& params, std::span<const Sequence> sources,
                                   std::span<const Sequence> outputs, const SynthConfig& synth, bool dedup) {
  EvalReport r;
  r.num_modes = synth.num_modes;
  r.num_examples = outputs.size();
  r.exact_match = exact_match(outputs, sources, synth);
  if (dedup) {
    std::vector<Sequence> collapsed;
    collapsed.reserve(outputs.size());
    for (const auto& o : outputs) collapsed.push_back(deduplicate(o));
    r.repetition_rate = repetition_rate(collapsed);
    r.ncm = ncm(params, sources, collapsed);
  } else {
    r.repetition_rate = repetition_rate(outputs);
    r.ncm = ncm(params, sources, outputs);
  }
  return r;
}

inline EvalReport evaluate(const Parameters<float>& params, std::span<const SynthExample> examples,
                           const SynthConfig& synth, bool dedup) {
  if (params.config.vocab_size != synth.vocab_size) {
    throw Error(ErrorKind::Compatibility, "checkpoint vocabulary " + std::to_string(params.config.vocab_size) +
                                              " != dataset vocabulary " + std::to_string(synth.vocab_size));
  }
  const auto decoded = decode_split(params, examples);
  return evaluate_outputs(params, decoded.sources, decoded.outputs, synth, dedup);
}

struct MetricRow {
  std::int64_t step = 0;
  int epoch = 0;
  std::string split;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double exact_match = std::numeric_limits<double>::quiet_NaN();
  double repetition_rate = std::numeric_limits<double>::quiet_NaN();
  double ncm = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
  double temperature = 0.0;
};

inline constexpr const char* kMetricCsvHeader = "step,epoch,split,loss,exact_match,repetition_rate,ncm,lr,temperature";

inline std::string to_csv_row(const MetricRow& r) {
  auto num = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
  };
  return std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + r.split + "," + num(r.loss) + "," +
         num(r.exact_match) + "," + num(r.repetition_rate) + "," + num(r.ncm) + "," + num(r.lr) + "," +
         num(r.temperature);
}

struct TrainingData {
  SynthConfig synth;  // used for the validation references
  std::vector<SynthExample> train, valid;
};

struct TrainResult {
  Checkpoint best;
  int best_epoch = 0;
  double best_exact_match = -1.0;
  std::vector<MetricRow> log;
};

inline bool is_finetune_only(LossKind k) { return k == LossKind::Oaxe || k == LossKind::OaxeTrunc; }

// `init` continues from a checkpoint (fresh optimizer and fine-tuning
// schedule); without it training starts from the model's initializer.
inline TrainResult train(const ModelConfig& model_cfg, const TrainingData& data, const TrainConfig& cfg,
                         const std::optional<Checkpoint>& init = std::nullopt,
                         const std::function<void(const MetricRow&)>& on_row = {}) {
  cfg.validate();
  if (data.train.empty() || data.valid.empty()) throw Error(ErrorKind::Config, "training and validation data must be non-empty");
  if (is_finetune_only(cfg.loss_kind) && !init) {
    throw Error(ErrorKind::Config, "loss_kind " + to_string(cfg.loss_kind) +
                                       " requires an XE pre-trained checkpoint (set train.init_checkpoint)");
  }
  Parameters<float> params;
  if (init) {
    params = init->params;
  } else {
    ModelConfig mc = model_cfg;
    mc.seed = substream_seed(cfg.seed, "init");
    params = init_parameters<float>(mc);
  }
  if (params.config.vocab_size != data.synth.vocab_size) {
    throw Error(ErrorKind::Compatibility, "model vocabulary does not match dataset vocabulary");
  }
  OptimizerState state = fresh_optimizer_state(params);
  Parameters<float> grads = zeros_like(params);

  const bool finetune = init.has_value();
  const double peak = finetune ? cfg.effective_finetune_lr_peak() : cfg.lr_peak;
  const int warmup = finetune ? cfg.finetune_warmup_steps : cfg.warmup_steps;
  int max_epochs = std::numeric_limits<int>::max();
  std::int64_t max_steps = cfg.total_steps;
  if (cfg.loss_kind == LossKind::JointAnneal) {
    max_epochs = cfg.anneal_epochs;
  } else if (finetune) {
    max_epochs = cfg.finetune_epochs;
  } else {
    max_steps = std::min<std::int64_t>(max_steps, cfg.pretrain_steps);
  }

  auto batch_rng = substream(cfg.seed, "batching");
  TrainResult result;
  LossSpec spec{cfg.loss_kind, 0.0, cfg.trunc_pi};
  double lr = 0.0;

  for (int epoch = 0; epoch < max_epochs && state.step < max_steps; ++epoch) {
    if (cfg.loss_kind == LossKind::JointAnneal) {
      spec.temperature = anneal_temperature({cfg.anneal_c, cfg.anneal_lambda, cfg.anneal_epochs, epoch});
    }
    const auto batches = make_batches(data.train, cfg.batch_tokens, batch_rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (const auto& batch : batches) {
      if (state.step >= max_steps) break;
      const double loss = batch_gradients(params, data.train, batch, spec, grads, cfg.threads);
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::Divergence, "loss is " + std::to_string(loss) + " at step " +
                                               std::to_string(state.step + 1) + " (epoch " + std::to_string(epoch + 1) + ")");
      }
      lr = lr_schedule(state.step + 1, peak, warmup);
      optimizer_step(params, grads, state, lr);
      loss_sum += loss;
      ++loss_count;
    }

    MetricRow train_row;
    train_row.step = state.step;
    train_row.epoch = epoch + 1;
    train_row.split = "train";
    train_row.loss = loss_sum / static_cast<double>(std::max<std::size_t>(loss_count, 1));
    train_row.lr = lr;
    train_row.temperature = spec.temperature;
    result.log.push_back(train_row);
    if (on_row) on_row(train_row);

    const auto decoded = decode_split(params, data.valid);
    double valid_loss = 0.0;
    for (const auto& ex : data.valid) {
      valid_loss += compute_loss(spec, forward(params, ex.source, static_cast<int>(ex.target.size())), ex.target).loss;
    }
    MetricRow valid_row = train_row;
    valid_row.split = "valid";
    valid_row.loss = valid_loss / static_cast<double>(data.valid.size());
    valid_row.exact_match = exact_match(decoded.outputs, decoded.sources, data.synth);
    valid_row.repetition_rate = repetition_rate(decoded.outputs);
    std::vector<double> lengths;
    for (const auto& o : decoded.outputs) lengths.push_back(static_cast<double>(o.size()));
    valid_row.ncm = ncm_from_totals(decoded.neg_log_probs, lengths);
    result.log.push_back(valid_row);
    if (on_row) on_row(valid_row);

    if (valid_row.exact_match >= result.best_exact_match) {
      result.best_exact_match = valid_row.exact_match;
      result.best_epoch = epoch + 1;
      result.best = Checkpoint{params, state};
    }
  }
  return result;
}

struct BenchReport {
  double xe_mean_seconds = 0.0;
  double oaxe_mean_seconds = 0.0;
  int steps = 0;
  double ratio() const { return oaxe_mean_seconds / xe_mean_seconds; }
};

// Mean wall-clock time of full training steps (forward, loss, backward, Adam)
// for XE and OaXE on identical batches. The two runs keep separate parameters
// and alternate which goes first to cancel cache effects.
inline BenchReport bench_step_times(const Parameters<float>& start, std::span<const SynthExample> train,
                                    const TrainConfig& cfg, int steps = 200, int warm_in = 20) {
  Parameters<float> xe_params = start, oaxe_params = start;
  OptimizerState xe_state = fresh_optimizer_state(start), oaxe_state = fresh_optimizer_state(start);
  Parameters<float> grads = zeros_like(start);
  auto rng = substream(cfg.seed, "bench");
  std::vector<std::vector<std::size_t>> batches;
  using Clock = std::chrono::steady_clock;
  double xe_total = 0.0, oaxe_total = 0.0;

  auto timed_step = [&](Parameters<float>& params, OptimizerState& state, LossKind kind,
                        std::span<const std::size_t> batch) {
    const auto t0 = Clock::now();
    batch_gradients(params, train, batch, LossSpec{kind, 0.0, cfg.trunc_pi}, grads, cfg.threads);
    optimizer_step(params, grads, state, lr_schedule(state.step + 1, cfg));
    return std::chrono::duration<double>(Clock::now() - t0).count();
  };

  for (int i = 0; i < warm_in + steps; ++i) {
    if (batches.empty()) batches = make_batches(train, cfg.batch_tokens, rng);
    const auto batch = std::move(batches.back());
    batches.pop_back();
    double xe_t, oaxe_t;
    if (i % 2 == 0) {
      xe_t = timed_step(xe_params, xe_state, LossKind::Xe, batch);
      oaxe_t = timed_step(oaxe_params, oaxe_state, LossKind::Oaxe, batch);
    } else {
      oaxe_t = timed_step(oaxe_params, oaxe_state, LossKind::Oaxe, batch);
      xe_t = timed_step(xe_params, xe_state, LossKind::Xe, batch);
    }
    if (i >= warm_in) {
      xe_total += xe_t;
      oaxe_total += oaxe_t;
    }
  }
  return {xe_total / steps, oaxe_total / steps, steps};
}

}  // namespace oaxe
