#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "oaxe/error.hpp"
#include "oaxe/seqmodel.hpp"
#include "oaxe/synthdata.hpp"

namespace oaxe {

// Pairwise summation; result depends only on the order of `values`.
inline double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

inline double exact_match(std::span<const Sequence> outputs, std::span<const Sequence> sources,
                          const SynthConfig& cfg) {
  if (outputs.empty()) throw Error(ErrorKind::Usage, "exact match needs a non-empty evaluation set");
  if (outputs.size() != sources.size()) throw Error(ErrorKind::Usage, "outputs and sources differ in count");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto refs = reference_set(sources[i], cfg);
    if (std::find(refs.begin(), refs.end(), outputs[i]) != refs.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(outputs.size());
}

// Share of tokens equal to their immediate predecessor.
inline double repetition_rate(std::span<const Sequence> outputs) {
  std::size_t repeats = 0, total = 0;
  for (const auto& seq : outputs) {
    total += seq.size();
    for (std::size_t i = 1; i < seq.size(); ++i) repeats += seq[i] == seq[i - 1] ? 1 : 0;
  }
  return total == 0 ? 0.0 : static_cast<double>(repeats) / static_cast<double>(total);
}

inline Sequence deduplicate(std::span<const int> output) {
  Sequence out;
  for (int tok : output) {
    if (out.empty() || out.back() != tok) out.push_back(tok);
  }
  return out;
}

// Corpus NCM from per-example total negative log-probabilities and lengths.
inline double ncm_from_totals(std::span<const double> neg_log_probs, std::span<const double> lengths) {
  if (neg_log_probs.empty()) throw Error(ErrorKind::Usage, "ncm needs a non-empty corpus");
  const double n = static_cast<double>(neg_log_probs.size());
  return (pairwise_sum(neg_log_probs) / n) / (pairwise_sum(lengths) / n);
}

// Mean -log P(output | source) under independent per-position factorization,
// divided by the mean output length.
template <typename S>
double ncm(const Parameters<S>& params, std::span<const Sequence> sources, std::span<const Sequence> outputs) {
  if (outputs.empty() || outputs.size() != sources.size()) {
    throw Error(ErrorKind::Usage, "ncm needs matching, non-empty sources and outputs");
  }
  std::vector<double> nll(outputs.size()), lengths(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto& out = outputs[i];
    if (out.empty()) throw Error(ErrorKind::Usage, "ncm output must be non-empty");
    const auto lp = forward(params, sources[i], static_cast<int>(out.size()));
    double total = 0.0;
    for (std::size_t j = 0; j < out.size(); ++j) {
      if (out[j] < 0 || out[j] >= lp.cols()) throw Error(ErrorKind::Vocabulary, "output token outside vocabulary");
      total -= static_cast<double>(lp(j, out[j]));
    }
    nll[i] = total;
    lengths[i] = static_cast<double>(out.size());
  }
  return ncm_from_totals(nll, lengths);
}

struct EvalReport {
  std::string run_id;
  int num_modes = 1;
  std::string loss_kind;
  double exact_match = 0.0;
  double repetition_rate = 0.0;
  double ncm = 0.0;
  std::size_t num_examples = 0;
};

inline constexpr const char* kEvalCsvHeader = "run_id,num_modes,loss_kind,exact_match,repetition_rate,ncm,num_examples";

inline std::string to_csv_row(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, ",%d,%s,%.6f,%.6f,%.6f,%zu", r.num_modes, r.loss_kind.c_str(), r.exact_match,
                r.repetition_rate, r.ncm, r.num_examples);
  return r.run_id + buf;
}

}  // namespace oaxe
