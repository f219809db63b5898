#pragma once

// Synthetic word-ordering benchmark: random integer sources, targets rendered
// under one of five ordering modes drawn from a categorical distribution.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "oaxe/error.hpp"
#include "oaxe/random.hpp"

namespace oaxe {

enum class OrderingMode { Direct = 0, Reverse = 1, Flip = 2, FlipRightRev = 3, FlipLeftRev = 4 };

inline constexpr int kNumOrderingModes = 5;

inline constexpr std::array<OrderingMode, kNumOrderingModes> kAllModes = {
    OrderingMode::Direct, OrderingMode::Reverse, OrderingMode::Flip, OrderingMode::FlipRightRev,
    OrderingMode::FlipLeftRev};

inline std::string_view mode_name(OrderingMode m) {
  switch (m) {
    case OrderingMode::Direct: return "direct";
    case OrderingMode::Reverse: return "reverse";
    case OrderingMode::Flip: return "flip";
    case OrderingMode::FlipRightRev: return "flip_right_rev";
    case OrderingMode::FlipLeftRev: return "flip_left_rev";
  }
  return "?";
}

using Sequence = std::vector<int>;

// The left segment is the first ceil(n/2) tokens.
inline Sequence render_mode(std::span<const int> source, OrderingMode mode) {
  const std::size_t n = source.size();
  if (n < 2) throw Error(ErrorKind::Length, "rendering needs a source of length >= 2");
  const std::size_t split = n - n / 2;
  const auto left_begin = source.begin();
  const auto right_begin = source.begin() + static_cast<std::ptrdiff_t>(split);
  Sequence out;
  out.reserve(n);
  switch (mode) {
    case OrderingMode::Direct:
      out.assign(source.begin(), source.end());
      break;
    case OrderingMode::Reverse:
      out.assign(source.rbegin(), source.rend());
      break;
    case OrderingMode::Flip:
      out.insert(out.end(), right_begin, source.end());
      out.insert(out.end(), left_begin, right_begin);
      break;
    case OrderingMode::FlipRightRev:
      out.insert(out.end(), right_begin, source.end());
      out.insert(out.end(), std::make_reverse_iterator(right_begin), std::make_reverse_iterator(left_begin));
      break;
    case OrderingMode::FlipLeftRev:
      out.insert(out.end(), source.rbegin(), std::make_reverse_iterator(right_begin));
      out.insert(out.end(), left_begin, right_begin);
      break;
  }
  return out;
}

// Mode mixtures used when none is configured, indexed by num_modes.
inline std::vector<double> default_mode_probs(int num_modes) {
  switch (num_modes) {
    case 1: return {1.0};
    case 2: return {0.53, 0.47};
    case 3: return {0.23, 0.44, 0.33};
    case 4: return {0.17, 0.28, 0.14, 0.41};
    case 5: return {0.14, 0.25, 0.13, 0.39, 0.09};
    default: throw Error(ErrorKind::Config, "num_modes must be in [1,5]");
  }
}

struct SynthConfig {
  int vocab_size = 1000;
  int len_min = 5;
  int len_max = 20;
  int train_size = 20000;
  int valid_size = 1000;
  int test_size = 1000;
  int num_modes = 1;
  std::vector<double> mode_probs = {1.0};
  std::uint64_t seed = 1;

  void validate() const {
    if (vocab_size <= 0) throw Error(ErrorKind::Config, "vocab_size must be positive");
    if (len_min < 2) throw Error(ErrorKind::Config, "len_min must be >= 2");
    if (len_max < len_min) throw Error(ErrorKind::Config, "len_max must be >= len_min");
    if (train_size <= 0 || valid_size <= 0 || test_size <= 0) {
      throw Error(ErrorKind::Config, "split sizes must be positive");
    }
    if (num_modes < 1 || num_modes > kNumOrderingModes) throw Error(ErrorKind::Config, "num_modes must be in [1,5]");
    if (static_cast<int>(mode_probs.size()) != num_modes) {
      throw Error(ErrorKind::Config, "mode_probs must have num_modes entries");
    }
    double total = 0.0;
    for (double p : mode_probs) {
      if (!(p >= 0.0)) throw Error(ErrorKind::Config, "mode probabilities must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw Error(ErrorKind::Config, "mode probabilities sum to " + std::to_string(total) + ", not 1");
    }
  }
};

struct SynthExample {
  Sequence source;
  Sequence target;
  OrderingMode mode = OrderingMode::Direct;
};

struct SynthDataset {
  std::vector<SynthExample> train, valid, test;
};

// Deduplicated renderings of `source` under every configured mode, in mode order.
inline std::vector<Sequence> reference_set(std::span<const int> source, const SynthConfig& cfg) {
  std::vector<Sequence> refs;
  for (int m = 0; m < cfg.num_modes; ++m) {
    Sequence r = render_mode(source, kAllModes[m]);
    if (std::find(refs.begin(), refs.end(), r) == refs.end()) refs.push_back(std::move(r));
  }
  return refs;
}

namespace detail {

inline std::vector<SynthExample> generate_split(const SynthConfig& cfg, int count, std::string_view name) {
  auto rng = substream(cfg.seed, std::string("data.") + std::string(name));
  std::uniform_int_distribution<int> length(cfg.len_min, cfg.len_max);
  std::uniform_int_distribution<int> token(0, cfg.vocab_size - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<SynthExample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SynthExample ex;
    ex.source.resize(static_cast<std::size_t>(length(rng)));
    for (int& t : ex.source) t = token(rng);
    const double u = unit(rng);
    double acc = 0.0;
    int m = cfg.num_modes - 1;
    for (int k = 0; k < cfg.num_modes; ++k) {
      acc += cfg.mode_probs[k];
      if (u < acc) {
        m = k;
        break;
      }
    }
    ex.mode = kAllModes[m];
    ex.target = render_mode(ex.source, ex.mode);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace detail

inline SynthDataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  return {detail::generate_split(cfg, cfg.train_size, "train"), detail::generate_split(cfg, cfg.valid_size, "valid"),
          detail::generate_split(cfg, cfg.test_size, "test")};
}

// One example per line: "src tokens<TAB>tgt tokens".
inline std::string format_example(const SynthExample& ex) {
  std::string line;
  auto append = [&line](std::span<const int> seq) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i) line += ' ';
      line += std::to_string(seq[i]);
    }
  };
  append(ex.source);
  line += '\t';
  append(ex.target);
  line += '\n';
  return line;
}

inline std::string format_split(std::span<const SynthExample> split) {
  std::string text;
  for (const auto& ex : split) text += format_example(ex);
  return text;
}

inline Sequence parse_tokens(std::string_view text) {
  Sequence out;
  std::istringstream in{std::string(text)};
  long long v = 0;
  while (in >> v) out.push_back(static_cast<int>(v));
  if (!in.eof()) throw Error(ErrorKind::Io, "malformed token list: '" + std::string(text) + "'");
  return out;
}

// The mode is not stored on disk; loaded examples report Direct.
inline std::vector<SynthExample> parse_split(std::string_view text) {
  std::vector<SynthExample> out;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw Error(ErrorKind::Io, "dataset line " + std::to_string(line_no) + " has no tab separator");
    }
    SynthExample ex;
    ex.source = parse_tokens(line.substr(0, tab));
    ex.target = parse_tokens(line.substr(tab + 1));
    if (ex.source.size() != ex.target.size() || ex.source.empty()) {
      throw Error(ErrorKind::Io, "dataset line " + std::to_string(line_no) + " has mismatched lengths");
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace oaxe
