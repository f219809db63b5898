#pragma once

// A small fully non-autoregressive encoder-decoder. The decoder sees only
// position encodings (every target slot is masked), so each output row is an
// independent distribution P(y_i | X) given the gold target length.
//
// Layers are pre-norm: x += Sublayer(LayerNorm(x)). All attention is
// single-head. Backpropagation is written out by hand.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "oaxe/error.hpp"
#include "oaxe/losses.hpp"

namespace oaxe {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using ColVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct ModelConfig {
  int vocab_size = 1000;
  int embed_dim = 64;
  int ffn_dim = 128;
  int enc_layers = 2;
  int dec_layers = 2;
  int heads = 1;
  int max_len = 128;
  std::uint64_t seed = 1;

  void validate() const {
    if (vocab_size <= 0 || embed_dim <= 0 || ffn_dim <= 0 || enc_layers <= 0 || dec_layers <= 0 || max_len <= 0) {
      throw Error(ErrorKind::Config, "model dimensions must all be positive");
    }
    if (heads != 1) throw Error(ErrorKind::Config, "only single-head attention is supported");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename S>
struct LayerNormParams {
  Mat<S> gain, bias;  // 1 x d
};

template <typename S>
struct AttentionParams {
  Mat<S> wq, wk, wv, wo;  // d x d
  Mat<S> bq, bk, bv, bo;  // 1 x d
};

template <typename S>
struct FeedForwardParams {
  Mat<S> w1, b1;  // d x f, 1 x f
  Mat<S> w2, b2;  // f x d, 1 x d
};

template <typename S>
struct EncoderLayerParams {
  LayerNormParams<S> norm1;
  AttentionParams<S> self_attn;
  LayerNormParams<S> norm2;
  FeedForwardParams<S> ffn;
};

template <typename S>
struct DecoderLayerParams {
  LayerNormParams<S> norm1;
  AttentionParams<S> self_attn;
  LayerNormParams<S> norm2;
  AttentionParams<S> cross_attn;
  LayerNormParams<S> norm3;
  FeedForwardParams<S> ffn;
};

template <typename S>
struct Parameters {
  ModelConfig config;
  Mat<S> embed;  // V x d
  std::vector<EncoderLayerParams<S>> encoder;
  LayerNormParams<S> encoder_norm;
  std::vector<DecoderLayerParams<S>> decoder;
  LayerNormParams<S> decoder_norm;
  Mat<S> out_w;  // d x V
  Mat<S> out_b;  // 1 x V
  Mat<S> positions;  // max_len x d fixed sinusoids, see position_block; not trainable
};

namespace detail {

template <typename LN, typename F>
void visit_norm(const std::string& prefix, LN& p, F& f) {
  f(prefix + ".gain", p.gain);
  f(prefix + ".bias", p.bias);
}

template <typename A, typename F>
void visit_attention(const std::string& prefix, A& p, F& f) {
  f(prefix + ".wq", p.wq);
  f(prefix + ".bq", p.bq);
  f(prefix + ".wk", p.wk);
  f(prefix + ".bk", p.bk);
  f(prefix + ".wv", p.wv);
  f(prefix + ".bv", p.bv);
  f(prefix + ".wo", p.wo);
  f(prefix + ".bo", p.bo);
}

template <typename FF, typename F>
void visit_ffn(const std::string& prefix, FF& p, F& f) {
  f(prefix + ".w1", p.w1);
  f(prefix + ".b1", p.b1);
  f(prefix + ".w2", p.w2);
  f(prefix + ".b2", p.b2);
}

}  // namespace detail

// Calls f(name, tensor) for every trainable tensor in a fixed order. Works on
// const and non-const parameter sets.
template <typename P, typename F>
void for_each_tensor(P& params, F&& f) {
  f(std::string("embed"), params.embed);
  for (std::size_t l = 0; l < params.encoder.size(); ++l) {
    const std::string p = "enc." + std::to_string(l);
    auto& layer = params.encoder[l];
    detail::visit_norm(p + ".norm1", layer.norm1, f);
    detail::visit_attention(p + ".self", layer.self_attn, f);
    detail::visit_norm(p + ".norm2", layer.norm2, f);
    detail::visit_ffn(p + ".ffn", layer.ffn, f);
  }
  detail::visit_norm("enc.norm", params.encoder_norm, f);
  for (std::size_t l = 0; l < params.decoder.size(); ++l) {
    const std::string p = "dec." + std::to_string(l);
    auto& layer = params.decoder[l];
    detail::visit_norm(p + ".norm1", layer.norm1, f);
    detail::visit_attention(p + ".self", layer.self_attn, f);
    detail::visit_norm(p + ".norm2", layer.norm2, f);
    detail::visit_attention(p + ".cross", layer.cross_attn, f);
    detail::visit_norm(p + ".norm3", layer.norm3, f);
    detail::visit_ffn(p + ".ffn", layer.ffn, f);
  }
  detail::visit_norm("dec.norm", params.decoder_norm, f);
  f(std::string("out.w"), params.out_w);
  f(std::string("out.b"), params.out_b);
}

// Applies f(name, a, b) pairwise over two parameter sets with the same layout.
template <typename P1, typename P2, typename F>
void for_each_tensor_pair(P1& a, P2& b, F&& f) {
  std::vector<decltype(&a.embed)> left;
  for_each_tensor(a, [&](const std::string&, auto& t) { left.push_back(&t); });
  std::size_t i = 0;
  for_each_tensor(b, [&](const std::string& name, auto& t) { f(name, *left[i++], t); });
}

template <typename S>
std::size_t parameter_count(const Parameters<S>& params) {
  std::size_t n = 0;
  for_each_tensor(params, [&](const std::string&, const Mat<S>& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

template <typename S>
Mat<S> sinusoid_table(int max_len, int dim) {
  Mat<S> table(max_len, dim);
  for (int pos = 0; pos < max_len; ++pos) {
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      const double angle = pos * rate;
      table(pos, i) = static_cast<S>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return table;
}

// Position rows for a sequence of length `len`. The first d - d/2 columns encode
// the offset from the start, the remaining d/2 the offset from the end, so
// every row also carries the sequence length.
template <typename S>
Mat<S> position_block(const Mat<S>& positions, int len) {
  const Eigen::Index d = positions.cols(), front = d - d / 2;
  Mat<S> block(len, d);
  for (int i = 0; i < len; ++i) {
    block.row(i).head(front) = positions.row(i).head(front);
    block.row(i).tail(d - front) = positions.row(len - 1 - i).tail(d - front);
  }
  return block;
}

namespace detail {

template <typename S>
LayerNormParams<S> make_norm(int d) {
  return {Mat<S>::Ones(1, d), Mat<S>::Zero(1, d)};
}

template <typename S, typename Rng>
Mat<S> uniform(Rng& rng, int rows, int cols, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
  return m;
}

template <typename S, typename Rng>
Mat<S> linear_weight(Rng& rng, int fan_in, int fan_out) {
  return uniform<S>(rng, fan_in, fan_out, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

template <typename S, typename Rng>
AttentionParams<S> make_attention(Rng& rng, int d) {
  AttentionParams<S> a;
  a.wq = linear_weight<S>(rng, d, d);
  a.wk = linear_weight<S>(rng, d, d);
  a.wv = linear_weight<S>(rng, d, d);
  a.wo = linear_weight<S>(rng, d, d);
  a.bq = a.bk = a.bv = a.bo = Mat<S>::Zero(1, d);
  return a;
}

template <typename S, typename Rng>
FeedForwardParams<S> make_ffn(Rng& rng, int d, int f) {
  return {linear_weight<S>(rng, d, f), Mat<S>::Zero(1, f), linear_weight<S>(rng, f, d), Mat<S>::Zero(1, d)};
}

}  // namespace detail

// Uniform(+-1/sqrt(fan_in)) for projections, zero biases, unit norm gains.
// Embedding rows are Uniform(+-1) so tokens and sinusoids have similar scale.
template <typename S>
Parameters<S> init_parameters(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const int d = config.embed_dim;
  Parameters<S> p;
  p.config = config;
  p.embed = detail::uniform<S>(rng, config.vocab_size, d, 1.0);
  for (int l = 0; l < config.enc_layers; ++l) {
    EncoderLayerParams<S> layer;
    layer.norm1 = detail::make_norm<S>(d);
    layer.self_attn = detail::make_attention<S>(rng, d);
    layer.norm2 = detail::make_norm<S>(d);
    layer.ffn = detail::make_ffn<S>(rng, d, config.ffn_dim);
    p.encoder.push_back(std::move(layer));
  }
  p.encoder_norm = detail::make_norm<S>(d);
  for (int l = 0; l < config.dec_layers; ++l) {
    DecoderLayerParams<S> layer;
    layer.norm1 = detail::make_norm<S>(d);
    layer.self_attn = detail::make_attention<S>(rng, d);
    layer.norm2 = detail::make_norm<S>(d);
    layer.cross_attn = detail::make_attention<S>(rng, d);
    layer.norm3 = detail::make_norm<S>(d);
    layer.ffn = detail::make_ffn<S>(rng, d, config.ffn_dim);
    p.decoder.push_back(std::move(layer));
  }
  p.decoder_norm = detail::make_norm<S>(d);
  p.out_w = detail::linear_weight<S>(rng, d, config.vocab_size);
  p.out_b = Mat<S>::Zero(1, config.vocab_size);
  p.positions = Mat<S>(config.max_len, d);
  p.positions.leftCols(d - d / 2) = sinusoid_table<S>(config.max_len, d - d / 2);
  p.positions.rightCols(d / 2) = sinusoid_table<S>(config.max_len, d / 2);
  return p;
}

template <typename S>
Parameters<S> zeros_like(const Parameters<S>& params) {
  Parameters<S> z = params;
  for_each_tensor(z, [](const std::string&, Mat<S>& t) { t.setZero(); });
  return z;
}

template <typename To, typename From>
Parameters<To> cast_parameters(const Parameters<From>& from) {
  Parameters<To> to = init_parameters<To>(from.config);
  for_each_tensor_pair(from, to, [](const std::string&, const Mat<From>& a, Mat<To>& b) { b = a.template cast<To>(); });
  to.positions = from.positions.template cast<To>();
  return to;
}

namespace detail {

inline constexpr double kLayerNormEps = 1e-5;

template <typename S>
struct LayerNormCache {
  Mat<S> normalized;
  ColVec<S> inv_std;
};

template <typename S>
Mat<S> layer_norm_forward(const LayerNormParams<S>& p, const Mat<S>& x, LayerNormCache<S>& cache) {
  const ColVec<S> mean = x.rowwise().mean();
  cache.normalized = x.colwise() - mean;
  const ColVec<S> var = cache.normalized.array().square().rowwise().mean();
  cache.inv_std = (var.array() + static_cast<S>(kLayerNormEps)).rsqrt();
  cache.normalized = cache.normalized.array().colwise() * cache.inv_std.array();
  Mat<S> y = cache.normalized.array().rowwise() * p.gain.row(0).array();
  y.rowwise() += p.bias.row(0);
  return y;
}

template <typename S>
Mat<S> layer_norm_backward(const LayerNormParams<S>& p, const LayerNormCache<S>& cache, const Mat<S>& dy,
                           LayerNormParams<S>& grad) {
  grad.gain.row(0) += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  grad.bias.row(0) += dy.colwise().sum();
  Mat<S> dxhat = dy.array().rowwise() * p.gain.row(0).array();
  const ColVec<S> mean_d = dxhat.rowwise().mean();
  const ColVec<S> mean_dx = (dxhat.array() * cache.normalized.array()).rowwise().mean();
  dxhat = dxhat.colwise() - mean_d;
  dxhat -= (cache.normalized.array().colwise() * mean_dx.array()).matrix();
  return dxhat.array().colwise() * cache.inv_std.array();
}

template <typename S>
void softmax_rows_inplace(Mat<S>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const S mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}

template <typename S>
struct AttentionCache {
  Mat<S> query_in, kv_in, q, k, v, probs, context;
};

template <typename S>
Mat<S> attention_forward(const AttentionParams<S>& p, const Mat<S>& query_in, const Mat<S>& kv_in,
                         AttentionCache<S>& c) {
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(p.wq.cols())));
  c.query_in = query_in;
  c.kv_in = kv_in;
  c.q.noalias() = query_in * p.wq;
  c.q.rowwise() += p.bq.row(0);
  c.k.noalias() = kv_in * p.wk;
  c.k.rowwise() += p.bk.row(0);
  c.v.noalias() = kv_in * p.wv;
  c.v.rowwise() += p.bv.row(0);
  c.probs.noalias() = c.q * c.k.transpose();
  c.probs *= scale;
  softmax_rows_inplace(c.probs);
  c.context.noalias() = c.probs * c.v;
  Mat<S> out = c.context * p.wo;
  out.rowwise() += p.bo.row(0);
  return out;
}

// Returns (d query_in, d kv_in).
template <typename S>
std::pair<Mat<S>, Mat<S>> attention_backward(const AttentionParams<S>& p, const AttentionCache<S>& c,
                                             const Mat<S>& dout, AttentionParams<S>& g) {
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(p.wq.cols())));
  g.wo.noalias() += c.context.transpose() * dout;
  g.bo.row(0) += dout.colwise().sum();
  const Mat<S> dcontext = dout * p.wo.transpose();
  Mat<S> dscores = dcontext * c.v.transpose();
  const Mat<S> dv = c.probs.transpose() * dcontext;
  const ColVec<S> row_dot = (dscores.array() * c.probs.array()).rowwise().sum();
  dscores = (c.probs.array() * (dscores.colwise() - row_dot).array()) * scale;
  const Mat<S> dq = dscores * c.k;
  const Mat<S> dk = dscores.transpose() * c.q;

  g.wq.noalias() += c.query_in.transpose() * dq;
  g.bq.row(0) += dq.colwise().sum();
  g.wk.noalias() += c.kv_in.transpose() * dk;
  g.bk.row(0) += dk.colwise().sum();
  g.wv.noalias() += c.kv_in.transpose() * dv;
  g.bv.row(0) += dv.colwise().sum();

  Mat<S> dquery = dq * p.wq.transpose();
  Mat<S> dkv = dk * p.wk.transpose();
  dkv.noalias() += dv * p.wv.transpose();
  return {std::move(dquery), std::move(dkv)};
}

template <typename S>
struct FeedForwardCache {
  Mat<S> input, hidden;
};

template <typename S>
Mat<S> ffn_forward(const FeedForwardParams<S>& p, const Mat<S>& x, FeedForwardCache<S>& c) {
  c.input = x;
  c.hidden.noalias() = x * p.w1;
  c.hidden.rowwise() += p.b1.row(0);
  c.hidden = c.hidden.cwiseMax(S(0));
  Mat<S> out = c.hidden * p.w2;
  out.rowwise() += p.b2.row(0);
  return out;
}

template <typename S>
Mat<S> ffn_backward(const FeedForwardParams<S>& p, const FeedForwardCache<S>& c, const Mat<S>& dout,
                    FeedForwardParams<S>& g) {
  g.w2.noalias() += c.hidden.transpose() * dout;
  g.b2.row(0) += dout.colwise().sum();
  Mat<S> dhidden = dout * p.w2.transpose();
  dhidden = (c.hidden.array() > S(0)).select(dhidden, S(0));
  g.w1.noalias() += c.input.transpose() * dhidden;
  g.b1.row(0) += dhidden.colwise().sum();
  return dhidden * p.w1.transpose();
}

template <typename S>
struct EncoderLayerCache {
  LayerNormCache<S> norm1, norm2;
  AttentionCache<S> self_attn;
  FeedForwardCache<S> ffn;
};

template <typename S>
struct DecoderLayerCache {
  LayerNormCache<S> norm1, norm2, norm3;
  AttentionCache<S> self_attn, cross_attn;
  FeedForwardCache<S> ffn;
};

}  // namespace detail

// Activations retained from a forward pass for backpropagation.
template <typename S>
struct ForwardTrace {
  std::vector<int> source;
  std::vector<detail::EncoderLayerCache<S>> encoder;
  detail::LayerNormCache<S> encoder_norm;
  Mat<S> memory;
  std::vector<detail::DecoderLayerCache<S>> decoder;
  detail::LayerNormCache<S> decoder_norm;
  Mat<S> hidden;
  LogProbMatrix<S> log_probs;
};

template <typename S>
void check_inputs(const ModelConfig& config, std::span<const int> source, int target_len) {
  if (source.empty() || static_cast<int>(source.size()) > config.max_len) {
    throw Error(ErrorKind::Length, "source length " + std::to_string(source.size()) + " outside [1, " +
                                       std::to_string(config.max_len) + "]");
  }
  if (target_len < 1 || target_len > config.max_len) {
    throw Error(ErrorKind::Length, "target length " + std::to_string(target_len) + " outside [1, " +
                                       std::to_string(config.max_len) + "]");
  }
  for (int tok : source) {
    if (tok < 0 || tok >= config.vocab_size) {
      throw Error(ErrorKind::Vocabulary, "source token " + std::to_string(tok) + " outside vocabulary");
    }
  }
}

template <typename S>
ForwardTrace<S> forward_trace(const Parameters<S>& params, std::span<const int> source, int target_len) {
  check_inputs<S>(params.config, source, target_len);
  ForwardTrace<S> t;
  t.source.assign(source.begin(), source.end());
  const auto src_len = static_cast<Eigen::Index>(source.size());

  Mat<S> x = position_block(params.positions, static_cast<int>(src_len));
  for (Eigen::Index i = 0; i < src_len; ++i) x.row(i) += params.embed.row(source[i]);
  t.encoder.resize(params.encoder.size());
  for (std::size_t l = 0; l < params.encoder.size(); ++l) {
    const auto& p = params.encoder[l];
    auto& c = t.encoder[l];
    const Mat<S> a = detail::layer_norm_forward(p.norm1, x, c.norm1);
    x += detail::attention_forward(p.self_attn, a, a, c.self_attn);
    const Mat<S> b = detail::layer_norm_forward(p.norm2, x, c.norm2);
    x += detail::ffn_forward(p.ffn, b, c.ffn);
  }
  t.memory = detail::layer_norm_forward(params.encoder_norm, x, t.encoder_norm);

  Mat<S> y = position_block(params.positions, target_len);
  t.decoder.resize(params.decoder.size());
  for (std::size_t l = 0; l < params.decoder.size(); ++l) {
    const auto& p = params.decoder[l];
    auto& c = t.decoder[l];
    const Mat<S> a = detail::layer_norm_forward(p.norm1, y, c.norm1);
    y += detail::attention_forward(p.self_attn, a, a, c.self_attn);
    const Mat<S> b = detail::layer_norm_forward(p.norm2, y, c.norm2);
    y += detail::attention_forward(p.cross_attn, b, t.memory, c.cross_attn);
    const Mat<S> e = detail::layer_norm_forward(p.norm3, y, c.norm3);
    y += detail::ffn_forward(p.ffn, e, c.ffn);
  }
  t.hidden = detail::layer_norm_forward(params.decoder_norm, y, t.decoder_norm);

  t.log_probs.noalias() = t.hidden * params.out_w;
  t.log_probs.rowwise() += params.out_b.row(0);
  for (Eigen::Index r = 0; r < t.log_probs.rows(); ++r) {
    auto row = t.log_probs.row(r);
    const S mx = row.maxCoeff();
    const S lse = mx + std::log((row.array() - mx).exp().sum());
    row.array() -= lse;
  }
  return t;
}

template <typename S>
LogProbMatrix<S> forward(const Parameters<S>& params, std::span<const int> source, int target_len) {
  return forward_trace(params, source, target_len).log_probs;
}

// Adds weight * d(loss)/d(params) to `grads`, where `upstream` is d(loss)/d(log_probs).
template <typename S>
void accumulate_gradients(const Parameters<S>& params, const ForwardTrace<S>& t, const LogProbMatrix<S>& upstream,
                          Parameters<S>& grads, S weight = S(1)) {
  if (upstream.rows() != t.log_probs.rows() || upstream.cols() != t.log_probs.cols()) {
    throw Error(ErrorKind::Shape, "upstream gradient shape does not match forward output");
  }
  // log-softmax Jacobian: dz = g - softmax * rowsum(g)
  const ColVec<S> row_sums = upstream.rowwise().sum() * weight;
  Mat<S> dlogits = upstream * weight;
  dlogits -= (t.log_probs.array().exp().colwise() * row_sums.array()).matrix();

  grads.out_w.noalias() += t.hidden.transpose() * dlogits;
  grads.out_b.row(0) += dlogits.colwise().sum();
  Mat<S> dy = dlogits * params.out_w.transpose();
  dy = detail::layer_norm_backward(params.decoder_norm, t.decoder_norm, dy, grads.decoder_norm);

  Mat<S> dmemory = Mat<S>::Zero(t.memory.rows(), t.memory.cols());
  for (std::size_t l = params.decoder.size(); l-- > 0;) {
    const auto& p = params.decoder[l];
    const auto& c = t.decoder[l];
    auto& g = grads.decoder[l];
    const Mat<S> dffn_in = detail::ffn_backward(p.ffn, c.ffn, dy, g.ffn);
    dy += detail::layer_norm_backward(p.norm3, c.norm3, dffn_in, g.norm3);
    auto [dcross_q, dcross_kv] = detail::attention_backward(p.cross_attn, c.cross_attn, dy, g.cross_attn);
    dmemory += dcross_kv;
    dy += detail::layer_norm_backward(p.norm2, c.norm2, dcross_q, g.norm2);
    auto [dself_q, dself_kv] = detail::attention_backward(p.self_attn, c.self_attn, dy, g.self_attn);
    dself_q += dself_kv;
    dy += detail::layer_norm_backward(p.norm1, c.norm1, dself_q, g.norm1);
  }

  Mat<S> dx = detail::layer_norm_backward(params.encoder_norm, t.encoder_norm, dmemory, grads.encoder_norm);
  for (std::size_t l = params.encoder.size(); l-- > 0;) {
    const auto& p = params.encoder[l];
    const auto& c = t.encoder[l];
    auto& g = grads.encoder[l];
    const Mat<S> dffn_in = detail::ffn_backward(p.ffn, c.ffn, dx, g.ffn);
    dx += detail::layer_norm_backward(p.norm2, c.norm2, dffn_in, g.norm2);
    auto [dq, dkv] = detail::attention_backward(p.self_attn, c.self_attn, dx, g.self_attn);
    dq += dkv;
    dx += detail::layer_norm_backward(p.norm1, c.norm1, dq, g.norm1);
  }
  for (std::size_t i = 0; i < t.source.size(); ++i) grads.embed.row(t.source[i]) += dx.row(i);
}

struct Batch {
  std::vector<std::vector<int>> sources;
  std::vector<std::vector<int>> targets;

  std::size_t size() const { return sources.size(); }
};

// Gradient of the batch loss, defined as the mean of the per-example losses
// whose log-prob gradients are given in `upstream`.
template <typename S>
Parameters<S> backward(const Parameters<S>& params, const Batch& batch, std::span<const LogProbMatrix<S>> upstream) {
  if (batch.size() == 0) throw Error(ErrorKind::Shape, "empty batch");
  if (upstream.size() != batch.size() || batch.targets.size() != batch.size()) {
    throw Error(ErrorKind::Shape, "one upstream gradient per example is required");
  }
  Parameters<S> grads = zeros_like(params);
  const S weight = static_cast<S>(1.0 / static_cast<double>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto trace = forward_trace(params, batch.sources[i], static_cast<int>(batch.targets[i].size()));
    accumulate_gradients(params, trace, upstream[i], grads, weight);
  }
  return grads;
}

// Row-wise argmax; ties go to the lowest token id.
template <typename S>
std::vector<int> argmax_rows(const LogProbMatrix<S>& log_probs) {
  std::vector<int> out(static_cast<std::size_t>(log_probs.rows()));
  for (Eigen::Index r = 0; r < log_probs.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < log_probs.cols(); ++c) {
      if (log_probs(r, c) > log_probs(r, best)) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

template <typename S>
std::vector<int> decode(const Parameters<S>& params, std::span<const int> source, int target_len) {
  return argmax_rows(forward(params, source, target_len));
}

}  // namespace oaxe
