#pragma once

// Binary checkpoint format (all integers u32 little-endian):
//
//   "OAXE-CKPT" | version | group* where
//   group  := record_count | record*
//   record := name_len | name bytes | rank | dims[rank] | f32 LE values, row-major
//
// Version 1 writes two groups: model ("config" followed by every trainable
// tensor), then optimizer state ("adam.step", "adam.m/<name>", "adam.v/<name>").

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "oaxe/error.hpp"
#include "oaxe/seqmodel.hpp"

namespace oaxe {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::string_view kCheckpointMagic = "OAXE-CKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct OptimizerState {
  Parameters<float> first_moment;
  Parameters<float> second_moment;
  std::int64_t step = 0;
};

struct Checkpoint {
  Parameters<float> params;
  OptimizerState optimizer;
};

struct TensorRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

inline void put_record(std::string& out, const TensorRecord& r) {
  put_u32(out, static_cast<std::uint32_t>(r.name.size()));
  out += r.name;
  put_u32(out, static_cast<std::uint32_t>(r.dims.size()));
  for (auto d : r.dims) put_u32(out, d);
  out.append(reinterpret_cast<const char*>(r.values.data()), r.values.size() * sizeof(float));
}

inline TensorRecord matrix_record(std::string name, const Mat<float>& m) {
  TensorRecord r{std::move(name), {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, {}};
  r.values.assign(m.data(), m.data() + m.size());
  return r;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  TensorRecord record() {
    TensorRecord r;
    r.name = std::string(take(u32()));
    const std::uint32_t rank = u32();
    if (rank > 8) throw Error(ErrorKind::Io, "checkpoint record '" + r.name + "' has implausible rank");
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      r.dims.push_back(u32());
      count *= r.dims.back();
    }
    const auto raw = take(count * sizeof(float));
    r.values.resize(count);
    std::memcpy(r.values.data(), raw.data(), raw.size());
    return r;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(ErrorKind::Io, "checkpoint truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline void fill_parameters(Parameters<float>& params, const std::string& prefix,
                            std::map<std::string, TensorRecord>& records) {
  for_each_tensor(params, [&](const std::string& name, Mat<float>& t) {
    auto it = records.find(prefix + name);
    if (it == records.end()) throw Error(ErrorKind::Compatibility, "checkpoint lacks tensor '" + prefix + name + "'");
    const auto& r = it->second;
    if (r.dims.size() != 2 || r.dims[0] != t.rows() || r.dims[1] != t.cols()) {
      throw Error(ErrorKind::Compatibility, "checkpoint tensor '" + prefix + name + "' has unexpected shape");
    }
    std::memcpy(t.data(), r.values.data(), r.values.size() * sizeof(float));
    records.erase(it);
  });
}

}  // namespace detail

inline OptimizerState fresh_optimizer_state(const Parameters<float>& params) {
  return {zeros_like(params), zeros_like(params), 0};
}

inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);

  const ModelConfig& c = ckpt.params.config;
  std::vector<TensorRecord> model;
  model.push_back({"config",
                   {7},
                   {static_cast<float>(c.vocab_size), static_cast<float>(c.embed_dim), static_cast<float>(c.ffn_dim),
                    static_cast<float>(c.enc_layers), static_cast<float>(c.dec_layers), static_cast<float>(c.heads),
                    static_cast<float>(c.max_len)}});
  for_each_tensor(ckpt.params,
                  [&](const std::string& name, const Mat<float>& t) { model.push_back(detail::matrix_record(name, t)); });

  std::vector<TensorRecord> optim;
  optim.push_back({"adam.step", {1}, {static_cast<float>(ckpt.optimizer.step)}});
  for_each_tensor(ckpt.optimizer.first_moment, [&](const std::string& name, const Mat<float>& t) {
    optim.push_back(detail::matrix_record("adam.m/" + name, t));
  });
  for_each_tensor(ckpt.optimizer.second_moment, [&](const std::string& name, const Mat<float>& t) {
    optim.push_back(detail::matrix_record("adam.v/" + name, t));
  });

  for (const auto* group : {&model, &optim}) {
    detail::put_u32(out, static_cast<std::uint32_t>(group->size()));
    for (const auto& r : *group) detail::put_record(out, r);
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw Error(ErrorKind::Io, "not a checkpoint (bad magic)");
  }
  detail::Reader in(bytes.substr(kCheckpointMagic.size()));
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::Compatibility, "unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::string, TensorRecord> model, optim;
  for (auto* group : {&model, &optim}) {
    const std::uint32_t count = in.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      TensorRecord r = in.record();
      group->emplace(r.name, std::move(r));
    }
  }
  if (!in.done()) throw Error(ErrorKind::Io, "trailing bytes after checkpoint");

  auto cfg_it = model.find("config");
  if (cfg_it == model.end() || cfg_it->second.values.size() != 7) {
    throw Error(ErrorKind::Compatibility, "checkpoint lacks a model config record");
  }
  const auto& v = cfg_it->second.values;
  ModelConfig config;
  config.vocab_size = static_cast<int>(v[0]);
  config.embed_dim = static_cast<int>(v[1]);
  config.ffn_dim = static_cast<int>(v[2]);
  config.enc_layers = static_cast<int>(v[3]);
  config.dec_layers = static_cast<int>(v[4]);
  config.heads = static_cast<int>(v[5]);
  config.max_len = static_cast<int>(v[6]);
  model.erase(cfg_it);

  Checkpoint ckpt;
  ckpt.params = init_parameters<float>(config);
  detail::fill_parameters(ckpt.params, "", model);
  if (!model.empty()) throw Error(ErrorKind::Compatibility, "unknown checkpoint tensor '" + model.begin()->first + "'");

  ckpt.optimizer = fresh_optimizer_state(ckpt.params);
  auto step_it = optim.find("adam.step");
  if (step_it == optim.end() || step_it->second.values.size() != 1) {
    throw Error(ErrorKind::Compatibility, "checkpoint lacks optimizer step");
  }
  ckpt.optimizer.step = static_cast<std::int64_t>(step_it->second.values[0]);
  optim.erase(step_it);
  detail::fill_parameters(ckpt.optimizer.first_moment, "adam.m/", optim);
  detail::fill_parameters(ckpt.optimizer.second_moment, "adam.v/", optim);
  if (!optim.empty()) throw Error(ErrorKind::Compatibility, "unknown optimizer record '" + optim.begin()->first + "'");
  return ckpt;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Writes to a sibling temporary and renames, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorKind::Io, "cannot rename " + tmp.string() + ": " + ec.message());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace oaxe
