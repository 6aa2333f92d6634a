// checkpoint.hpp -- versioned binary container for model parameters and
// optional optimizer state.
//
// Layout (all integers little-endian):
//   magic   8 bytes  "VMICCKPT"
//   version u32      1
//   meta    u64 byte length + UTF-8 JSON (includes "hyper", epoch, step, ...)
//   count   u32      number of tensors
//   tensor: u32 name length + name
//           u32 dtype length + dtype ("f32")
//           u32 ndim, then ndim u64 dims
//           payload  prod(dims) * 4 bytes
// Optimizer moments are stored as extra tensors named "adam_m.*" / "adam_v.*".
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vmic/common.hpp"
#include "vmic/net.hpp"

namespace vmic {

template <class Real>
struct AdamState;  // defined in train.hpp

inline nlohmann::json hyper_to_json(const VmeHyperparams& h) {
  return nlohmann::json{{"encoder_filters", h.encoder_filters},
                        {"encoder_kernel", h.encoder_kernel},
                        {"bottleneck_channels", h.bottleneck_channels},
                        {"hidden_channels", h.hidden_channels},
                        {"block_kernel", h.block_kernel},
                        {"blocks_per_repeat", h.blocks_per_repeat},
                        {"repeats", h.repeats},
                        {"in_channels", h.in_channels},
                        {"out_channels", h.out_channels}};
}

inline VmeHyperparams hyper_from_json(const nlohmann::json& j) {
  VmeHyperparams h;
  h.encoder_filters = j.at("encoder_filters").get<int>();
  h.encoder_kernel = j.at("encoder_kernel").get<int>();
  h.bottleneck_channels = j.at("bottleneck_channels").get<int>();
  h.hidden_channels = j.at("hidden_channels").get<int>();
  h.block_kernel = j.at("block_kernel").get<int>();
  h.blocks_per_repeat = j.at("blocks_per_repeat").get<int>();
  h.repeats = j.at("repeats").get<int>();
  h.in_channels = j.at("in_channels").get<int>();
  h.out_channels = j.at("out_channels").get<int>();
  h.validate();
  return h;
}

namespace detail {

// True tensor shape for a parameter name, derived from the hyperparams.
inline std::vector<std::uint64_t> tensor_shape(const std::string& name, const VmeHyperparams& h) {
  const std::string fam = tensor_family(name);
  const auto u = [](int v) { return static_cast<std::uint64_t>(v); };
  if (fam == "encoder") return {u(h.encoder_filters), u(h.in_channels), u(h.encoder_kernel)};
  if (fam == "bottleneck") return {u(h.bottleneck_channels), u(h.encoder_filters)};
  if (fam == "conv_in") return {u(h.hidden_channels), u(h.bottleneck_channels)};
  if (fam == "dconv") return {u(h.hidden_channels), u(h.block_kernel)};
  if (fam == "conv_out") return {u(h.bottleneck_channels), u(h.hidden_channels)};
  if (fam == "prelu1" || fam == "prelu2") return {1};
  if (fam == "norm1_gain" || fam == "norm1_bias" || fam == "norm2_gain" || fam == "norm2_bias")
    return {u(h.hidden_channels)};
  if (fam == "inverse") return {u(h.encoder_filters), u(h.bottleneck_channels)};
  if (fam == "decoder") return {u(h.encoder_filters), u(h.out_channels), u(h.encoder_kernel)};
  throw std::runtime_error("checkpoint: unknown tensor family for " + name);
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}
inline std::uint32_t get_u32(const unsigned char*& p, const unsigned char* end) {
  require_state(p + 4 <= end, "checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  p += 4;
  return v;
}
inline std::uint64_t get_u64(const unsigned char*& p, const unsigned char* end) {
  require_state(p + 8 <= end, "checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  p += 8;
  return v;
}

inline void put_tensor(std::vector<unsigned char>& out, const std::string& name,
                       const std::vector<std::uint64_t>& shape, const std::vector<float>& data) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  const std::string dtype = "f32";
  put_u32(out, static_cast<std::uint32_t>(dtype.size()));
  out.insert(out.end(), dtype.begin(), dtype.end());
  put_u32(out, static_cast<std::uint32_t>(shape.size()));
  std::uint64_t n = 1;
  for (std::uint64_t d : shape) {
    put_u64(out, d);
    n *= d;
  }
  require_state(n == data.size(), "checkpoint: shape does not match data for " + name);
  for (float f : data) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

}  // namespace detail

struct Checkpoint {
  VmeParams<float> params;
  VmeParams<float> adam_m, adam_v;
  bool has_optimizer = false;
  nlohmann::json meta;
};

template <class AdamT>
void save_checkpoint(const std::filesystem::path& path, const VmeParams<float>& params,
                     nlohmann::json meta, const AdamT* adam) {
  meta["format"] = "vmic-checkpoint";
  meta["hyper"] = hyper_to_json(params.hyper);
  meta["has_optimizer"] = adam != nullptr;
  const std::string meta_str = meta.dump();

  std::vector<unsigned char> out;
  const char magic[8] = {'V', 'M', 'I', 'C', 'C', 'K', 'P', 'T'};
  out.insert(out.end(), magic, magic + 8);
  detail::put_u32(out, 1);
  detail::put_u64(out, meta_str.size());
  out.insert(out.end(), meta_str.begin(), meta_str.end());

  auto refs = tensor_refs(const_cast<VmeParams<float>&>(params));
  std::uint32_t count = static_cast<std::uint32_t>(refs.size());
  if (adam) count += 2 * static_cast<std::uint32_t>(refs.size());
  detail::put_u32(out, count);
  for (const auto& r : refs)
    detail::put_tensor(out, r.name, detail::tensor_shape(r.name, params.hyper), *r.data);
  if (adam) {
    auto m_refs = tensor_refs(const_cast<VmeParams<float>&>(adam->first_moment));
    auto v_refs = tensor_refs(const_cast<VmeParams<float>&>(adam->second_moment));
    for (const auto& r : m_refs)
      detail::put_tensor(out, "adam_m." + r.name, detail::tensor_shape(r.name, params.hyper), *r.data);
    for (const auto& r : v_refs)
      detail::put_tensor(out, "adam_v." + r.name, detail::tensor_shape(r.name, params.hyper), *r.data);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require_state(f.good(), "checkpoint: cannot open " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  require_state(f.good(), "checkpoint: short write to " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require_state(in.good(), "checkpoint: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const unsigned char* p = bytes.data();
  const unsigned char* end = p + bytes.size();
  require_state(bytes.size() >= 12 && std::memcmp(p, "VMICCKPT", 8) == 0,
                "checkpoint: bad magic in " + path.string());
  p += 8;
  const std::uint32_t version = detail::get_u32(p, end);
  require_state(version == 1, "checkpoint: unsupported version " + std::to_string(version));
  const std::uint64_t meta_len = detail::get_u64(p, end);
  require_state(p + meta_len <= end, "checkpoint: truncated metadata");
  Checkpoint ck;
  ck.meta = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(p), meta_len));
  p += meta_len;

  const VmeHyperparams hyper = hyper_from_json(ck.meta.at("hyper"));
  ck.params = make_zero_params<float>(hyper);
  ck.has_optimizer = ck.meta.value("has_optimizer", false);
  if (ck.has_optimizer) {
    ck.adam_m = make_zero_params<float>(hyper);
    ck.adam_v = make_zero_params<float>(hyper);
  }

  auto find_dst = [&](const std::string& name) -> std::vector<float>* {
    std::string base = name;
    VmeParams<float>* owner = &ck.params;
    if (name.rfind("adam_m.", 0) == 0) {
      require_state(ck.has_optimizer, "checkpoint: unexpected optimizer tensor " + name);
      base = name.substr(7);
      owner = &ck.adam_m;
    } else if (name.rfind("adam_v.", 0) == 0) {
      require_state(ck.has_optimizer, "checkpoint: unexpected optimizer tensor " + name);
      base = name.substr(7);
      owner = &ck.adam_v;
    }
    for (auto& r : tensor_refs(*owner))
      if (r.name == base) return r.data;
    return nullptr;
  };

  const std::uint32_t count = detail::get_u32(p, end);
  std::size_t loaded = 0;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = detail::get_u32(p, end);
    require_state(p + name_len <= end, "checkpoint: truncated tensor name");
    const std::string name(reinterpret_cast<const char*>(p), name_len);
    p += name_len;
    const std::uint32_t dtype_len = detail::get_u32(p, end);
    require_state(p + dtype_len <= end, "checkpoint: truncated dtype");
    const std::string dtype(reinterpret_cast<const char*>(p), dtype_len);
    p += dtype_len;
    require_state(dtype == "f32", "checkpoint: unsupported dtype '" + dtype + "' for " + name);
    const std::uint32_t ndim = detail::get_u32(p, end);
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) n *= detail::get_u64(p, end);
    require_state(p + n * 4 <= end, "checkpoint: truncated payload for " + name);
    std::vector<float>* dst = find_dst(name);
    require_state(dst != nullptr, "checkpoint: unknown tensor " + name);
    require_state(dst->size() == n, "checkpoint: size mismatch for " + name);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint32_t raw = 0;
      for (int b = 0; b < 4; ++b) raw |= static_cast<std::uint32_t>(p[i * 4 + b]) << (8 * b);
      (*dst)[i] = std::bit_cast<float>(raw);
    }
    p += n * 4;
    ++loaded;
  }
  const std::size_t expected =
      tensor_refs(ck.params).size() * (ck.has_optimizer ? 3 : 1);
  require_state(loaded == expected, "checkpoint: tensor count mismatch in " + path.string());
  return ck;
}

}  // namespace vmic
