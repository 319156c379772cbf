#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "mvdiff/config.hpp"
#include "mvdiff/model.hpp"

namespace mvdiff {

// Checkpoint container: magic "MVDIT1", an embedded key=value config text
// block, a manifest of (name, dtype, shape) per tensor, then little-endian
// float32 payloads in manifest order. Parameters live on the float32
// lattice, so save -> load -> forward is bit-exact.

namespace detail {

inline void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16),
                        uint8_t(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in.good()) throw FormatError("checkpoint: truncated file");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

inline void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

inline std::string read_str(std::istream& in, uint32_t max_len = 1u << 24) {
  const uint32_t n = read_u32(in);
  if (n > max_len) throw FormatError("checkpoint: implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), std::streamsize(n));
  if (!in.good()) throw FormatError("checkpoint: truncated string");
  return s;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[6] = {'M', 'V', 'D', 'I', 'T', '1'};

inline KvConfig model_config_to_kv(const ModelConfig& cfg) {
  KvConfig kv;
  kv.set_int("model.depth", cfg.depth);
  kv.set_int("model.dim", cfg.dim);
  kv.set_int("model.heads", cfg.heads);
  kv.set_int("model.patch", cfg.patch);
  kv.set_int("model.latent_downsample", cfg.latent_downsample);
  kv.set_int("model.latent_channels", cfg.latent_channels);
  kv.set("model.variant", to_string(cfg.variant));
  kv.set_int("model.max_views", cfg.max_views);
  kv.set_int("model.siren_features", cfg.siren_features);
  kv.set_double("model.omega0", cfg.omega0);
  kv.set_int("model.n_train_tokens", cfg.n_train_tokens);
  return kv;
}

inline ModelConfig model_config_from_kv(const KvConfig& kv) {
  ModelConfig cfg;
  cfg.depth = int(kv.get_int("model.depth", cfg.depth));
  cfg.dim = int(kv.get_int("model.dim", cfg.dim));
  cfg.heads = int(kv.get_int("model.heads", cfg.heads));
  cfg.patch = int(kv.get_int("model.patch", cfg.patch));
  cfg.latent_downsample =
      int(kv.get_int("model.latent_downsample", cfg.latent_downsample));
  cfg.latent_channels =
      int(kv.get_int("model.latent_channels", cfg.latent_channels));
  cfg.variant = variant_from_string(
      kv.get_str("model.variant", to_string(cfg.variant)));
  cfg.max_views = int(kv.get_int("model.max_views", cfg.max_views));
  cfg.siren_features =
      int(kv.get_int("model.siren_features", cfg.siren_features));
  cfg.omega0 = kv.get_double("model.omega0", cfg.omega0);
  cfg.n_train_tokens = kv.get_int("model.n_train_tokens", 0);
  return cfg;
}

inline void checkpoint_save(MvDit& model, const std::filesystem::path& path,
                            const KvConfig& extra = {}) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "checkpoint: cannot open " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));

  KvConfig kv = model_config_to_kv(model.cfg);
  kv.merge(extra);
  detail::write_str(out, kv.serialize());

  const auto& entries = model.params().entries();
  detail::write_u32(out, uint32_t(entries.size()));
  for (const auto& e : entries) {
    detail::write_str(out, e.name);
    detail::write_str(out, "f32");
    detail::write_u32(out, uint32_t(e.tensor->shape.size()));
    for (int64_t d : e.tensor->shape) detail::write_u32(out, uint32_t(d));
  }
  std::vector<float> buf;
  for (const auto& e : entries) {
    buf.resize(e.tensor->data.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = float(e.tensor->data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              std::streamsize(buf.size() * sizeof(float)));
  }
  require(out.good(), "checkpoint: write failed for " + path.string());
}

inline std::unique_ptr<MvDit> checkpoint_load(
    const std::filesystem::path& path, KvConfig* config_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "checkpoint: cannot open " + path.string());
  char magic[6];
  in.read(magic, 6);
  if (!in.good() || std::memcmp(magic, "MVDIT", 5) != 0)
    throw FormatError("checkpoint: bad magic in " + path.string());
  if (magic[5] != '1')
    throw FormatError("checkpoint: unsupported version in " + path.string());

  const KvConfig kv = KvConfig::parse_string(detail::read_str(in));
  if (config_out) *config_out = kv;
  auto model = std::make_unique<MvDit>(model_config_from_kv(kv), /*seed=*/0);

  struct Entry {
    std::string name;
    std::vector<int64_t> shape;
  };
  const uint32_t n_tensors = detail::read_u32(in);
  if (n_tensors > (1u << 20))
    throw FormatError("checkpoint: implausible tensor count");
  std::vector<Entry> manifest(n_tensors);
  for (auto& e : manifest) {
    e.name = detail::read_str(in);
    const std::string dtype = detail::read_str(in);
    if (dtype != "f32")
      throw FormatError("checkpoint: unsupported dtype " + dtype);
    const uint32_t ndim = detail::read_u32(in);
    if (ndim > 8) throw FormatError("checkpoint: implausible rank");
    e.shape.resize(ndim);
    for (auto& d : e.shape) d = int64_t(detail::read_u32(in));
  }

  std::vector<float> buf;
  size_t filled = 0;
  for (const auto& e : manifest) {
    const int64_t numel = Tensor::numel_of(e.shape);
    buf.resize(size_t(numel));
    in.read(reinterpret_cast<char*>(buf.data()),
            std::streamsize(buf.size() * sizeof(float)));
    if (!in.good()) throw FormatError("checkpoint: truncated payload");
    Tensor* dst = model->params().find(e.name);
    if (!dst) continue;  // unknown tensors (optimizer state etc.) skipped
    require(dst->shape == e.shape,
            "checkpoint: shape mismatch for tensor " + e.name);
    for (size_t i = 0; i < buf.size(); ++i) dst->data[i] = double(buf[i]);
    ++filled;
  }
  require(filled == model->params().entries().size(),
          "checkpoint: missing tensors for this architecture");
  return model;
}

}  // namespace mvdiff
