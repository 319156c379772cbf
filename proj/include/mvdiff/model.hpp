#pragma once

#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mvdiff/anchor.hpp"
#include "mvdiff/attention.hpp"
#include "mvdiff/autodiff.hpp"
#include "mvdiff/camera.hpp"
#include "mvdiff/codec.hpp"
#include "mvdiff/nn.hpp"
#include "mvdiff/plucker.hpp"
#include "mvdiff/posenc.hpp"
#include "mvdiff/siren.hpp"

namespace mvdiff {

enum class TrainMode { midtrain, posttrain };

// Conditioning wiring. The *_controlmlp/anchor variants run in posttrain
// mode; camera_mlp and cross_attn in midtrain mode. no_anchor is the
// ablation-table alias of plucker_siren_controlmlp.
enum class ControlVariant {
  camera_mlp,
  plucker_pe,
  plucker_controlmlp,
  plucker_siren_controlmlp,
  anchor_full,
  no_anchor,
  no_plucker,
  cross_attn,
};

inline const char* to_string(ControlVariant v) {
  switch (v) {
    case ControlVariant::camera_mlp: return "camera_mlp";
    case ControlVariant::plucker_pe: return "plucker_pe";
    case ControlVariant::plucker_controlmlp: return "plucker_controlmlp";
    case ControlVariant::plucker_siren_controlmlp:
      return "plucker_siren_controlmlp";
    case ControlVariant::anchor_full: return "anchor_full";
    case ControlVariant::no_anchor: return "no_anchor";
    case ControlVariant::no_plucker: return "no_plucker";
    case ControlVariant::cross_attn: return "cross_attn";
  }
  return "?";
}

inline ControlVariant variant_from_string(const std::string& s) {
  for (ControlVariant v :
       {ControlVariant::camera_mlp, ControlVariant::plucker_pe,
        ControlVariant::plucker_controlmlp,
        ControlVariant::plucker_siren_controlmlp, ControlVariant::anchor_full,
        ControlVariant::no_anchor, ControlVariant::no_plucker,
        ControlVariant::cross_attn})
    if (s == to_string(v)) return v;
  throw Error("unknown control variant: " + s);
}

inline TrainMode mode_for_variant(ControlVariant v) {
  return (v == ControlVariant::camera_mlp || v == ControlVariant::cross_attn)
             ? TrainMode::midtrain
             : TrainMode::posttrain;
}

struct ModelConfig {
  int depth = 6;
  int dim = 128;
  int heads = 4;
  int patch = 2;
  int latent_downsample = 2;
  int latent_channels = 3;
  ControlVariant variant = ControlVariant::camera_mlp;
  int max_views = 64;
  int siren_features = 32;
  double omega0 = 30.0;
  int64_t n_train_tokens = 0;  // recorded by the trainer; 0 = unset

  TrainMode mode() const { return mode_for_variant(variant); }
  int head_dim() const { return dim / heads; }
  int raw_patch_dim() const { return latent_channels * patch * patch; }
  double default_lambda() const { return std::sqrt(1.0 / double(head_dim())); }

  void validate() const {
    require(depth >= 1, "model: depth must be >= 1");
    require(dim >= 4 && dim % heads == 0, "model: dim not divisible by heads");
    require(dim % 4 == 0, "model: dim must be divisible by 4");
    require(patch >= 1, "model: patch must be >= 1");
    require(latent_downsample == 1 || latent_downsample == 2 ||
                latent_downsample == 4 || latent_downsample == 8,
            "model: latent_downsample must be one of {1,2,4,8}");
  }

  bool uses_plucker() const {
    return variant == ControlVariant::plucker_pe ||
           variant == ControlVariant::plucker_controlmlp ||
           variant == ControlVariant::plucker_siren_controlmlp ||
           variant == ControlVariant::no_anchor ||
           variant == ControlVariant::anchor_full;
  }
  bool uses_siren() const {
    return variant == ControlVariant::plucker_siren_controlmlp ||
           variant == ControlVariant::no_anchor ||
           variant == ControlVariant::anchor_full;
  }
  bool uses_anchor() const {
    return variant == ControlVariant::anchor_full ||
           variant == ControlVariant::no_plucker;
  }
  bool uses_controlmlp() const {
    return variant == ControlVariant::plucker_controlmlp ||
           variant == ControlVariant::plucker_siren_controlmlp ||
           variant == ControlVariant::no_anchor ||
           variant == ControlVariant::anchor_full ||
           variant == ControlVariant::no_plucker;
  }

  // per-token input width of the ControlMLP trunk
  int64_t control_in_dim() const {
    int64_t ch = 0;
    if (uses_plucker()) ch += uses_siren() ? siren_features : 6;
    if (uses_anchor()) ch += latent_channels;
    return ch * patch * patch;
  }
};

enum class Role { target = 0, reference = 1, face = 2, global_tok = 3 };

struct TokenSegment {
  int view = -1;  // -1 for conditioning tokens
  Role role = Role::target;
};

// Metadata of one assembled token sequence: per-token (view, role) and the
// mask of loss-carrying tokens. Target tokens are contiguous at the end.
struct ViewTokenBatch {
  std::vector<TokenSegment> segments;
  int64_t tokens_per_view = 0;
  int64_t n_cond_tokens = 0;

  int64_t n_tokens() const { return int64_t(segments.size()); }
  std::vector<uint8_t> loss_mask() const {
    std::vector<uint8_t> m(segments.size(), 0);
    for (size_t i = 0; i < segments.size(); ++i)
      m[i] = segments[i].role == Role::target ? 1 : 0;
    return m;
  }
};

// Per-view conditioning; which fields are read depends on the variant.
// view_id selects the learned view offset (slot index when negative).
struct ViewConditioning {
  CameraParams cam;
  int view_id = -1;
  PluckerGrid plucker;   // full image resolution
  Tensor anchor_latent;  // {h, w, C}, codec-encoded anchor image
};

struct ForwardInputs {
  std::vector<Tensor> noisy_targets;  // per view {h, w, C}
  std::vector<ViewConditioning> views;
  std::optional<Tensor> ref_latent;        // {h, w, C}
  std::optional<Tensor> face_latent;       // {h, w, C}
  std::optional<Tensor> global_embedding;  // {1, dim}
  int t = 0;
  double lambda = 0.0;           // <= 0 selects 1/sqrt(head_dim)
  bool uncond = false;           // null-embed the reference conditioning
  bool disable_control = false;  // bypass the ControlMLP pathway entirely
};

struct ForwardResult {
  std::vector<ad::NodePtr> eps_views;  // per view, {h*w, C}
  ViewTokenBatch batch;
};

// Streams per-row attention entropies out of selected blocks during a
// forward pass; aggregation over heads, rows, passes and steps is a running
// mean with a deterministic accumulation order.
struct EntropyRecorder {
  std::vector<int> block_indices;

  struct Acc {
    double sum = 0.0;
    int64_t rows = 0;
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();
  };
  std::map<int, Acc> per_block;

  bool wants(int block) const {
    for (int b : block_indices)
      if (b == block) return true;
    return false;
  }

  void record(int block, const Tensor& A) {
    Acc& acc = per_block[block];
    const int64_t n = A.rows(), m = A.cols();
    for (int64_t i = 0; i < n; ++i) {
      double ent = 0;
      for (int64_t j = 0; j < m; ++j) {
        const double a = A.at(i, j);
        if (a > 0) ent -= a * std::log(a);
      }
      acc.sum += ent;
      acc.min = std::min(acc.min, ent);
      acc.max = std::max(acc.max, ent);
      ++acc.rows;
    }
  }

  double mean() const {
    double s = 0;
    int64_t r = 0;
    for (const auto& [_, acc] : per_block) {
      s += acc.sum;
      r += acc.rows;
    }
    require(r > 0, "entropy recorder: nothing recorded");
    return s / double(r);
  }

  static std::vector<int> first_middle_last(int depth) {
    if (depth == 1) return {0};
    if (depth == 2) return {0, 1};
    return {0, depth / 2, depth - 1};
  }
};

// Counts which conditioning inputs a forward pass actually consumed; the
// mode-exclusivity contract is asserted against these.
struct AccessStats {
  int64_t camera_token_reads = 0;
  int64_t plucker_reads = 0;
  int64_t anchor_reads = 0;
};

namespace detail {

struct DitBlock {
  Linear qkv, proj;
  Linear mlp_in, mlp_out;
  Linear adaln;  // zero-init: {scale, shift, gate_attn, gate_mlp}
  // cross-attention read of the reference tokens (cross_attn variant only)
  Linear xattn_q, xattn_kv, xattn_proj, xattn_gate;
  bool has_xattn = false;

  DitBlock() = default;
  DitBlock(int64_t dim, bool with_xattn, Rng& rng)
      : qkv(dim, 3 * dim, rng),
        proj(dim, dim, rng),
        mlp_in(dim, 4 * dim, rng),
        mlp_out(4 * dim, dim, rng),
        adaln(Linear::zeros(dim, 4 * dim)),
        has_xattn(with_xattn) {
    if (with_xattn) {
      xattn_q = Linear(dim, dim, rng);
      xattn_kv = Linear(dim, 2 * dim, rng);
      xattn_proj = Linear(dim, dim, rng);
      xattn_gate = Linear::zeros(dim, dim);
    }
  }

  void register_params(ParamRegistry& reg, const std::string& prefix) {
    qkv.register_params(reg, prefix + ".qkv");
    proj.register_params(reg, prefix + ".proj");
    mlp_in.register_params(reg, prefix + ".mlp_in");
    mlp_out.register_params(reg, prefix + ".mlp_out");
    adaln.register_params(reg, prefix + ".adaln");
    if (has_xattn) {
      xattn_q.register_params(reg, prefix + ".xattn_q");
      xattn_kv.register_params(reg, prefix + ".xattn_kv");
      xattn_proj.register_params(reg, prefix + ".xattn_proj");
      xattn_gate.register_params(reg, prefix + ".xattn_gate");
    }
  }
};

// ControlMLP: one trunk shared across blocks, one zero-initialized
// (scale, shift) head per DiT block; the timestep embedding joins after the
// first trunk layer. Fresh heads emit an exactly-zero signal.
struct ControlMlp {
  Linear fc_in, t_proj, fc_mid;
  std::vector<Linear> block_heads;

  ControlMlp() = default;
  ControlMlp(int64_t in_dim, int64_t hidden, int64_t dim, int depth, Rng& rng)
      : fc_in(in_dim, hidden, rng),
        t_proj(dim, hidden, rng),
        fc_mid(hidden, hidden, rng) {
    for (int i = 0; i < depth; ++i)
      block_heads.push_back(Linear::zeros(hidden, 2 * dim));
  }

  void register_params(ParamRegistry& reg, const std::string& prefix) {
    fc_in.register_params(reg, prefix + ".fc_in");
    t_proj.register_params(reg, prefix + ".t_proj");
    fc_mid.register_params(reg, prefix + ".fc_mid");
    for (size_t i = 0; i < block_heads.size(); ++i)
      block_heads[i].register_params(reg, prefix + ".head" + std::to_string(i));
  }
};

}  // namespace detail

// Pre-training-style global conditioning slot: channel mean pool over the
// latent followed by a linear projection.
struct ToyGlobalEncoder {
  Linear proj;

  ToyGlobalEncoder() = default;
  ToyGlobalEncoder(int64_t channels, int64_t dim, Rng& rng)
      : proj(channels, dim, rng) {}

  void register_params(ParamRegistry& reg, const std::string& prefix) {
    proj.register_params(reg, prefix + ".proj");
  }

  Tensor encode(const Tensor& latent_hwc) {
    require(latent_hwc.shape.size() == 3, "global encoder: expected {h,w,C}");
    const int64_t C = latent_hwc.shape[2];
    const int64_t n = latent_hwc.numel() / C;
    Tensor pooled({1, C});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t c = 0; c < C; ++c)
        pooled.data[size_t(c)] += latent_hwc.data[size_t(i * C + c)];
    for (double& v : pooled.data) v /= double(n);
    ad::Graph g(false);
    return proj.fwd(g, g.constant(pooled))->val;
  }
};

// The multiview diffusion transformer. Latents enter as {h, w, C}, are
// patchified and linearly embedded, conditioned per the variant (camera
// token, Plücker positional encoding, or ControlMLP from SIREN features and
// the anchor latent), passed through parallel-attention DiT blocks with
// AdaLN timestep modulation, and projected back to per-view epsilon
// predictions by a zero-initialized linear head. Reference and face latents
// join the sequence as loss-free tokens under joint self-attention.
class MvDit {
 public:
  ModelConfig cfg;
  AccessStats stats;

  MvDit(const ModelConfig& config, uint64_t seed) : cfg(config) {
    cfg.validate();
    Rng rng(mix_seed(seed, 0x6d766469ull));
    patch_embed_ = Linear(cfg.raw_patch_dim(), cfg.dim, rng);
    head_ = Linear::zeros(cfg.dim, cfg.raw_patch_dim());
    t_mlp_ = Mlp2(cfg.dim, cfg.dim, cfg.dim, rng);
    view_offset_ = Tensor({cfg.max_views, cfg.dim});
    role_emb_ = Tensor({4, cfg.dim});
    null_emb_ = Tensor::randn({1, cfg.dim}, rng);
    for (double& v : null_emb_.data) v *= 0.02;
    quantize_f32(null_emb_);
    camera_mlp_ = Mlp2(16, cfg.dim, cfg.dim, rng);
    global_encoder_ = ToyGlobalEncoder(cfg.latent_channels, cfg.dim, rng);
    siren_ = SirenLayer(6, cfg.siren_features, cfg.omega0, rng);
    plucker_pe_mlp_ = Mlp2(6 * cfg.patch * cfg.patch, cfg.dim, cfg.dim, rng);
    if (cfg.uses_controlmlp())
      control_ = detail::ControlMlp(cfg.control_in_dim(), cfg.dim, cfg.dim,
                                    cfg.depth, rng);
    const bool xattn = cfg.variant == ControlVariant::cross_attn;
    for (int i = 0; i < cfg.depth; ++i) blocks_.emplace_back(cfg.dim, xattn, rng);
    register_all();
  }

  MvDit(const MvDit&) = delete;
  MvDit& operator=(const MvDit&) = delete;

  ParamRegistry& params() { return reg_; }
  ToyGlobalEncoder& global_encoder() { return global_encoder_; }
  SirenLayer& siren() { return siren_; }
  detail::ControlMlp& control() { return control_; }

  // Copies every parameter whose name and shape match; used to rewire a
  // checkpoint into a different control variant (fresh control modules).
  void copy_matching_params(MvDit& src) {
    for (auto& e : reg_.entries()) {
      Tensor* s = src.reg_.find(e.name);
      if (s && s->shape == e.tensor->shape) e.tensor->data = s->data;
    }
  }

  // Embeds all inputs into the joint token sequence (the identity path of a
  // fresh model). Exposed so tests can compare against the block stack.
  std::pair<ad::NodePtr, ViewTokenBatch> assemble_tokens(
      ad::Graph& g, const ForwardInputs& in) {
    const auto dims = latent_dims(in);
    const int64_t h = dims.first, w = dims.second;
    const int64_t tokens_per_view = (h / cfg.patch) * (w / cfg.patch);
    ViewTokenBatch batch;
    batch.tokens_per_view = tokens_per_view;

    std::vector<ad::NodePtr> parts;
    const Tensor grid_pe = grid_posenc(h / cfg.patch, w / cfg.patch);

    // conditioning prefix: global token, then reference and face tokens
    if (in.global_embedding) {
      if (in.uncond) {
        parts.push_back(g.param(null_emb_));
      } else {
        parts.push_back(g.add(g.constant(*in.global_embedding),
                              role_rows(g, Role::global_tok)));
      }
      batch.segments.push_back({-1, Role::global_tok});
    }
    const std::pair<const std::optional<Tensor>*, Role> cond_slots[] = {
        {&in.ref_latent, Role::reference}, {&in.face_latent, Role::face}};
    for (const auto& [latent, role] : cond_slots) {
      if (!latent->has_value()) continue;
      if (in.uncond) {
        parts.push_back(broadcast_rows(g, g.param(null_emb_), tokens_per_view));
      } else {
        auto tokens = embed_latent(g, latent->value(), h, w);
        tokens = g.add(tokens, g.constant(grid_pe));
        tokens = g.add(tokens, role_rows(g, role));
        parts.push_back(tokens);
      }
      for (int64_t i = 0; i < tokens_per_view; ++i)
        batch.segments.push_back({-1, role});
    }
    batch.n_cond_tokens = int64_t(batch.segments.size());

    // target views
    const int n_views = int(in.noisy_targets.size());
    for (int v = 0; v < n_views; ++v) {
      auto tokens = embed_latent(g, in.noisy_targets[size_t(v)], h, w);
      tokens = g.add(tokens, g.constant(grid_pe));
      tokens = g.add(tokens, role_rows(g, Role::target));
      const int view_id = in.views[size_t(v)].view_id >= 0
                              ? in.views[size_t(v)].view_id
                              : v;
      tokens = g.add(tokens, g.slice_rows(g.param(view_offset_),
                                          view_id % cfg.max_views, 1));
      if (cfg.mode() == TrainMode::midtrain) {
        tokens = g.add(tokens, camera_token(g, in.views[size_t(v)].cam));
      } else if (cfg.variant == ControlVariant::plucker_pe) {
        tokens = g.add(tokens, plucker_pe_tokens(g, in.views[size_t(v)], h, w));
      }
      parts.push_back(tokens);
      for (int64_t i = 0; i < tokens_per_view; ++i)
        batch.segments.push_back({v, Role::target});
    }
    return {g.concat_rows(parts), batch};
  }

  ForwardResult forward(ad::Graph& g, const ForwardInputs& in,
                        EntropyRecorder* probe = nullptr) {
    require(!in.noisy_targets.empty(), "forward: no target views");
    require(in.views.size() == in.noisy_targets.size(),
            "forward: conditioning/view count mismatch");
    const auto dims = latent_dims(in);
    const int64_t h = dims.first, w = dims.second;
    const double lambda = in.lambda > 0 ? in.lambda : cfg.default_lambda();

    auto assembled = assemble_tokens(g, in);
    ad::NodePtr x = assembled.first;
    ViewTokenBatch batch = assembled.second;
    auto t_emb = timestep_embedding(g, in.t);

    std::vector<std::pair<ad::NodePtr, ad::NodePtr>> control;
    if (cfg.uses_controlmlp() && !in.disable_control)
      control = control_signal(g, in, batch, t_emb, h, w);

    // cross-attention source: reference tokens embedded outside the sequence
    ad::NodePtr xsrc;
    if (cfg.variant == ControlVariant::cross_attn) {
      require(in.ref_latent.has_value(),
              "cross_attn variant requires a reference latent");
      if (in.uncond) {
        xsrc = broadcast_rows(g, g.param(null_emb_), batch.tokens_per_view);
      } else {
        xsrc = g.add(embed_latent(g, *in.ref_latent, h, w),
                     g.constant(grid_posenc(h / cfg.patch, w / cfg.patch)));
      }
    }

    for (int b = 0; b < cfg.depth; ++b) {
      ad::NodePtr cs, csh;
      if (!control.empty()) {
        cs = control[size_t(b)].first;
        csh = control[size_t(b)].second;
      }
      x = block_forward(g, b, x, t_emb, cs, csh, xsrc, lambda, probe);
    }

    ForwardResult res;
    res.batch = batch;
    const int n_views = int(in.noisy_targets.size());
    const int64_t tpv = batch.tokens_per_view;
    for (int v = 0; v < n_views; ++v) {
      auto rows = g.slice_rows(x, batch.n_cond_tokens + int64_t(v) * tpv, tpv);
      auto out = head_.fwd(g, rows);
      res.eps_views.push_back(g.unpatchify_grid(out, h, w, cfg.patch));
    }
    return res;
  }

  // Single-block forward on an externally assembled token sequence.
  ad::NodePtr block_forward(ad::Graph& g, int block_idx, ad::NodePtr x,
                            ad::NodePtr t_emb, ad::NodePtr control_scale,
                            ad::NodePtr control_shift, ad::NodePtr xattn_src,
                            double lambda, EntropyRecorder* probe = nullptr) {
    auto& blk = blocks_[size_t(block_idx)];
    auto h = g.layernorm(x);
    // control modulation is applied before the AdaLN scale/shift
    if (control_scale)
      h = g.add(g.mul(h, g.add_scalar(control_scale, 1.0)), control_shift);
    auto mod = blk.adaln.fwd(g, g.silu(t_emb));  // {1, 4*dim}
    auto sc = g.slice_cols(mod, 0, cfg.dim);
    auto sh = g.slice_cols(mod, cfg.dim, cfg.dim);
    auto ga = g.slice_cols(mod, 2 * cfg.dim, cfg.dim);
    auto gm = g.slice_cols(mod, 3 * cfg.dim, cfg.dim);
    h = g.add(g.mul(h, g.add_scalar(sc, 1.0)), sh);

    // joint self-attention over every token, MLP in parallel on the same h
    auto qkv = blk.qkv.fwd(g, h);
    const int64_t dh = cfg.head_dim();
    std::vector<ad::NodePtr> head_outs;
    for (int hd = 0; hd < cfg.heads; ++hd) {
      auto q = g.slice_cols(qkv, hd * dh, dh);
      auto k = g.slice_cols(qkv, cfg.dim + hd * dh, dh);
      auto v = g.slice_cols(qkv, 2 * cfg.dim + hd * dh, dh);
      auto logits = g.scale(g.matmul_nt(q, k), lambda);
      auto A = g.softmax_rows(logits);
      if (probe && probe->wants(block_idx)) probe->record(block_idx, A->val);
      head_outs.push_back(g.matmul(A, v));
    }
    auto attn = blk.proj.fwd(g, g.concat_cols(head_outs));
    auto mlp = blk.mlp_out.fwd(g, g.gelu(blk.mlp_in.fwd(g, h)));
    x = g.add(x, g.add(g.mul(attn, ga), g.mul(mlp, gm)));

    if (blk.has_xattn && xattn_src) {
      auto xq = blk.xattn_q.fwd(g, g.layernorm(x));
      auto kv = blk.xattn_kv.fwd(g, xattn_src);
      std::vector<ad::NodePtr> xouts;
      for (int hd = 0; hd < cfg.heads; ++hd) {
        auto q = g.slice_cols(xq, hd * dh, dh);
        auto k = g.slice_cols(kv, hd * dh, dh);
        auto v = g.slice_cols(kv, cfg.dim + hd * dh, dh);
        auto logits = g.scale(g.matmul_nt(q, k), lambda);
        xouts.push_back(g.matmul(g.softmax_rows(logits), v));
      }
      auto xout = blk.xattn_proj.fwd(g, g.concat_cols(xouts));
      auto xgate = blk.xattn_gate.fwd(g, g.silu(t_emb));
      x = g.add(x, g.mul(xout, xgate));
    }
    return x;
  }

  ad::NodePtr timestep_embedding(ad::Graph& g, int t) {
    return t_mlp_.fwd(g, g.constant(sinusoidal_posenc(t, cfg.dim)));
  }

  // 16 raw camera values -> one token, added to every noisy latent token of
  // the corresponding view (midtrain conditioning).
  ad::NodePtr camera_token(ad::Graph& g, const CameraParams& cam) {
    ++stats.camera_token_reads;
    Tensor in({1, 16});
    in.data[0] = cam.fx;
    in.data[1] = cam.fy;
    in.data[2] = cam.cx;
    in.data[3] = cam.cy;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) in.data[size_t(4 + r * 3 + c)] = cam.R(r, c);
    for (int r = 0; r < 3; ++r) in.data[size_t(13 + r)] = cam.t(r);
    return camera_mlp_.fwd(g, g.constant(in));
  }

 private:
  std::pair<int64_t, int64_t> latent_dims(const ForwardInputs& in) const {
    require(!in.noisy_targets.empty(), "forward: no targets");
    const auto& s = in.noisy_targets[0].shape;
    require(s.size() == 3, "forward: latents must be {h,w,C}");
    require(s[2] == cfg.latent_channels, "forward: latent channel mismatch");
    require(s[0] % cfg.patch == 0 && s[1] % cfg.patch == 0,
            "forward: latent dims not divisible by patch");
    for (const auto& z : in.noisy_targets)
      require(z.shape == s, "forward: inconsistent latent shapes");
    return {s[0], s[1]};
  }

  // {1, dim} -> {rows, dim} via an explicit ones matmul (keeps gradients).
  ad::NodePtr broadcast_rows(ad::Graph& g, ad::NodePtr row, int64_t rows) {
    return g.matmul(g.constant(Tensor::full({rows, 1}, 1.0)), std::move(row));
  }

  ad::NodePtr embed_latent(ad::Graph& g, const Tensor& latent, int64_t h,
                           int64_t w) {
    auto x = g.constant(latent.reshaped({h * w, cfg.latent_channels}));
    auto raw = g.patchify_grid(x, h, w, cfg.patch);
    return patch_embed_.fwd(g, raw);
  }

  Tensor grid_posenc(int64_t gh, int64_t gw) const {
    Tensor pe({gh * gw, cfg.dim});
    for (int64_t r = 0; r < gh; ++r)
      for (int64_t c = 0; c < gw; ++c) {
        const Tensor e = sinusoidal_posenc_2d(r, c, cfg.dim);
        std::copy(e.data.begin(), e.data.end(),
                  pe.data.begin() + (r * gw + c) * cfg.dim);
      }
    return pe;
  }

  ad::NodePtr role_rows(ad::Graph& g, Role role) {
    return g.slice_rows(g.param(role_emb_), int64_t(role), 1);
  }

  ad::NodePtr plucker_pe_tokens(ad::Graph& g, const ViewConditioning& vc,
                                int64_t h, int64_t w) {
    ++stats.plucker_reads;
    require(vc.plucker.height > 0, "plucker_pe: missing plucker grid");
    const int64_t H = vc.plucker.height, W = vc.plucker.width;
    auto x = g.constant(vc.plucker.data.reshaped({H * W, 6}));
    if (cfg.latent_downsample > 1)
      x = g.avgpool_grid(x, H, W, cfg.latent_downsample);
    auto raw = g.patchify_grid(x, h, w, cfg.patch);
    return plucker_pe_mlp_.fwd(g, raw);
  }

  // Per-block (scale, shift) for the full sequence; conditioning tokens get
  // zero rows so only target tokens are modulated.
  std::vector<std::pair<ad::NodePtr, ad::NodePtr>> control_signal(
      ad::Graph& g, const ForwardInputs& in, const ViewTokenBatch& batch,
      ad::NodePtr t_emb, int64_t h, int64_t w) {
    std::vector<ad::NodePtr> per_view;
    for (const auto& vc : in.views) {
      std::vector<ad::NodePtr> feats;
      if (cfg.uses_plucker()) {
        ++stats.plucker_reads;
        require(vc.plucker.height > 0, "control: missing plucker grid");
        const int64_t H = vc.plucker.height, W = vc.plucker.width;
        auto x = g.constant(vc.plucker.data.reshaped({H * W, 6}));
        if (cfg.uses_siren()) x = siren_.fwd(g, x);
        if (cfg.latent_downsample > 1)
          x = g.avgpool_grid(x, H, W, cfg.latent_downsample);
        feats.push_back(g.patchify_grid(x, h, w, cfg.patch));
      }
      if (cfg.uses_anchor()) {
        ++stats.anchor_reads;
        require(vc.anchor_latent.numel() > 0, "control: missing anchor latent");
        auto a = g.constant(
            vc.anchor_latent.reshaped({h * w, cfg.latent_channels}));
        feats.push_back(g.patchify_grid(a, h, w, cfg.patch));
      }
      require(!feats.empty(), "control: variant has no inputs");
      per_view.push_back(feats.size() == 1 ? feats[0] : g.concat_cols(feats));
    }
    auto tokens = per_view.size() == 1 ? per_view[0] : g.concat_rows(per_view);
    auto hdn =
        g.silu(g.add(control_.fc_in.fwd(g, tokens), control_.t_proj.fwd(g, t_emb)));
    hdn = g.silu(control_.fc_mid.fwd(g, hdn));

    Tensor zeros({batch.n_cond_tokens, cfg.dim});
    std::vector<std::pair<ad::NodePtr, ad::NodePtr>> out;
    for (int b = 0; b < cfg.depth; ++b) {
      auto ss = control_.block_heads[size_t(b)].fwd(g, hdn);  // {n_t, 2*dim}
      auto sc = g.slice_cols(ss, 0, cfg.dim);
      auto sh = g.slice_cols(ss, cfg.dim, cfg.dim);
      if (batch.n_cond_tokens > 0) {
        sc = g.concat_rows({g.constant(zeros), sc});
        sh = g.concat_rows({g.constant(zeros), sh});
      }
      out.emplace_back(sc, sh);
    }
    return out;
  }

  void register_all() {
    patch_embed_.register_params(reg_, "patch_embed");
    head_.register_params(reg_, "head");
    t_mlp_.register_params(reg_, "t_mlp");
    reg_.add("view_offset", view_offset_);
    reg_.add("role_emb", role_emb_);
    reg_.add("null_emb", null_emb_);
    camera_mlp_.register_params(reg_, "camera_mlp");
    global_encoder_.register_params(reg_, "global_encoder");
    siren_.register_params(reg_, "siren");
    plucker_pe_mlp_.register_params(reg_, "plucker_pe_mlp");
    if (cfg.uses_controlmlp()) control_.register_params(reg_, "control");
    for (int i = 0; i < cfg.depth; ++i)
      blocks_[size_t(i)].register_params(reg_, "block" + std::to_string(i));
  }

  Linear patch_embed_, head_;
  Mlp2 t_mlp_, camera_mlp_, plucker_pe_mlp_;
  Tensor view_offset_, role_emb_, null_emb_;
  ToyGlobalEncoder global_encoder_;
  SirenLayer siren_;
  detail::ControlMlp control_;
  std::vector<detail::DitBlock> blocks_;
  ParamRegistry reg_;
};

}  // namespace mvdiff
