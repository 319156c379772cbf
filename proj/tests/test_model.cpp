#include <gtest/gtest.h>

#include <set>

#include "mvdiff/checkpoint.hpp"
#include "mvdiff/codec.hpp"
#include "mvdiff/model.hpp"
#include "mvdiff/posenc.hpp"
#include "oracles.hpp"

using namespace mvdiff;

namespace {

ModelConfig tiny_config(ControlVariant variant = ControlVariant::camera_mlp) {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.dim = 16;
  cfg.heads = 2;
  cfg.patch = 2;
  cfg.latent_downsample = 2;
  cfg.variant = variant;
  return cfg;
}

CameraParams test_camera(double angle = 0.0) {
  const Eigen::Vector3d eye(2.5 * std::cos(angle), 0.3, 2.5 * std::sin(angle));
  return look_at_camera(eye, {0, 0, 0}, {0, 1, 0}, 9.0, 9.0, 4.0, 4.0, 8, 8);
}

ForwardInputs make_inputs(const ModelConfig& cfg, int n_views, uint64_t seed,
                          bool with_ref = true) {
  ForwardInputs in;
  Rng rng(seed);
  for (int v = 0; v < n_views; ++v) {
    in.noisy_targets.push_back(Tensor::randn({4, 4, 3}, rng));
    ViewConditioning vc;
    vc.cam = test_camera(0.7 * v);
    vc.view_id = v;
    vc.plucker = plucker_grid(vc.cam, 8, 8);
    vc.anchor_latent = Tensor::randn({4, 4, 3}, rng);
    in.views.push_back(vc);
  }
  if (with_ref) in.ref_latent = Tensor::randn({4, 4, 3}, rng);
  in.t = 17;
  (void)cfg;
  return in;
}

std::vector<Tensor> forward_values(MvDit& model, const ForwardInputs& in) {
  ad::Graph g(false);
  const auto res = model.forward(g, in);
  std::vector<Tensor> out;
  for (const auto& n : res.eps_views) out.push_back(n->val);
  return out;
}

void randomize_params(MvDit& model, uint64_t seed, double s = 0.08) {
  Rng rng(seed);
  for (auto& e : model.params().entries()) {
    for (double& v : e.tensor->data) v = s * rng.normal();
    quantize_f32(*e.tensor);
  }
}

}  // namespace

TEST(Posenc, PositionZeroPattern) {
  const Tensor e = sinusoidal_posenc(0, 16);
  for (int64_t i = 0; i < 8; ++i) {
    EXPECT_DOUBLE_EQ(e.data[size_t(2 * i)], 0.0);
    EXPECT_DOUBLE_EQ(e.data[size_t(2 * i + 1)], 1.0);
  }
}

TEST(Posenc, NormIsHalfDim) {
  for (int64_t p : {0, 1, 17, 999}) {
    const Tensor e = sinusoidal_posenc(p, 32);
    double sq = 0;
    for (double v : e.data) sq += v * v;
    EXPECT_NEAR(sq, 16.0, 1e-9);
  }
}

TEST(Posenc, DistinctUpTo4096) {
  std::set<std::string> seen;
  for (int64_t p = 0; p < 4096; ++p) {
    const Tensor e = sinusoidal_posenc(p, 32);
    std::string key(reinterpret_cast<const char*>(e.data.data()),
                    e.data.size() * sizeof(double));
    EXPECT_TRUE(seen.insert(key).second) << "duplicate encoding at " << p;
  }
}

TEST(Posenc, OddDimRejected) { EXPECT_THROW(sinusoidal_posenc(1, 15), Error); }

TEST(LatentCodec, FactorOneIsIdentity) {
  Rng rng(1);
  const Tensor img = Tensor::randn({4, 6, 3}, rng);
  LatentCodec codec{1};
  EXPECT_TRUE(bit_equal(codec.encode(img), img));
  EXPECT_TRUE(bit_equal(codec.decode(img), img));
}

TEST(LatentCodec, ConstantRoundTrip) {
  const Tensor img = Tensor::full({8, 8, 3}, 0.37);
  LatentCodec codec{4};
  const Tensor back = codec.decode(codec.encode(img));
  EXPECT_LT(max_abs_diff(back, img), 1e-15);
}

TEST(LatentCodec, AreaMean) {
  Tensor img({2, 2, 1});
  img.data = {0.0, 0.0, 1.0, 1.0};
  LatentCodec codec{2};
  const Tensor latent = codec.encode(img);
  ASSERT_EQ(latent.numel(), 1);
  EXPECT_DOUBLE_EQ(latent.data[0], 0.5);
}

TEST(LatentCodec, RejectsNonDivisibleDims) {
  LatentCodec codec{2};
  EXPECT_THROW(codec.encode(Tensor::zeros({3, 4, 1})), Error);
}

TEST(Siren, OutputsInUnitRange) {
  Rng rng(2);
  SirenLayer layer(6, 32, 30.0, rng);
  ad::Graph g(false);
  const Tensor x = Tensor::randn({64, 6}, rng);
  const auto y = layer.fwd(g, g.constant(x));
  for (double v : y->val.data) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Siren, ZeroWeightsGiveZeroFeatures) {
  Rng rng(3);
  SirenLayer layer(6, 32, 30.0, rng);
  layer.W = Tensor::zeros({6, 32});
  layer.b = Tensor::zeros({1, 32});
  ad::Graph g(false);
  const auto y = layer.fwd(g, g.constant(Tensor::randn({10, 6}, rng)));
  for (double v : y->val.data) EXPECT_EQ(v, 0.0);
}

TEST(Siren, PreactivationAmplifiesSmallDifferences) {
  Rng rng(4);
  double best = 0;
  for (int trial = 0; trial < 5; ++trial) {
    SirenLayer layer(6, 32, 30.0, rng);
    Tensor a = Tensor::randn({1, 6}, rng);
    Tensor b = a;
    for (double& v : b.data) v += 1e-3 * rng.normal();
    ad::Graph g(false);
    const auto pa = layer.preactivation(g, g.constant(a));
    const auto pb = layer.preactivation(g, g.constant(b));
    double in_diff = 0, out_diff = 0;
    for (int64_t i = 0; i < 6; ++i)
      in_diff += (a.data[size_t(i)] - b.data[size_t(i)]) *
                 (a.data[size_t(i)] - b.data[size_t(i)]);
    for (int64_t i = 0; i < 32; ++i)
      out_diff += (pa->val.data[size_t(i)] - pb->val.data[size_t(i)]) *
                  (pa->val.data[size_t(i)] - pb->val.data[size_t(i)]);
    best = std::max(best, std::sqrt(out_diff) / std::sqrt(in_diff));
  }
  EXPECT_GT(best, 10.0);
}

TEST(Siren, EncodeGridShapeAndDownsample) {
  Rng rng(5);
  SirenLayer layer(6, 32, 30.0, rng);
  const CameraParams cam = test_camera();
  const PluckerGrid grid = plucker_grid(cam, 8, 8);
  const Tensor feat = siren_encode(grid, layer, 2);
  EXPECT_EQ(feat.shape, (std::vector<int64_t>{4, 4, 32}));
}

TEST(Siren, GradientCheck) {
  Rng rng(6);
  SirenLayer layer(6, 8, 30.0, rng);
  Tensor x = Tensor::randn({5, 6}, rng);
  const Tensor w = Tensor::randn({5, 8}, rng);

  auto value = [&]() {
    ad::Graph g(false);
    auto y = layer.fwd(g, g.constant(x));
    return dot_all(y->val, w);
  };

  ad::Graph g;
  auto y = layer.fwd(g, g.param(x));
  auto loss = g.sum(g.mul(y, g.constant(w)));
  g.backward(loss);

  for (auto [tensor, node] : g.params()) {
    const Tensor fd = oracles::finite_diff(*tensor, value, 1e-6);
    EXPECT_LT(oracles::rel_error(node->grad, fd), 1e-4);
  }
}

TEST(DitBlock, FreshBlockIsIdentityBitExact) {
  ModelConfig cfg = tiny_config();
  MvDit model(cfg, 11);
  Rng rng(7);
  Tensor x = Tensor::randn({12, cfg.dim}, rng);
  ad::Graph g(false);
  auto t_emb = model.timestep_embedding(g, 250);
  auto out = model.block_forward(g, 0, g.constant(x), t_emb, nullptr, nullptr,
                                 nullptr, cfg.default_lambda(), nullptr);
  EXPECT_TRUE(bit_equal(out->val, x));
}

TEST(DitBlock, GradientCheck) {
  ModelConfig cfg = tiny_config();
  MvDit model(cfg, 12);
  // non-trivial modulation and gates
  randomize_params(model, 1234);
  Rng rng(8);
  Tensor x = Tensor::randn({8, cfg.dim}, rng);
  Tensor w = Tensor::randn({8, cfg.dim}, rng);

  auto value = [&]() {
    ad::Graph g(false);
    auto out = model.block_forward(g, 0, g.constant(x),
                                   model.timestep_embedding(g, 100), nullptr,
                                   nullptr, nullptr, 0.5, nullptr);
    return dot_all(out->val, w);
  };

  ad::Graph g;
  auto out = model.block_forward(g, 0, g.param(x),
                                 model.timestep_embedding(g, 100), nullptr,
                                 nullptr, nullptr, 0.5, nullptr);
  g.backward(g.sum(g.mul(out, g.constant(w))));

  int checked = 0;
  for (auto [tensor, node] : g.params()) {
    if (node->grad.data.empty()) continue;  // unused in this subgraph
    const Tensor fd = oracles::finite_diff(*tensor, value, 1e-6);
    EXPECT_LT(oracles::rel_error(node->grad, fd), 1e-4);
    ++checked;
  }
  EXPECT_GT(checked, 5);
}

TEST(ControlMlp, FreshSignalIsExactlyZero) {
  ModelConfig cfg = tiny_config(ControlVariant::anchor_full);
  MvDit model(cfg, 13);
  ForwardInputs in = make_inputs(cfg, 2, 21);
  // a fresh ControlMLP must leave the forward bit-identical to a forward
  // with the control pathway bypassed entirely
  const auto with_control = forward_values(model, in);
  ForwardInputs no_control = in;
  no_control.disable_control = true;
  const auto without = forward_values(model, no_control);
  ASSERT_EQ(with_control.size(), without.size());
  for (size_t i = 0; i < without.size(); ++i)
    EXPECT_TRUE(bit_equal(with_control[i], without[i]));
}

TEST(ControlMlp, TrainedSignalRespondsToAnchor) {
  ModelConfig cfg = tiny_config(ControlVariant::anchor_full);
  MvDit model(cfg, 14);
  // a model one step away from zero init: gates, head and control heads
  // all non-zero, so the anchor input can reach the output
  randomize_params(model, 99);
  ForwardInputs in = make_inputs(cfg, 1, 22);
  const auto base = forward_values(model, in);
  ForwardInputs other = in;
  Rng rng(23);
  other.views[0].anchor_latent = Tensor::randn({4, 4, 3}, rng);
  const auto moved = forward_values(model, other);
  EXPECT_GT(max_abs_diff(base[0], moved[0]), 0.0);
}

TEST(MvDit, FreshModelEqualsFinalHeadOnAssembledTokens) {
  ModelConfig cfg = tiny_config();
  MvDit model(cfg, 15);
  // give the zero-init head random weights so the comparison is non-trivial
  Rng rng(24);
  Tensor* head_w = model.params().find("head.W");
  Tensor* head_b = model.params().find("head.b");
  ASSERT_TRUE(head_w && head_b);
  for (double& v : head_w->data) v = 0.05 * rng.normal();
  for (double& v : head_b->data) v = 0.05 * rng.normal();
  quantize_f32(*head_w);
  quantize_f32(*head_b);

  ForwardInputs in = make_inputs(cfg, 1, 25, /*with_ref=*/false);
  const auto out = forward_values(model, in);

  ad::Graph g(false);
  auto assembled = model.assemble_tokens(g, in);
  auto rows = g.slice_rows(assembled.first, assembled.second.n_cond_tokens,
                           assembled.second.tokens_per_view);
  auto head = g.add(g.matmul(rows, g.constant(*head_w)), g.constant(*head_b));
  auto direct = g.unpatchify_grid(head, 4, 4, cfg.patch);
  EXPECT_TRUE(bit_equal(out[0], direct->val));
}

TEST(MvDit, FreshModelIsAffineInInputs) {
  ModelConfig cfg = tiny_config();
  MvDit model(cfg, 16);
  Rng rng(26);
  Tensor* head_w = model.params().find("head.W");
  for (double& v : head_w->data) v = 0.05 * rng.normal();
  quantize_f32(*head_w);

  ForwardInputs a = make_inputs(cfg, 1, 27, false);
  ForwardInputs b = a;
  Rng rng2(28);
  b.noisy_targets[0] = Tensor::randn({4, 4, 3}, rng2);
  ForwardInputs zero = a;
  zero.noisy_targets[0] = Tensor::zeros({4, 4, 3});
  ForwardInputs sum = a;
  sum.noisy_targets[0] = add(a.noisy_targets[0], b.noisy_targets[0]);

  const auto fa = forward_values(model, a)[0];
  const auto fb = forward_values(model, b)[0];
  const auto f0 = forward_values(model, zero)[0];
  const auto fs = forward_values(model, sum)[0];
  // f(a + b) - f(0) == (f(a) - f(0)) + (f(b) - f(0))
  const Tensor lhs = sub(fs, f0);
  const Tensor rhs = add(sub(fa, f0), sub(fb, f0));
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-9);
}

TEST(MvDit, CameraTokenInputIsSixteenValues) {
  ModelConfig cfg = tiny_config();
  MvDit model(cfg, 17);
  const Tensor* w = model.params().find("camera_mlp.fc1.W");
  ASSERT_TRUE(w);
  EXPECT_EQ(w->shape[0], 16);
}

TEST(MvDit, IdenticalCamerasGiveIdenticalTokens) {
  ModelConfig cfg = tiny_config();
  MvDit model(cfg, 18);
  ad::Graph g(false);
  const auto a = model.camera_token(g, test_camera(0.5));
  const auto b = model.camera_token(g, test_camera(0.5));
  EXPECT_TRUE(bit_equal(a->val, b->val));
}

TEST(MvDit, ZeroCameraMlpMakesCamerasIndistinguishable) {
  ModelConfig cfg = tiny_config();
  MvDit model(cfg, 19);
  for (auto& e : model.params().entries())
    if (e.name.rfind("camera_mlp", 0) == 0)
      std::fill(e.tensor->data.begin(), e.tensor->data.end(), 0.0);
  ForwardInputs in = make_inputs(cfg, 1, 29);
  const auto out_a = forward_values(model, in);
  ForwardInputs moved = in;
  moved.views[0].cam = test_camera(2.0);
  const auto out_b = forward_values(model, moved);
  EXPECT_TRUE(bit_equal(out_a[0], out_b[0]));
}

TEST(MvDit, PermutationEquivariance) {
  ModelConfig cfg = tiny_config();
  MvDit model(cfg, 20);
  randomize_params(model, 777);
  ForwardInputs in = make_inputs(cfg, 3, 30);
  const auto out = forward_values(model, in);

  ForwardInputs perm = in;
  const int order[3] = {2, 0, 1};
  for (int i = 0; i < 3; ++i) {
    perm.noisy_targets[size_t(i)] = in.noisy_targets[size_t(order[i])];
    perm.views[size_t(i)] = in.views[size_t(order[i])];  // view_id moves too
  }
  const auto pout = forward_values(model, perm);
  for (int i = 0; i < 3; ++i)
    EXPECT_LT(max_abs_diff(pout[size_t(i)], out[size_t(order[i])]), 1e-12);
}

TEST(MvDit, ModeExclusivityCounters) {
  {
    ModelConfig cfg = tiny_config(ControlVariant::camera_mlp);
    MvDit model(cfg, 21);
    ForwardInputs in = make_inputs(cfg, 2, 31);
    forward_values(model, in);
    EXPECT_GT(model.stats.camera_token_reads, 0);
    EXPECT_EQ(model.stats.plucker_reads, 0);
    EXPECT_EQ(model.stats.anchor_reads, 0);
  }
  {
    ModelConfig cfg = tiny_config(ControlVariant::anchor_full);
    MvDit model(cfg, 22);
    ForwardInputs in = make_inputs(cfg, 2, 32);
    forward_values(model, in);
    EXPECT_EQ(model.stats.camera_token_reads, 0);
    EXPECT_GT(model.stats.plucker_reads, 0);
    EXPECT_GT(model.stats.anchor_reads, 0);
  }
}

TEST(MvDit, LossMaskCoversExactlyTargetTokens) {
  ModelConfig cfg = tiny_config();
  MvDit model(cfg, 23);
  ForwardInputs in = make_inputs(cfg, 2, 33);
  in.face_latent = in.ref_latent;
  ad::Graph g(false);
  const auto res = model.forward(g, in);
  const auto mask = res.batch.loss_mask();
  int64_t n_target = 0;
  for (size_t i = 0; i < mask.size(); ++i) {
    const bool is_target = res.batch.segments[i].role == Role::target;
    EXPECT_EQ(mask[i] == 1, is_target);
    n_target += mask[i];
  }
  EXPECT_EQ(n_target, 2 * res.batch.tokens_per_view);
  EXPECT_EQ(res.batch.n_tokens(),
            res.batch.n_cond_tokens + 2 * res.batch.tokens_per_view);
  // epsilon outputs exist for target views only
  EXPECT_EQ(res.eps_views.size(), 2u);
}

TEST(MvDit, DeterministicForward) {
  ModelConfig cfg = tiny_config(ControlVariant::anchor_full);
  MvDit model(cfg, 24);
  randomize_params(model, 888);
  ForwardInputs in = make_inputs(cfg, 2, 34);
  const auto a = forward_values(model, in);
  const auto b = forward_values(model, in);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bit_equal(a[i], b[i]));
}

TEST(MvDit, UncondPassUsesNullEmbedding) {
  ModelConfig cfg = tiny_config();
  MvDit model(cfg, 25);
  randomize_params(model, 999);
  ForwardInputs in = make_inputs(cfg, 1, 35);
  const auto cond = forward_values(model, in);
  ForwardInputs un = in;
  un.uncond = true;
  const auto uncond = forward_values(model, un);
  EXPECT_GT(max_abs_diff(cond[0], uncond[0]), 0.0);
  // unconditional output ignores the reference content entirely
  ForwardInputs un2 = un;
  Rng rng(36);
  un2.ref_latent = Tensor::randn({4, 4, 3}, rng);
  const auto uncond2 = forward_values(model, un2);
  EXPECT_TRUE(bit_equal(uncond[0], uncond2[0]));
}

// End-to-end gradient check: joint 2-view forward with 4x4 latents,
// dim 16, depth 2 against central finite differences on a parameter
// subsample.
TEST(MvDit, EndToEndGradientCheck) {
  for (ControlVariant variant :
       {ControlVariant::camera_mlp, ControlVariant::anchor_full}) {
    ModelConfig cfg = tiny_config(variant);
    MvDit model(cfg, 26);
    randomize_params(model, 4321);
    ForwardInputs in = make_inputs(cfg, 2, 37);
    Rng wrng(38);
    std::vector<Tensor> w = {Tensor::randn({16, 3}, wrng),
                             Tensor::randn({16, 3}, wrng)};

    auto value = [&]() {
      ad::Graph g(false);
      const auto res = model.forward(g, in);
      double total = 0;
      for (size_t v = 0; v < res.eps_views.size(); ++v)
        total += dot_all(res.eps_views[v]->val, w[v]);
      return total;
    };

    ad::Graph g;
    const auto res = model.forward(g, in);
    ad::NodePtr loss;
    for (size_t v = 0; v < res.eps_views.size(); ++v) {
      auto term = g.sum(g.mul(res.eps_views[v], g.constant(w[v])));
      loss = loss ? g.add(loss, term) : term;
    }
    g.backward(loss);

    // probe a deterministic subsample of entries in every parameter that
    // received gradient
    Rng pick(39);
    double worst = 0;
    int probed = 0;
    for (auto [tensor, node] : g.params()) {
      if (node->grad.data.empty()) continue;
      const int n_probe = std::min<int>(3, int(tensor->data.size()));
      for (int k = 0; k < n_probe; ++k) {
        const size_t idx =
            size_t(pick.uniform_int(0, int64_t(tensor->data.size()) - 1));
        const double keep = tensor->data[idx];
        const double h = 1e-5;
        tensor->data[idx] = keep + h;
        const double up = value();
        tensor->data[idx] = keep - h;
        const double dn = value();
        tensor->data[idx] = keep;
        const double fd = (up - dn) / (2 * h);
        const double an = node->grad.data[idx];
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
        worst = std::max(worst, std::abs(fd - an) / denom);
        ++probed;
      }
    }
    EXPECT_GT(probed, 30);
    EXPECT_LT(worst, 1e-3) << "variant " << to_string(variant);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ModelConfig cfg = tiny_config(ControlVariant::anchor_full);
  MvDit model(cfg, 27);
  randomize_params(model, 5555);
  model.cfg.n_train_tokens = 20;
  const auto path =
      std::filesystem::temp_directory_path() / "mvdiff_ckpt_test.bin";
  checkpoint_save(model, path);
  auto loaded = checkpoint_load(path);
  EXPECT_EQ(loaded->cfg.n_train_tokens, 20);
  EXPECT_EQ(loaded->cfg.variant, ControlVariant::anchor_full);

  ForwardInputs in = make_inputs(cfg, 2, 40);
  const auto a = forward_values(model, in);
  const auto b = forward_values(*loaded, in);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bit_equal(a[i], b[i]));
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptMagicIsFormatError) {
  ModelConfig cfg = tiny_config();
  MvDit model(cfg, 28);
  const auto path =
      std::filesystem::temp_directory_path() / "mvdiff_ckpt_corrupt.bin";
  checkpoint_save(model, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("BOGUS!", 6);
  }
  EXPECT_THROW(checkpoint_load(path), FormatError);
  // wrong version digit
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("MVDIT9", 6);
  }
  EXPECT_THROW(checkpoint_load(path), FormatError);
  std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedFileIsFormatError) {
  ModelConfig cfg = tiny_config();
  MvDit model(cfg, 29);
  const auto path =
      std::filesystem::temp_directory_path() / "mvdiff_ckpt_trunc.bin";
  checkpoint_save(model, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size / 2);
  EXPECT_THROW(checkpoint_load(path), FormatError);
  std::filesystem::remove(path);
}

TEST(Checkpoint, FreshControlZerosSurviveReload) {
  ModelConfig cfg = tiny_config(ControlVariant::anchor_full);
  MvDit model(cfg, 30);
  const auto path =
      std::filesystem::temp_directory_path() / "mvdiff_ckpt_zeros.bin";
  checkpoint_save(model, path);
  auto loaded = checkpoint_load(path);
  int n_heads = 0;
  for (const auto& e : loaded->params().entries()) {
    if (e.name.rfind("control.head", 0) != 0) continue;
    ++n_heads;
    for (double v : e.tensor->data) EXPECT_EQ(v, 0.0);
  }
  EXPECT_EQ(n_heads, 2 * cfg.depth);
  std::filesystem::remove(path);
}

TEST(ToyGlobalEncoder, ConstantImageMatchesLinearOfConstant) {
  ModelConfig cfg = tiny_config();
  MvDit model(cfg, 31);
  const Tensor img = Tensor::full({4, 4, 3}, 0.6);
  const Tensor emb = model.global_encoder().encode(img);
  // mean pool of a constant image is the constant vector
  Tensor pooled({1, 3});
  pooled.data = {0.6, 0.6, 0.6};
  ad::Graph g(false);
  const Tensor direct =
      model.global_encoder().proj.fwd(g, g.constant(pooled))->val;
  EXPECT_LT(max_abs_diff(emb, direct), 1e-12);
  EXPECT_TRUE(bit_equal(emb, model.global_encoder().encode(img)));
}

TEST(ToyGlobalEncoder, TrainableSeparationAfterOneStep) {
  ModelConfig cfg = tiny_config();
  MvDit model(cfg, 32);
  // zero the projection: embeddings of any two scenes start identical
  Tensor* w = model.params().find("global_encoder.proj.W");
  Tensor* b = model.params().find("global_encoder.proj.b");
  std::fill(w->data.begin(), w->data.end(), 0.0);
  std::fill(b->data.begin(), b->data.end(), 0.0);
  Rng rng(41);
  const Tensor scene_a = Tensor::randn({4, 4, 3}, rng);
  const Tensor scene_b = Tensor::randn({4, 4, 3}, rng);
  auto distance = [&]() {
    const Tensor ea = model.global_encoder().encode(scene_a);
    const Tensor eb = model.global_encoder().encode(scene_b);
    return max_abs_diff(ea, eb);
  };
  EXPECT_EQ(distance(), 0.0);
  // one supervised step toward distinct targets (nonzero gradient at W=0)
  auto pool = [&](const Tensor& img) {
    Tensor p({1, 3});
    for (int64_t i = 0; i < 16; ++i)
      for (int64_t c = 0; c < 3; ++c)
        p.data[size_t(c)] += img.data[size_t(i * 3 + c)] / 16.0;
    return p;
  };
  ad::Graph g;
  auto ea = model.global_encoder().proj.fwd(g, g.constant(pool(scene_a)));
  auto eb = model.global_encoder().proj.fwd(g, g.constant(pool(scene_b)));
  auto ra = g.sub(ea, g.constant(Tensor::full({1, 16}, 1.0)));
  auto rb = g.sub(eb, g.constant(Tensor::full({1, 16}, -1.0)));
  auto loss = g.add(g.sum(g.mul(ra, ra)), g.sum(g.mul(rb, rb)));
  g.backward(loss);
  for (auto [tensor, node] : g.params())
    for (size_t i = 0; i < tensor->data.size(); ++i)
      tensor->data[i] -= 0.1 * node->grad.data[i];
  EXPECT_GT(distance(), 0.0);
}

TEST(MvDit, CrossAttnVariantRunsAndDiffersFromSelfAttn) {
  ModelConfig cfg = tiny_config(ControlVariant::cross_attn);
  MvDit model(cfg, 33);
  randomize_params(model, 2468);
  ForwardInputs in = make_inputs(cfg, 2, 42);
  const auto out = forward_values(model, in);
  ASSERT_EQ(out.size(), 2u);
  // reference still influences the output through the cross path
  ForwardInputs other = in;
  Rng rng(43);
  other.ref_latent = Tensor::randn({4, 4, 3}, rng);
  const auto out2 = forward_values(model, other);
  EXPECT_GT(max_abs_diff(out[0], out2[0]), 0.0);
}
