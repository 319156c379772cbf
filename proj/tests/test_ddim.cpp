#include <gtest/gtest.h>

#include "mvdiff/ddim.hpp"

using namespace mvdiff;

namespace {

// Oracle denoiser: returns the exact noise consistent with a fixed z0,
// eps = (z_t - sqrt(abar) z0) / sqrt(1 - abar).
MultiViewDenoiser oracle_denoiser(const std::vector<Tensor>& z0,
                                  const DiffusionSchedule& sched) {
  return [&z0, &sched](const std::vector<Tensor>& z, int t,
                       bool) -> std::vector<Tensor> {
    std::vector<Tensor> eps;
    for (size_t v = 0; v < z.size(); ++v) {
      Tensor e = z[v];
      const double sa = sched.sqrt_ab(t);
      const double sb = std::max(sched.sqrt_one_minus_ab(t), 1e-12);
      for (size_t i = 0; i < e.data.size(); ++i)
        e.data[i] = (z[v].data[i] - sa * z0[v].data[i]) / sb;
      eps.push_back(e);
    }
    return eps;
  };
}

}  // namespace

TEST(DdimSample, OracleDenoiserRecoversZ0) {
  const DiffusionSchedule sched = make_schedule(1000);
  CfgPolicy policy;
  policy.base_scale = 1.0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(mix_seed(seed, 5));
    std::vector<Tensor> z0 = {Tensor::randn({4, 4, 3}, rng),
                              Tensor::randn({4, 4, 3}, rng)};
    const auto out = ddim_sample(oracle_denoiser(z0, sched), 2, {4, 4, 3},
                                 sched, 50, policy, {}, seed);
    double sq = 0;
    int64_t n = 0;
    for (size_t v = 0; v < out.size(); ++v) {
      for (size_t i = 0; i < out[v].data.size(); ++i) {
        const double d = out[v].data[i] - z0[v].data[i];
        sq += d * d;
      }
      n += out[v].numel();
    }
    EXPECT_LT(std::sqrt(sq / double(n)), 1e-3);
  }
}

TEST(DdimSample, SeedDeterminism) {
  const DiffusionSchedule sched = make_schedule(100);
  CfgPolicy policy;
  policy.base_scale = 1.0;
  Rng rng(3);
  std::vector<Tensor> z0 = {Tensor::randn({2, 2, 3}, rng)};
  const auto a = ddim_sample(oracle_denoiser(z0, sched), 1, {2, 2, 3}, sched,
                             10, policy, {}, 77);
  const auto b = ddim_sample(oracle_denoiser(z0, sched), 1, {2, 2, 3}, sched,
                             10, policy, {}, 77);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_TRUE(bit_equal(a[0], b[0]));
}

TEST(DdimSample, CfgScaleOneMatchesConditionalOnly) {
  const DiffusionSchedule sched = make_schedule(100);
  Rng rng(4);
  // a denoiser whose unconditional branch diverges wildly
  auto denoiser = [](const std::vector<Tensor>& z, int,
                     bool uncond) -> std::vector<Tensor> {
    std::vector<Tensor> eps;
    for (const auto& zi : z)
      eps.push_back(uncond ? Tensor::full(zi.shape, 123.0) : scale(zi, 0.1));
    return eps;
  };
  CfgPolicy one;
  one.base_scale = 1.0;
  const auto with_cfg =
      ddim_sample(denoiser, 1, {2, 2, 3}, sched, 8, one, {}, 5, true);
  const auto cond_only =
      ddim_sample(denoiser, 1, {2, 2, 3}, sched, 8, one, {}, 5, false);
  EXPECT_TRUE(bit_equal(with_cfg[0], cond_only[0]));
}

TEST(DdimSample, RejectsBadShapes) {
  const DiffusionSchedule sched = make_schedule(100);
  auto bad = [](const std::vector<Tensor>& z, int,
                bool) -> std::vector<Tensor> {
    std::vector<Tensor> eps;
    for (const auto& zi : z) {
      (void)zi;
      eps.push_back(Tensor::zeros({1, 1}));
    }
    return eps;
  };
  CfgPolicy policy;
  policy.base_scale = 1.0;
  EXPECT_THROW(ddim_sample(bad, 1, {2, 2, 3}, sched, 4, policy, {}, 1), Error);
}

TEST(TrainingLoss, ExactDenoiserGivesZero) {
  const DiffusionSchedule sched = make_schedule(100);
  Rng data_rng(6);
  std::vector<Tensor> batch = {Tensor::randn({4, 4}, data_rng),
                               Tensor::randn({4, 4}, data_rng)};
  // recover the exact noise via eps = (z_t - sqrt(ab) z0) / sqrt(1 - ab);
  // items are visited in batch order
  size_t item = 0;
  auto oracle = [&](const Tensor& z_t, int t) -> Tensor {
    Tensor e = z_t;
    const double sa = sched.sqrt_ab(t);
    const double sb = sched.sqrt_one_minus_ab(t);
    for (size_t i = 0; i < e.data.size(); ++i)
      e.data[i] = (z_t.data[i] - sa * batch[item].data[i]) / sb;
    ++item;
    return e;
  };
  Rng rng(12345);
  EXPECT_LT(training_loss(oracle, batch, sched, rng), 1e-20);
}

TEST(TrainingLoss, ZeroDenoiserMatchesUnitSecondMoment) {
  const DiffusionSchedule sched = make_schedule(100);
  Rng data_rng(7);
  // 10^4 elements total across the batch
  std::vector<Tensor> batch;
  for (int i = 0; i < 100; ++i) batch.push_back(Tensor::randn({10, 10}, data_rng));
  auto zero = [](const Tensor& z_t, int) { return Tensor::zeros(z_t.shape); };
  Rng rng(99);
  const double loss = training_loss(zero, batch, sched, rng);
  EXPECT_NEAR(loss, 1.0, 0.05);
}

TEST(TrainingLoss, NonNegative) {
  const DiffusionSchedule sched = make_schedule(50);
  Rng data_rng(8);
  std::vector<Tensor> batch = {Tensor::randn({3, 3}, data_rng)};
  Rng rng(1);
  auto noisy = [&](const Tensor& z_t, int) {
    Tensor e = z_t;
    for (double& v : e.data) v = v * 0.3 - 0.1;
    return e;
  };
  EXPECT_GE(training_loss(noisy, batch, sched, rng), 0.0);
}
