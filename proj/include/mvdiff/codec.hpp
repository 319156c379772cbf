#pragma once

#include "mvdiff/tensor.hpp"

namespace mvdiff {

// Deterministic stand-in for a learned latent autoencoder: encode is an
// area-average downsample by an integer factor, decode a nearest-neighbor
// upsample. Factor 1 is the identity in both directions.
struct LatentCodec {
  int factor = 2;

  // {H, W, C} image -> {H/f, W/f, C} latent
  Tensor encode(const Tensor& image) const {
    require(image.shape.size() == 3, "codec: expected {H,W,C}");
    const int64_t H = image.shape[0], W = image.shape[1], C = image.shape[2];
    require(H % factor == 0 && W % factor == 0,
            "codec: dims not divisible by downsample factor");
    if (factor == 1) return image;
    const int64_t h = H / factor, w = W / factor;
    Tensor latent({h, w, C});
    const double inv = 1.0 / double(factor * factor);
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x)
        for (int64_t c = 0; c < C; ++c)
          latent.data[size_t(((y / factor) * w + x / factor) * C + c)] +=
              image.data[size_t((y * W + x) * C + c)] * inv;
    return latent;
  }

  // {h, w, C} latent -> {h*f, w*f, C} image
  Tensor decode(const Tensor& latent) const {
    require(latent.shape.size() == 3, "codec: expected {h,w,C}");
    if (factor == 1) return latent;
    const int64_t h = latent.shape[0], w = latent.shape[1], C = latent.shape[2];
    Tensor image({h * factor, w * factor, C});
    for (int64_t y = 0; y < h * factor; ++y)
      for (int64_t x = 0; x < w * factor; ++x)
        for (int64_t c = 0; c < C; ++c)
          image.data[size_t((y * w * factor + x) * C + c)] =
              latent.data[size_t(((y / factor) * w + x / factor) * C + c)];
    return image;
  }
};

}  // namespace mvdiff
