#pragma once

#include <algorithm>
#include <cmath>

#include "mvdiff/png_io.hpp"
#include "mvdiff/tensor.hpp"

namespace mvdiff {

// Images are {H, W, 3} tensors with values in [0, 1]; files are 8-bit PNG.

inline std::vector<uint8_t> quantize_image(const Tensor& image) {
  require(image.shape.size() == 3 && image.shape[2] == 3,
          "image: expected {H,W,3}");
  std::vector<uint8_t> bytes(image.data.size());
  for (size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::clamp(image.data[i], 0.0, 1.0);
    bytes[i] = uint8_t(std::lround(v * 255.0));
  }
  return bytes;
}

inline void save_image_png(const Tensor& image,
                           const std::filesystem::path& path) {
  write_png_rgb8(path, int(image.shape[1]), int(image.shape[0]),
                 quantize_image(image));
}

inline Tensor load_image_png(const std::filesystem::path& path) {
  const PngImage png = read_png_rgb8(path);
  Tensor image({png.height, png.width, 3});
  for (size_t i = 0; i < png.rgb.size(); ++i)
    image.data[i] = double(png.rgb[i]) / 255.0;
  return image;
}

inline constexpr double kPsnrCap = 99.0;

// PSNR in dB over [0,1] pixels; identical images report the 99 dB cap.
inline double psnr(const Tensor& a, const Tensor& b) {
  require(a.shape == b.shape, "psnr: resolution mismatch");
  double mse = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= double(a.numel());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace mvdiff
