#pragma once

// Planar float images and the on-disk formats: PPM (P6), PGM (P5), PFM.

#include <cstdint>
#include <string>
#include <vector>

#include "nvs/tensor.hpp"

namespace nvs {

/// Channel-planar RGB image, values in [0,1].
struct Image {
  int width = 0, height = 0;
  std::vector<float> data;  // [3][height][width]

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(3 * w * h), 0.0f) {}
  float& at(int c, int y, int x) {
    return data[static_cast<std::size_t>((c * height + y) * width + x)];
  }
  float at(int c, int y, int x) const {
    return data[static_cast<std::size_t>((c * height + y) * width + x)];
  }
};

/// 8-bit quantization used by the PPM writer: round(clamp(v,0,1) * 255).
std::uint8_t quantize(float v);
/// Image after a PPM write/read cycle.
Image quantized(const Image& img);

void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);
/// Single-channel 8-bit map (values already 0..255).
void write_pgm(const std::string& path, int width, int height, const std::vector<std::uint8_t>& v);
std::vector<std::uint8_t> read_pgm(const std::string& path, int& width, int& height);
/// Little-endian PFM (scale -1.0), rows stored bottom to top.
void write_pfm(const std::string& path, int width, int height, const std::vector<double>& v);
std::vector<double> read_pfm(const std::string& path, int& width, int& height);

/// [0,1] image -> tensor [3,H,W] in [-1,1], and back (clamped).
template <typename T>
Tensor<T> image_to_tensor(const Image& img);
template <typename T>
Image tensor_to_image(const Tensor<T>& t);

}  // namespace nvs
