#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ruinscope {

/// Channel-first float image (C x H x W), values normally in [0, 1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  bool empty() const { return data.empty(); }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }

  float& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Decodes any PNG into 3-channel 8-bit RGB scaled to [0, 1].
Image decode_png(std::span<const std::uint8_t> bytes);

/// Encodes a 3-channel image as 8-bit RGB PNG (values clamped, rounded).
std::vector<std::uint8_t> encode_png(const Image& image);

}  // namespace ruinscope
