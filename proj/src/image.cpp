#include "ruinscope/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ruinscope/error.hpp"

namespace ruinscope {

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw Error(Errc::DecodeError, png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, raw.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw Error(Errc::DecodeError, msg);
  }
  const int h = static_cast<int>(png.height);
  const int w = static_cast<int>(png.width);
  Image img(3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t* px = &raw[(static_cast<std::size_t>(y) * w + x) * 3];
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(px[c]) / 255.0f;
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.channels != 3) throw Error(Errc::ShapeMismatch, "encode_png expects 3 channels");
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(image.height) * image.width * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        raw[(static_cast<std::size_t>(y) * image.width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, raw.data(), 0, nullptr)) {
    throw Error(Errc::Io, png.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, raw.data(), 0, nullptr)) {
    throw Error(Errc::Io, png.message);
  }
  out.resize(size);
  return out;
}

}  // namespace ruinscope
