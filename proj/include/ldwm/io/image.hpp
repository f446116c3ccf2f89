#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ldwm {

/// 8-bit image, row-major, `channels` interleaved (1 = gray, 3 = RGB).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 3;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
  bool operator==(const Image&) const = default;
};

/// PNG encode/decode through libpng. Decoding accepts gray, gray+alpha, RGB
/// and RGBA input at 8 or 16 bits and yields 1 or 3 channels (alpha dropped).
std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(const std::vector<std::uint8_t>& bytes);
void write_png(const std::string& path, const Image& img);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
/// Throws std::invalid_argument on characters outside the standard alphabet.
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace ldwm
