#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace pdnet::pnm {

/// 8-bit raster, row-major, channels interleaved.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;  // 1 (P5) or 3 (P6)
  std::vector<std::uint8_t> pixels;
};

/// Binary P5/P6 with maxval 255. Header comments are allowed.
Image read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, const Image& image);

}  // namespace pdnet::pnm
