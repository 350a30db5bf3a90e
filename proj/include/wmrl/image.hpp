#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace wmrl {

// Channel-interleaved image, row-major, values nominally in [0,1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  [[nodiscard]] bool empty() const noexcept { return data.empty(); }

  double& at(int row, int col, int ch) {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }
  [[nodiscard]] double at(int row, int col, int ch) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + ch];
  }

  [[nodiscard]] bool contains(int row, int col) const noexcept {
    return row >= 0 && row < height && col >= 0 && col < width;
  }

  bool operator==(const Image&) const = default;
};

// ITU-R BT.601 luma; single-channel input is returned unchanged.
Image to_grayscale(const Image& rgb);

// value*255 rounded half up, clamped to [0,255].
std::uint8_t quantize_u8(double v) noexcept;

std::vector<std::uint8_t> quantize(const Image& img);

// 8-bit PNG I/O (gray or RGB). Errors throw wmrl::Error with Errc::Io.
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

}  // namespace wmrl
