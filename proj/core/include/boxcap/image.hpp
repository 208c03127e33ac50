#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace boxcap {

/// H x W x 3 bitmap, channel values in [0, 1], row-major interleaved RGB.
class Image {
 public:
  Image() = default;
  Image(int height, int width, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  void set_rgb(int y, int x, double r, double g, double b) {
    at(y, x, 0) = r;
    at(y, x, 1) = g;
    at(y, x, 2) = b;
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool operator==(const Image& other) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3 +
           static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

/// Quantizes a channel value to 8 bits (round to nearest, clamped).
std::uint8_t to_byte(double v);

/// 8-bit RGB PNG I/O. Reading converts grayscale/alpha/palette/16-bit inputs to RGB8.
Image read_png(const std::filesystem::path& path);
void write_png(const Image& image, const std::filesystem::path& path);

}  // namespace boxcap
