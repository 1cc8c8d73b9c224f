#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "shield/errors.hpp"

namespace shield {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// H x W x C real image, row-major with channels innermost:
// index(r, c, ch) = (r * W + c) * C + ch.
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  Vec pixels;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(Vec::Constant(std::size_t(h) * w * c, fill)) {}
  ImageTensor(int h, int w, int c, Vec data) : height(h), width(w), channels(c), pixels(std::move(data)) {
    if (pixels.size() != Eigen::Index(h) * w * c)
      throw DimensionError("image buffer size does not match H*W*C");
  }

  Eigen::Index size() const { return pixels.size(); }
  int num_pixels() const { return height * width; }
  Eigen::Index index(int r, int c, int ch) const { return (Eigen::Index(r) * width + c) * channels + ch; }
  double& at(int r, int c, int ch) { return pixels[index(r, c, ch)]; }
  double at(int r, int c, int ch) const { return pixels[index(r, c, ch)]; }

  bool same_shape(const ImageTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  bool all_finite() const { return pixels.allFinite(); }
  ImageTensor clamped() const {
    return ImageTensor(height, width, channels, pixels.cwiseMax(0.0).cwiseMin(1.0).eval());
  }
  bool operator==(const ImageTensor& o) const { return same_shape(o) && pixels == o.pixels; }
};

inline void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (!a.same_shape(b)) throw DimensionError(std::string(what) + ": image shapes differ");
}

// Binary H x W spatial mask shared by every channel.
class Mask {
 public:
  Mask() = default;
  Mask(int h, int w, bool fill = false)
      : height_(h), width_(w), bits_(std::size_t(h) * w, fill ? 1 : 0) {}

  int height() const { return height_; }
  int width() const { return width_; }
  bool at(int r, int c) const { return bits_[std::size_t(r) * width_ + c] != 0; }
  void set(int r, int c, bool v = true) { bits_[std::size_t(r) * width_ + c] = v ? 1 : 0; }
  bool at_flat(int p) const { return bits_[p] != 0; }
  void set_flat(int p, bool v = true) { bits_[p] = v ? 1 : 0; }
  int num_pixels() const { return height_ * width_; }

  int support() const {
    int n = 0;
    for (auto b : bits_) n += b;
    return n;
  }
  bool empty() const { return support() == 0; }
  bool matches(const ImageTensor& img) const { return img.height == height_ && img.width == width_; }

  Mask operator|(const Mask& o) const;
  Mask operator&(const Mask& o) const;
  bool operator==(const Mask& o) const = default;

  // Intersection over union; 1 when both are empty.
  double iou(const Mask& o) const;

  // Run-length encoding: per row, alternating run lengths starting with zeros,
  // rows separated by ';'. "16;3,4,9;..." style.
  std::string to_rle() const;
  static Mask from_rle(int h, int w, const std::string& rle);

  static Mask full(int h, int w) { return Mask(h, w, true); }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

}  // namespace shield
