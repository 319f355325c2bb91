#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "mammofuse/rng.hpp"

namespace mammofuse {

/// Single-channel image, row-major, every intensity in [0, 1].
class GrayImage {
public:
  GrayImage() = default;
  GrayImage(int width, int height, double fill = 0.0);
  /// Throws std::invalid_argument if data.size() != width*height or any value
  /// lies outside [0, 1].
  GrayImage(int width, int height, std::vector<double> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t size() const noexcept { return data_.size(); }

  double at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  /// Edge-clamped access; out-of-range coordinates read the nearest border pixel.
  double clamped(int x, int y) const;

  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const GrayImage&) const = default;

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Three same-shaped planes in R, G, B order, each in [0, 1].
class RgbImage {
public:
  RgbImage() = default;
  RgbImage(GrayImage r, GrayImage g, GrayImage b);

  int width() const noexcept { return planes_[0].width(); }
  int height() const noexcept { return planes_[0].height(); }
  const GrayImage& plane(int c) const { return planes_.at(static_cast<std::size_t>(c)); }
  const GrayImage& red() const noexcept { return planes_[0]; }
  const GrayImage& green() const noexcept { return planes_[1]; }
  const GrayImage& blue() const noexcept { return planes_[2]; }

  bool operator==(const RgbImage&) const = default;

private:
  std::array<GrayImage, 3> planes_;
};

struct ChannelStats {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};

  static ChannelStats imagenet() { return {}; }
  bool operator==(const ChannelStats&) const = default;
};

/// Channel-standardized image (unbounded reals). Only normalize() creates one.
class NormalizedImage {
public:
  NormalizedImage() = default;

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::span<const double> plane(int c) const { return planes_.at(static_cast<std::size_t>(c)); }

  bool operator==(const NormalizedImage&) const = default;

private:
  friend NormalizedImage normalize(const RgbImage&, const ChannelStats&);
  int width_ = 0;
  int height_ = 0;
  std::array<std::vector<double>, 3> planes_;
};

// ---- file I/O ---------------------------------------------------------------

/// Reads an 8- or 16-bit single-channel PNG or binary PGM (P5). The format is
/// sniffed from the file's magic bytes. Throws FormatError naming the path.
GrayImage load_gray(const std::filesystem::path& path);

/// bit_depth is 8 or 16; intensities are quantized by rounding v * maxval.
void save_pgm(const GrayImage& img, const std::filesystem::path& path, int bit_depth = 8);
void save_png(const GrayImage& img, const std::filesystem::path& path, int bit_depth = 8);

// ---- transforms -------------------------------------------------------------

/// Bilinear resize, pixel-center convention (align_corners = false), source
/// coordinates clamped at the borders.
GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h);

/// Square crop covering an area fraction s ~ U(scale_lo, scale_hi) of the
/// shorter side squared, at a uniform offset, resized to out x out. A crop that
/// would not fit is clamped to the image.
GrayImage random_resized_crop(const GrayImage& img, int out, double scale_lo,
                              double scale_hi, Rng& rng);

/// Side length of the crop for area fraction s on a w x h image.
int crop_side(int width, int height, double s);

/// Mirrors columns with probability p. Always consumes one draw from rng.
GrayImage hflip(const GrayImage& img, double p, Rng& rng);
GrayImage hflip(const GrayImage& img);

NormalizedImage normalize(const RgbImage& img, const ChannelStats& stats);

}  // namespace mammofuse
