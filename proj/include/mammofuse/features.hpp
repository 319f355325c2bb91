#pragma once

#include <array>
#include <string>
#include <vector>

#include "mammofuse/image.hpp"

namespace mammofuse {

using Kernel3 = std::array<std::array<double, 3>, 3>;  // [row][col]

enum class FeatureKind { D1, D2, T, LBP };
std::string to_string(FeatureKind k);

/// Signed response of a 3x3 convolution, same shape as the source image.
struct SignedMap {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

struct FeatureMap {
  FeatureKind kind;
  GrayImage image;  // values in [0,1], same shape as the source
};

/// Kernels and constants behind the handcrafted maps. Defaults: Sobel pair for
/// d1, 4-neighbour Laplacian for d2, both normalized by their largest possible
/// response on unit-range input.
struct KernelSpec {
  Kernel3 gx{{{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}}};
  Kernel3 gy{{{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}}};
  Kernel3 lap{{{0, 1, 0}, {1, -4, 1}, {0, 1, 0}}};
  double d1_norm = 4.0;
  double d2_norm = 4.0;
  double tau = 0.5;

  static KernelSpec sobel_laplace4() { return {}; }
  /// Named presets: d1 in {sobel, prewitt}, d2 in {laplace4, laplace8}.
  static KernelSpec preset(const std::string& d1, const std::string& d2, double tau = 0.5);

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

/// True convolution (kernel flipped) with replicate padding.
SignedMap conv3x3(const GrayImage& img, const Kernel3& k);

FeatureMap d1_map(const GrayImage& img, const KernelSpec& k = {});
FeatureMap d2_map(const GrayImage& img, const KernelSpec& k = {});
FeatureMap threshold_map(const GrayImage& img, double tau = 0.5);

/// 8-neighbour LBP over a 3x3 window. bit i is set iff neighbour i >= centre,
/// neighbours clockwise from top-left (TL, T, TR, R, BR, B, BL, L) weighted
/// 2^0..2^7. Replicate padding. Output is code / 255.
FeatureMap lbp_map(const GrayImage& img);

/// Raw LBP code at one pixel.
unsigned lbp_code(const GrayImage& img, int x, int y);

}  // namespace mammofuse
