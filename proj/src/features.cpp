#include "mammofuse/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mammofuse {

std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::D1: return "d1";
    case FeatureKind::D2: return "d2";
    case FeatureKind::T: return "t";
    case FeatureKind::LBP: return "LBP";
  }
  return "?";
}

namespace {

double kernel_sum(const Kernel3& k) {
  double s = 0;
  for (const auto& row : k)
    for (double v : row) s += v;
  return s;
}

// Largest |response| of k on inputs in [0,1]: sum of positive entries or of
// negative entries, whichever is larger in magnitude.
double max_response(const Kernel3& k) {
  double pos = 0, neg = 0;
  for (const auto& row : k)
    for (double v : row) (v > 0 ? pos : neg) += v;
  return std::max(pos, -neg);
}

Kernel3 transpose(const Kernel3& k) {
  Kernel3 t{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) t[r][c] = k[c][r];
  return t;
}

}  // namespace

KernelSpec KernelSpec::preset(const std::string& d1, const std::string& d2, double tau) {
  KernelSpec k;
  if (d1 == "sobel") {
  } else if (d1 == "prewitt") {
    k.gx = {{{-1, 0, 1}, {-1, 0, 1}, {-1, 0, 1}}};
  } else {
    throw std::invalid_argument("unknown d1 kernel '" + d1 + "' (sobel, prewitt)");
  }
  k.gy = transpose(k.gx);
  k.d1_norm = max_response(k.gx);
  if (d2 == "laplace4") {
  } else if (d2 == "laplace8") {
    k.lap = {{{1, 1, 1}, {1, -8, 1}, {1, 1, 1}}};
  } else {
    throw std::invalid_argument("unknown d2 kernel '" + d2 + "' (laplace4, laplace8)");
  }
  k.d2_norm = max_response(k.lap);
  k.tau = tau;
  k.validate();
  return k;
}

void KernelSpec::validate() const {
  if (std::abs(kernel_sum(gx)) > 1e-12) throw std::invalid_argument("gx must sum to zero");
  if (gy != transpose(gx)) throw std::invalid_argument("gy must be the transpose of gx");
  if (std::abs(kernel_sum(lap)) > 1e-12) throw std::invalid_argument("lap must sum to zero");
  if (!(d1_norm > 0) || !(d2_norm > 0)) throw std::invalid_argument("d1_norm and d2_norm must be positive");
  if (!(tau >= 0 && tau <= 1)) throw std::invalid_argument("tau outside [0,1]");
}

SignedMap conv3x3(const GrayImage& img, const Kernel3& k) {
  if (img.empty()) throw std::invalid_argument("conv3x3 on empty image");
  const int w = img.width(), h = img.height();
  SignedMap out{w, h, std::vector<double>(img.size())};
  // out(x,y) = sum_{i,j} k[1+i][1+j] * img(x-j, y-i)
  for (int y = 0; y < h; ++y) {
    const int ys[3] = {std::max(y - 1, 0), y, std::min(y + 1, h - 1)};
    for (int x = 0; x < w; ++x) {
      const int xs[3] = {std::max(x - 1, 0), x, std::min(x + 1, w - 1)};
      double acc = 0;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) acc += k[r][c] * img.at(xs[2 - c], ys[2 - r]);
      out.data[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

FeatureMap d1_map(const GrayImage& img, const KernelSpec& k) {
  const auto gx = conv3x3(img, k.gx);
  const auto gy = conv3x3(img, k.gy);
  std::vector<double> out(img.size());
  const double denom = 2.0 * k.d1_norm;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp((std::abs(gx.data[i]) + std::abs(gy.data[i])) / denom, 0.0, 1.0);
  return {FeatureKind::D1, GrayImage(img.width(), img.height(), std::move(out))};
}

FeatureMap d2_map(const GrayImage& img, const KernelSpec& k) {
  const auto lap = conv3x3(img, k.lap);
  std::vector<double> out(img.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp(std::abs(lap.data[i]) / k.d2_norm, 0.0, 1.0);
  return {FeatureKind::D2, GrayImage(img.width(), img.height(), std::move(out))};
}

FeatureMap threshold_map(const GrayImage& img, double tau) {
  if (!(tau >= 0 && tau <= 1)) throw std::invalid_argument("threshold tau outside [0,1]");
  std::vector<double> out(img.size());
  const auto src = img.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i] >= tau ? 1.0 : 0.0;
  return {FeatureKind::T, GrayImage(img.width(), img.height(), std::move(out))};
}

unsigned lbp_code(const GrayImage& img, int x, int y) {
  static constexpr int kDx[8] = {-1, 0, 1, 1, 1, 0, -1, -1};
  static constexpr int kDy[8] = {-1, -1, -1, 0, 1, 1, 1, 0};
  const double centre = img.at(x, y);
  unsigned code = 0;
  for (int i = 0; i < 8; ++i)
    if (img.clamped(x + kDx[i], y + kDy[i]) >= centre) code |= 1u << i;
  return code;
}

FeatureMap lbp_map(const GrayImage& img) {
  if (img.empty()) throw std::invalid_argument("lbp_map on empty image");
  std::vector<double> out(img.size());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out[static_cast<std::size_t>(y) * img.width() + x] = lbp_code(img, x, y) / 255.0;
  return {FeatureKind::LBP, GrayImage(img.width(), img.height(), std::move(out))};
}

}  // namespace mammofuse
