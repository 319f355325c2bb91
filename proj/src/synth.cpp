#include "mammofuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace mammofuse {

SynthVariant parse_synth_variant(const std::string& s) {
  if (s == "texture") return SynthVariant::Texture;
  if (s == "edges" || s == "edge") return SynthVariant::Edges;
  throw std::invalid_argument("unknown synthetic variant '" + s + "' (texture, edges)");
}

std::string to_string(SynthVariant v) { return v == SynthVariant::Texture ? "texture" : "edges"; }

namespace {

GrayImage sawtooth(int label, int size, Rng& rng) {
  const double mean = 0.35 + 0.3 * uniform01(rng);
  const double amp = 0.1 + 0.3 * uniform01(rng);
  const int period = static_cast<int>(uniform_int(rng, 4, 8));
  std::vector<double> data(static_cast<std::size_t>(size) * size);
  // columns come in segments that share one ramp phase
  int phase = 0;
  for (int x = 0, seg_end = 0; x < size; ++x) {
    if (x == seg_end) {
      phase = static_cast<int>(uniform_int(rng, 0, period - 1));
      seg_end = x + static_cast<int>(uniform_int(rng, 8, 16));
    }
    for (int y = 0; y < size; ++y) {
      const int k = (y + phase) % period;
      const double ramp = static_cast<double>(label == 0 ? k : period - 1 - k) / (period - 1) - 0.5;
      data[static_cast<std::size_t>(y) * size + x] = std::clamp(mean + amp * ramp, 0.0, 1.0);
    }
  }
  return GrayImage(size, size, std::move(data));
}

GrayImage mosaic(int label, int size, Rng& rng) {
  const double mean = 0.65 + 0.2 * uniform01(rng);
  const double amp = 0.14 + 0.04 * uniform01(rng);
  const int block = label == 0 ? static_cast<int>(uniform_int(rng, 8, 12)) : static_cast<int>(uniform_int(rng, 3, 5));
  const int nb = (size + block - 1) / block;
  std::vector<double> level(static_cast<std::size_t>(nb) * nb);
  for (double& l : level) l = uniform01(rng) < 0.5 ? -amp / 2 : amp / 2;
  // low-frequency shading shared by both classes
  struct Wave {
    double a, u, v, phi;
  };
  Wave waves[3];
  for (auto& w : waves)
    w = {0.05 * uniform01(rng), static_cast<double>(uniform_int(rng, 0, 1)), static_cast<double>(uniform_int(rng, 0, 1)),
         2 * std::numbers::pi * uniform01(rng)};
  std::vector<double> data(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double v = mean + level[static_cast<std::size_t>(y / block) * nb + x / block];
      for (const auto& w : waves)
        v += w.a * std::cos(2 * std::numbers::pi * (w.u * x + w.v * y) / size + w.phi);
      data[static_cast<std::size_t>(y) * size + x] = std::clamp(v, 0.0, 1.0);
    }
  return GrayImage(size, size, std::move(data));
}

}  // namespace

GrayImage synth_image(SynthVariant variant, int label, int size, Rng& rng) {
  if (size < 4) throw std::invalid_argument("synthetic images must be at least 4x4");
  return variant == SynthVariant::Texture ? sawtooth(label, size, rng) : mosaic(label, size, rng);
}

Manifest generate_synthetic(const SynthOptions& opt, const std::filesystem::path& out_dir) {
  if (opt.per_class < 3) throw std::invalid_argument("need at least 3 images per class");
  if (!(opt.test_frac >= 0 && opt.test_frac < 1)) throw std::invalid_argument("test_frac must be in [0,1)");
  Manifest m;
  m.base_dir = out_dir;
  for (int label = 0; label <= 1; ++label) {
    const auto n_test = static_cast<int>(std::floor(opt.test_frac * opt.per_class));
    for (int i = 0; i < opt.per_class; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04d", label == 0 ? "b" : "m", i);
      Rng rng = derive_rng({opt.seed, static_cast<std::uint64_t>(label), static_cast<std::uint64_t>(i), 0x5e7});
      const GrayImage img = synth_image(opt.variant, label, opt.size, rng);
      const std::filesystem::path rel = std::filesystem::path("images") / (std::string(id) + ".pgm");
      save_pgm(img, out_dir / rel, opt.bit_depth);
      // images are i.i.d., so the last n_test of each class form the test split
      m.records.push_back({id, rel, label, i >= opt.per_class - n_test ? Split::Test : Split::Train});
    }
  }
  m = split_train_val(m, opt.train_frac, opt.seed);
  m.base_dir = out_dir;
  write_manifest(m, out_dir / "manifest.csv");
  return m;
}

}  // namespace mammofuse
