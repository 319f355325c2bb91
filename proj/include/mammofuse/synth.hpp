#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mammofuse/image.hpp"
#include "mammofuse/pipeline.hpp"

namespace mammofuse {

/// Texture: both classes are vertical sawtooth ramps with the same intensity
/// distribution; benign ramps rise downward, malignant ramps rise upward.
/// Edges: piecewise-constant block mosaics with matched mean; malignant
/// mosaics use smaller blocks, so they have a higher edge density.
enum class SynthVariant { Texture, Edges };

SynthVariant parse_synth_variant(const std::string& s);
std::string to_string(SynthVariant v);

GrayImage synth_image(SynthVariant variant, int label, int size, Rng& rng);

struct SynthOptions {
  SynthVariant variant = SynthVariant::Texture;
  int per_class = 500;
  int size = 64;
  std::uint64_t seed = 0;
  double test_frac = 0.2;   // per class, before the train/val split
  double train_frac = 0.8;  // of the remaining records
  int bit_depth = 16;
};

/// Writes <out_dir>/images/<id>.pgm and <out_dir>/manifest.csv and returns the
/// manifest (base_dir = out_dir), already split into train/val/test.
Manifest generate_synthetic(const SynthOptions& opt, const std::filesystem::path& out_dir);

}  // namespace mammofuse
