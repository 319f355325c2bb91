#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "mammofuse/features.hpp"
#include "mammofuse/fusion.hpp"
#include "mammofuse/image.hpp"
#include "mammofuse/rng.hpp"

namespace mammofuse {

enum class Split { Train, Val, Test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

/// 0 = benign, 1 = malignant.
std::string label_name(int label);
int parse_label(const std::string& s);

struct ManifestRecord {
  std::string id;
  std::filesystem::path path;  // relative paths resolve against Manifest::base_dir
  int label = 0;
  Split split = Split::Train;

  bool operator==(const ManifestRecord&) const = default;
};

struct Manifest {
  std::vector<ManifestRecord> records;
  std::filesystem::path base_dir;

  /// Throws std::invalid_argument on duplicate ids or paths.
  void validate() const;
  std::vector<std::size_t> indices(Split s) const;
  std::size_t count(Split s, int label) const;
  std::filesystem::path resolve(const ManifestRecord& r) const;
};

/// CSV with header `id,path,label,split`; labels benign/malignant.
Manifest read_manifest(const std::filesystem::path& path);
std::string encode_manifest(const Manifest& m);
void write_manifest(const Manifest& m, const std::filesystem::path& path);

/// Stratified split of every non-test record: per class, shuffle with the seed
/// and send the first floor(frac * n) to train, the rest to val. Throws
/// std::invalid_argument when a class has fewer than 2 records.
Manifest split_train_val(const Manifest& m, double frac, std::uint64_t seed);

struct AugmentPolicy {
  int train_resize = 600;
  int eval_resize = 512;
  int crop = 512;
  double scale_lo = 0.9;
  double scale_hi = 1.0;
  double flip_p = 0.5;
  ChannelStats stats = ChannelStats::imagenet();

  void validate() const;
  /// Side length of every produced example.
  int output_size() const { return crop; }
};

/// Decoded-image cache shared by all examples of a run. Thread-safe. Images are
/// kept until the byte budget is spent; later ones are decoded on every call.
class ImageCache {
public:
  explicit ImageCache(std::size_t max_bytes = std::size_t{1} << 30) : max_bytes_(max_bytes) {}
  std::shared_ptr<const GrayImage> get(const std::filesystem::path& path);

private:
  std::size_t max_bytes_;
  std::size_t used_ = 0;
  std::mutex mu_;
  std::unordered_map<std::string, std::shared_ptr<const GrayImage>> images_;
};

enum class Mode { Train, Eval };

struct Example {
  NormalizedImage image;
  std::vector<double> embedding;  // empty unless the setup uses the embedding
  int label = 0;
  std::size_t record = 0;
};

/// Everything make_example needs besides the record and the rng.
struct ExampleContext {
  const Manifest* manifest = nullptr;
  FeatureConfig setup;
  KernelSpec kernels;
  AugmentPolicy policy;
  const EmbeddingTable* embeddings = nullptr;
  ImageCache* cache = nullptr;
};

/// Train: resize(train_resize) -> random_resized_crop(crop) -> hflip(flip_p)
///        -> pack_early -> normalize.
/// Eval:  resize(eval_resize) -> pack_early -> normalize.
/// Throws FormatError for unreadable images and MissingEmbedding when the
/// setup needs an embedding the table lacks.
Example make_example(const ExampleContext& ctx, std::size_t record, Mode mode, Rng& rng);
Example make_example(const ExampleContext& ctx, const GrayImage& img, int label, const std::string& id, Mode mode,
                     Rng& rng);

/// Augmentation stream of one record in one epoch.
Rng example_rng(std::uint64_t seed, int epoch, std::size_t record);

/// Record indices of `split` in batches of batch_size (last batch may be
/// short). Train batches are shuffled per (seed, epoch); val/test keep
/// manifest order.
std::vector<std::vector<std::size_t>> batches(const Manifest& m, Split split, int batch_size, std::uint64_t seed,
                                              int epoch);

/// Examples of one batch, each drawn from example_rng(seed, epoch, record).
std::vector<Example> materialize(const ExampleContext& ctx, const std::vector<std::size_t>& batch, Mode mode,
                                 std::uint64_t seed, int epoch);

}  // namespace mammofuse
