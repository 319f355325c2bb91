#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mammofuse/features.hpp"
#include "mammofuse/image.hpp"

namespace mammofuse {

/// Which handcrafted and embedding features one ablation setup uses.
///
/// Setup names are underscore-joined tokens in the order dino, d1, d2, t, LBP
/// ("d2_LBP", "dino_d1"). "baseline" has no features; "all" is d1+d2+t+LBP;
/// "dino_all" adds the embedding to "all". "frozen" packs like baseline but the
/// backbone is never unfrozen during training.
struct FeatureConfig {
  bool use_d1 = false;
  bool use_d2 = false;
  bool use_t = false;
  bool use_lbp = false;
  bool use_dino = false;
  bool frozen = false;
  std::string setup_name = "baseline";

  /// Parses a setup label; throws std::invalid_argument for unknown or
  /// non-canonical labels.
  static FeatureConfig parse(const std::string& name);
  /// Canonical label for the flag set.
  std::string canonical_name() const;

  bool any_handcrafted() const noexcept { return use_d1 || use_d2 || use_t || use_lbp; }
  /// True for "baseline" and "frozen": no feature of any kind.
  bool is_baseline_packing() const noexcept { return !any_handcrafted() && !use_dino; }

  bool operator==(const FeatureConfig&) const = default;
};

/// The sixteen setups of the ablation grid, in canonical order.
const std::vector<std::string>& canonical_setups();

RgbImage gray_to_rgb(const GrayImage& img);

/// Early fusion. R = mean of the selected d1/d2/t maps (gray if none), G = gray,
/// B = LBP map if selected (gray otherwise). use_dino does not affect packing.
RgbImage pack_early(const GrayImage& img, const FeatureConfig& cfg, const KernelSpec& k = {});

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

/// Precomputed per-sample embeddings, read-only once loaded. Entries keep
/// their insertion order so a written table reloads byte-identically.
class EmbeddingTable {
public:
  explicit EmbeddingTable(std::uint32_t dim = 384) : dim_(dim) {}

  std::uint32_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// Throws std::invalid_argument on a duplicate id, wrong length or a
  /// non-finite value.
  void add(std::string id, EmbeddingVector v);
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  /// Throws MissingEmbedding.
  const EmbeddingVector& lookup(const std::string& id) const;

  const std::vector<std::pair<std::string, EmbeddingVector>>& entries() const noexcept { return entries_; }

  bool operator==(const EmbeddingTable& o) const { return dim_ == o.dim_ && entries_ == o.entries_; }

private:
  std::uint32_t dim_;
  std::vector<std::pair<std::string, EmbeddingVector>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// EMB1 layout: "EMB1", u32 count, u32 dim, then per record u16 id length,
/// id bytes (UTF-8), dim float32 values; all little-endian.
EmbeddingTable load_embeddings(const std::filesystem::path& path);
void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
std::string encode_embeddings(const EmbeddingTable& table);
EmbeddingTable decode_embeddings(const std::vector<std::uint8_t>& bytes, const std::string& source);

/// Late fusion: backbone features first, embedding after.
std::vector<double> concat_late(std::span<const double> backbone, const EmbeddingVector& emb);

}  // namespace mammofuse
