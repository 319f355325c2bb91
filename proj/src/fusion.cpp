#include "mammofuse/fusion.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mammofuse/error.hpp"
#include "mammofuse/io_util.hpp"

namespace mammofuse {

const std::vector<std::string>& canonical_setups() {
  static const std::vector<std::string> kSetups = {
      "d1",       "d2_LBP", "dino_d2", "d2",  "d1_LBP", "dino_d1", "dino_all", "baseline",
      "t_LBP",    "LBP",    "dino_LBP", "all", "t",      "dino_t",  "dino",     "frozen"};
  return kSetups;
}

std::string FeatureConfig::canonical_name() const {
  if (frozen) return "frozen";
  std::string name;
  auto add = [&](const char* tok) {
    if (!name.empty()) name += '_';
    name += tok;
  };
  if (use_dino) add("dino");
  if (use_d1 && use_d2 && use_t && use_lbp) {
    add("all");
    return name;
  }
  if (use_d1) add("d1");
  if (use_d2) add("d2");
  if (use_t) add("t");
  if (use_lbp) add("LBP");
  return name.empty() ? "baseline" : name;
}

FeatureConfig FeatureConfig::parse(const std::string& name) {
  FeatureConfig cfg;
  if (name == "frozen") {
    cfg.frozen = true;
  } else if (name != "baseline") {
    std::stringstream ss(name);
    std::string tok;
    while (std::getline(ss, tok, '_')) {
      bool* flag = nullptr;
      if (tok == "dino") flag = &cfg.use_dino;
      else if (tok == "d1") flag = &cfg.use_d1;
      else if (tok == "d2") flag = &cfg.use_d2;
      else if (tok == "t") flag = &cfg.use_t;
      else if (tok == "LBP") flag = &cfg.use_lbp;
      else if (tok == "all") {
        if (cfg.any_handcrafted()) throw std::invalid_argument("setup '" + name + "': 'all' mixed with other maps");
        cfg.use_d1 = cfg.use_d2 = cfg.use_t = cfg.use_lbp = true;
        continue;
      } else {
        throw std::invalid_argument("unknown setup token '" + tok + "' in '" + name + "'");
      }
      if (*flag) throw std::invalid_argument("setup '" + name + "' repeats '" + tok + "'");
      *flag = true;
    }
  }
  cfg.setup_name = cfg.canonical_name();
  if (cfg.setup_name != name)
    throw std::invalid_argument("setup '" + name + "' is not canonical (expected '" + cfg.setup_name + "')");
  return cfg;
}

RgbImage gray_to_rgb(const GrayImage& img) { return RgbImage(img, img, img); }

RgbImage pack_early(const GrayImage& img, const FeatureConfig& cfg, const KernelSpec& k) {
  std::vector<GrayImage> maps;
  if (cfg.use_d1) maps.push_back(d1_map(img, k).image);
  if (cfg.use_d2) maps.push_back(d2_map(img, k).image);
  if (cfg.use_t) maps.push_back(threshold_map(img, k.tau).image);

  GrayImage red = img;
  if (maps.size() == 1) {
    red = std::move(maps.front());
  } else if (!maps.empty()) {
    std::vector<double> acc(img.size(), 0.0);
    for (const auto& m : maps) {
      const auto d = m.data();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += d[i];
    }
    const double n = static_cast<double>(maps.size());
    for (double& v : acc) v = std::clamp(v / n, 0.0, 1.0);
    red = GrayImage(img.width(), img.height(), std::move(acc));
  }
  GrayImage blue = cfg.use_lbp ? lbp_map(img).image : img;
  return RgbImage(std::move(red), img, std::move(blue));
}

// ---- embeddings -------------------------------------------------------------

void EmbeddingTable::add(std::string id, EmbeddingVector v) {
  if (v.dim() != dim_)
    throw std::invalid_argument("embedding '" + id + "' has length " + std::to_string(v.dim()) +
                                ", table dim is " + std::to_string(dim_));
  for (float f : v.values)
    if (!std::isfinite(f)) throw std::invalid_argument("embedding '" + id + "' has a non-finite value");
  if (id.size() > std::numeric_limits<std::uint16_t>::max())
    throw std::invalid_argument("embedding id longer than 65535 bytes");
  if (!index_.emplace(id, entries_.size()).second)
    throw std::invalid_argument("duplicate embedding id '" + id + "'");
  entries_.emplace_back(std::move(id), std::move(v));
}

const EmbeddingVector& EmbeddingTable::lookup(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw MissingEmbedding(id);
  return entries_[it->second].second;
}

std::string encode_embeddings(const EmbeddingTable& table) {
  io::ByteWriter w;
  w.put_bytes("EMB1");
  w.put(static_cast<std::uint32_t>(table.size()));
  w.put(table.dim());
  for (const auto& [id, vec] : table.entries()) {
    w.put(static_cast<std::uint16_t>(id.size()));
    w.put_bytes(id);
    for (float f : vec.values) w.put(f);
  }
  return std::string(w.view());
}

EmbeddingTable decode_embeddings(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  io::ByteReader r(bytes, source);
  if (bytes.size() < 4 || r.get_bytes(4) != "EMB1") throw FormatError("bad magic in embedding file '" + source + "'");
  const auto count = r.get<std::uint32_t>();
  const auto dim = r.get<std::uint32_t>();
  EmbeddingTable table(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string id = r.get_bytes(len);
    EmbeddingVector v;
    v.values.resize(dim);
    for (auto& f : v.values) f = r.get<float>();
    if (table.contains(id)) throw FormatError("duplicate id '" + id + "' in embedding file '" + source + "'");
    try {
      table.add(std::move(id), std::move(v));
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string(e.what()) + " in '" + source + "'");
    }
  }
  if (r.remaining() != 0)
    throw FormatError("embedding file '" + source + "' has " + std::to_string(r.remaining()) +
                      " bytes after the last record: records do not match header dim " + std::to_string(dim));
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(io::read_file(path), path.string());
}

void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_embeddings(table));
}

std::vector<double> concat_late(std::span<const double> backbone, const EmbeddingVector& emb) {
  std::vector<double> out;
  out.reserve(backbone.size() + emb.dim());
  out.insert(out.end(), backbone.begin(), backbone.end());
  for (float f : emb.values) out.push_back(static_cast<double>(f));
  return out;
}

}  // namespace mammofuse
