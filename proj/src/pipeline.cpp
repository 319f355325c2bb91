#include "mammofuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mammofuse/error.hpp"
#include "mammofuse/io_util.hpp"

namespace mammofuse {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

std::string label_name(int label) { return label == 1 ? "malignant" : "benign"; }

int parse_label(const std::string& s) {
  if (s == "benign") return 0;
  if (s == "malignant") return 1;
  throw std::invalid_argument("unknown label '" + s + "'");
}

void Manifest::validate() const {
  std::set<std::string> ids, paths;
  for (const auto& r : records) {
    if (r.id.empty()) throw std::invalid_argument("manifest record with empty id");
    if (!ids.insert(r.id).second) throw std::invalid_argument("duplicate manifest id '" + r.id + "'");
    if (!paths.insert(r.path.string()).second)
      throw std::invalid_argument("duplicate manifest path '" + r.path.string() + "'");
    if (r.label != 0 && r.label != 1) throw std::invalid_argument("bad label for '" + r.id + "'");
  }
}

std::vector<std::size_t> Manifest::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == s) out.push_back(i);
  return out;
}

std::size_t Manifest::count(Split s, int label) const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(),
                                                [&](const auto& r) { return r.split == s && r.label == label; }));
}

std::filesystem::path Manifest::resolve(const ManifestRecord& r) const {
  return r.path.is_absolute() || base_dir.empty() ? r.path : base_dir / r.path;
}

Manifest read_manifest(const std::filesystem::path& path) {
  const std::string text = io::read_text(path);
  std::istringstream in(text);
  std::string line;
  Manifest m;
  m.base_dir = path.parent_path();
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (io::trim(line).empty()) continue;
    auto f = io::split_csv(line);
    if (!header) {
      if (f != std::vector<std::string>{"id", "path", "label", "split"})
        throw FormatError("manifest '" + path.string() + "' must start with header id,path,label,split");
      header = true;
      continue;
    }
    if (f.size() != 4)
      throw FormatError("manifest '" + path.string() + "' line " + std::to_string(lineno) + ": expected 4 fields");
    try {
      m.records.push_back({f[0], f[1], parse_label(f[2]), parse_split(f[3])});
    } catch (const std::invalid_argument& e) {
      throw FormatError("manifest '" + path.string() + "' line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header) throw FormatError("manifest '" + path.string() + "' is empty");
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError("manifest '" + path.string() + "': " + e.what());
  }
  return m;
}

std::string encode_manifest(const Manifest& m) {
  std::string out = "id,path,label,split\n";
  for (const auto& r : m.records)
    out += r.id + "," + r.path.generic_string() + "," + label_name(r.label) + "," + to_string(r.split) + "\n";
  return out;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  m.validate();
  io::write_file_atomic(path, encode_manifest(m));
}

Manifest split_train_val(const Manifest& m, double frac, std::uint64_t seed) {
  if (!(frac > 0 && frac < 1)) throw std::invalid_argument("split fraction must be in (0,1)");
  Manifest out = m;
  for (int label = 0; label <= 1; ++label) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < m.records.size(); ++i)
      if (m.records[i].split != Split::Test && m.records[i].label == label) pool.push_back(i);
    if (pool.size() < 2)
      throw std::invalid_argument("class '" + label_name(label) + "' has " + std::to_string(pool.size()) +
                                  " non-test records; need at least 2 to split");
    Rng rng = derive_rng({seed, static_cast<std::uint64_t>(label), 0x5b1d});
    shuffle(pool.begin(), pool.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::floor(frac * static_cast<double>(pool.size())));
    for (std::size_t k = 0; k < pool.size(); ++k) out.records[pool[k]].split = k < n_train ? Split::Train : Split::Val;
  }
  return out;
}

void AugmentPolicy::validate() const {
  if (train_resize < 1 || eval_resize < 1 || crop < 1) throw std::invalid_argument("AugmentPolicy: sizes must be >= 1");
  if (crop > train_resize) throw std::invalid_argument("AugmentPolicy: crop exceeds train_resize");
  if (!(scale_lo > 0 && scale_lo <= scale_hi && scale_hi <= 1))
    throw std::invalid_argument("AugmentPolicy: need 0 < scale_lo <= scale_hi <= 1");
  if (!(flip_p >= 0 && flip_p <= 1)) throw std::invalid_argument("AugmentPolicy: flip_p outside [0,1]");
  for (double s : stats.std)
    if (!(s > 0)) throw std::invalid_argument("AugmentPolicy: std must be positive");
}

std::shared_ptr<const GrayImage> ImageCache::get(const std::filesystem::path& path) {
  const std::string key = path.string();
  {
    std::lock_guard lock(mu_);
    if (auto it = images_.find(key); it != images_.end()) return it->second;
  }
  auto img = std::make_shared<const GrayImage>(load_gray(path));
  std::lock_guard lock(mu_);
  const std::size_t bytes = img->size() * sizeof(double);
  if (used_ + bytes <= max_bytes_) {
    images_.emplace(key, img);
    used_ += bytes;
  }
  return img;
}

Example make_example(const ExampleContext& ctx, const GrayImage& src, int label, const std::string& id, Mode mode,
                     Rng& rng) {
  const AugmentPolicy& pol = ctx.policy;
  GrayImage img;
  if (mode == Mode::Train) {
    img = resize_bilinear(src, pol.train_resize, pol.train_resize);
    img = random_resized_crop(img, pol.crop, pol.scale_lo, pol.scale_hi, rng);
    img = hflip(img, pol.flip_p, rng);
  } else {
    img = resize_bilinear(src, pol.eval_resize, pol.eval_resize);
  }
  Example ex;
  ex.image = normalize(pack_early(img, ctx.setup, ctx.kernels), pol.stats);
  ex.label = label;
  if (ctx.setup.use_dino) {
    if (!ctx.embeddings) throw MissingEmbedding(id);
    const auto& v = ctx.embeddings->lookup(id);
    ex.embedding.assign(v.values.begin(), v.values.end());
  }
  return ex;
}

Example make_example(const ExampleContext& ctx, std::size_t record, Mode mode, Rng& rng) {
  const auto& rec = ctx.manifest->records.at(record);
  const auto path = ctx.manifest->resolve(rec);
  std::shared_ptr<const GrayImage> img;
  if (ctx.cache) img = ctx.cache->get(path);
  else img = std::make_shared<const GrayImage>(load_gray(path));
  Example ex = make_example(ctx, *img, rec.label, rec.id, mode, rng);
  ex.record = record;
  return ex;
}

Rng example_rng(std::uint64_t seed, int epoch, std::size_t record) {
  return derive_rng({seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(record), 0xe8a});
}

std::vector<std::vector<std::size_t>> batches(const Manifest& m, Split split, int batch_size, std::uint64_t seed,
                                              int epoch) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  auto idx = m.indices(split);
  if (split == Split::Train) {
    Rng rng = derive_rng({seed, static_cast<std::uint64_t>(epoch), 0xba7c});
    shuffle(idx.begin(), idx.end(), rng);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < idx.size(); i += static_cast<std::size_t>(batch_size))
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(i),
                     idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), i + batch_size)));
  return out;
}

std::vector<Example> materialize(const ExampleContext& ctx, const std::vector<std::size_t>& batch, Mode mode,
                                 std::uint64_t seed, int epoch) {
  std::vector<Example> out;
  out.reserve(batch.size());
  for (std::size_t r : batch) {
    Rng rng = example_rng(seed, epoch, r);
    out.push_back(make_example(ctx, r, mode, rng));
  }
  return out;
}

}  // namespace mammofuse
