#include <algorithm>

#include "mammofuse/error.hpp"
#include "mammofuse/io_util.hpp"
#include "mammofuse/train.hpp"

namespace mammofuse {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_string(io::ByteWriter& w, const std::string& s) {
  w.put(static_cast<std::uint16_t>(s.size()));
  w.put_bytes(s);
}

std::string get_string(io::ByteReader& r) { return r.get_bytes(r.get<std::uint16_t>()); }

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
  io::ByteWriter w;
  w.put_bytes("MFCK");
  w.put(kCheckpointVersion);

  const TrainConfig& c = ck.config;
  w.put(static_cast<std::int32_t>(c.epochs));
  w.put(static_cast<std::int32_t>(c.batch_size));
  w.put(c.base_lr);
  w.put(c.weight_decay);
  w.put(c.label_smooth);
  w.put(c.adam_beta1);
  w.put(c.adam_beta2);
  w.put(c.adam_eps);
  w.put(static_cast<std::int32_t>(c.sched_T));
  w.put(c.sched_gamma);
  w.put(static_cast<std::uint32_t>(c.unfreeze_epochs.size()));
  for (int e : c.unfreeze_epochs) w.put(static_cast<std::int32_t>(e));
  w.put(c.stage_lr_scale);
  w.put(c.seed);

  put_string(w, ck.setup);

  const ModelArch& a = ck.model.arch();
  w.put(static_cast<std::int32_t>(a.in_channels));
  w.put(static_cast<std::int32_t>(a.stem_channels));
  w.put(static_cast<std::uint32_t>(a.stage_channels.size()));
  for (int s : a.stage_channels) w.put(static_cast<std::int32_t>(s));
  w.put(static_cast<std::int32_t>(a.hidden));
  w.put(a.emb_dim);
  w.put(a.dropout_rate);

  const auto blocks = ck.model.blocks();
  w.put(static_cast<std::uint32_t>(blocks.size()));
  for (const auto& b : blocks) {
    put_string(w, b.name);
    w.put(static_cast<std::uint32_t>(b.shape.size()));
    for (int d : b.shape) w.put(static_cast<std::uint32_t>(d));
    for (double v : b.values) w.put(v);
  }
  return std::string(w.view());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  io::ByteReader r(bytes, source);
  if (bytes.size() < 4 || r.get_bytes(4) != "MFCK") throw FormatError("bad magic in checkpoint '" + source + "'");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint '" + source + "' has unsupported version " + std::to_string(version));

  Checkpoint ck;
  TrainConfig& c = ck.config;
  c.epochs = r.get<std::int32_t>();
  c.batch_size = r.get<std::int32_t>();
  c.base_lr = r.get<double>();
  c.weight_decay = r.get<double>();
  c.label_smooth = r.get<double>();
  c.adam_beta1 = r.get<double>();
  c.adam_beta2 = r.get<double>();
  c.adam_eps = r.get<double>();
  c.sched_T = r.get<std::int32_t>();
  c.sched_gamma = r.get<double>();
  c.unfreeze_epochs.resize(r.get<std::uint32_t>());
  for (int& e : c.unfreeze_epochs) e = r.get<std::int32_t>();
  c.stage_lr_scale = r.get<double>();
  c.seed = r.get<std::uint64_t>();

  ck.setup = get_string(r);

  ModelArch a;
  a.in_channels = r.get<std::int32_t>();
  a.stem_channels = r.get<std::int32_t>();
  const auto nstages = r.get<std::uint32_t>();
  if (nstages > 64) throw FormatError("checkpoint '" + source + "' declares " + std::to_string(nstages) + " stages");
  a.stage_channels.resize(nstages);
  for (int& s : a.stage_channels) s = r.get<std::int32_t>();
  a.hidden = r.get<std::int32_t>();
  a.emb_dim = r.get<std::uint32_t>();
  a.dropout_rate = r.get<double>();
  try {
    ck.model = Model::init(a, 0);
  } catch (const std::invalid_argument& e) {
    throw FormatError("checkpoint '" + source + "' has an invalid architecture: " + e.what());
  }

  auto blocks = ck.model.blocks();
  if (r.get<std::uint32_t>() != blocks.size())
    throw FormatError("checkpoint '" + source + "' parameter count does not match its architecture");
  for (auto& b : blocks) {
    const std::string name = get_string(r);
    if (name != b.name) throw FormatError("checkpoint '" + source + "': expected block '" + b.name + "', found '" + name + "'");
    std::vector<int> shape(r.get<std::uint32_t>());
    for (int& d : shape) d = static_cast<int>(r.get<std::uint32_t>());
    if (shape != b.shape) throw FormatError("checkpoint '" + source + "': shape mismatch for '" + name + "'");
    for (double& v : b.values) v = r.get<double>();
  }
  if (r.remaining() != 0) throw FormatError("checkpoint '" + source + "' has trailing bytes");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

}  // namespace mammofuse
