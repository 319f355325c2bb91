#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mammofuse/metrics.hpp"
#include "mammofuse/nn.hpp"
#include "mammofuse/pipeline.hpp"

namespace mammofuse {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double val_auc = 0;
  double lr = 0;
  std::size_t trainable_params = 0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainResult {
  Model model;  // parameters of the epoch with the highest validation AUC
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_auc = 0;
};

/// Called after every epoch; for progress reporting.
using EpochObserver = std::function<void(const EpochRecord&)>;

/// Mini-batch training of `arch` on ctx.manifest's train split with the
/// staged-unfreezing schedule; model selection on the val split. The
/// embedding width is taken from ctx.embeddings when the setup uses it.
/// Throws TrainingError for an empty split, a non-finite loss or gradient, and
/// MissingEmbedding for an uncovered id.
TrainResult train(const ExampleContext& ctx, const TrainConfig& cfg, ModelArch arch,
                  const EpochObserver& observer = {});

/// Eval-mode sigmoid probabilities for every record of `split`, manifest order.
ScoredSet predict(const Model& model, const ExampleContext& ctx, Split split);

std::string encode_history(const std::vector<EpochRecord>& history);

// ---- checkpoints ------------------------------------------------------------

struct Checkpoint {
  Model model;
  TrainConfig config;
  std::string setup;
};

/// Versioned little-endian blob: "MFCK", u32 version, TrainConfig, setup name,
/// ModelArch, then every parameter array as (name, shape, float64 values).
std::string encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source);
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mammofuse
