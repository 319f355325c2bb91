#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mammofuse/features.hpp"
#include "mammofuse/metrics.hpp"
#include "mammofuse/nn.hpp"
#include "mammofuse/pipeline.hpp"
#include "mammofuse/train.hpp"

namespace mammofuse {

/// Operating point for PRC/REC/F1/ACC: a fixed probability, or the threshold
/// that maximizes F1 on the validation split.
struct ThresholdSpec {
  bool val_optimal = false;
  double value = 0.5;

  /// "0.5", "0.3", ... or "val".
  static ThresholdSpec parse(const std::string& s);
  std::string describe() const;
};

struct ExperimentSpec {
  std::vector<std::string> setups{"baseline"};
  /// Aggregates report mean and sample std over these seeds.
  std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  TrainConfig train;
  ModelArch arch;
  AugmentPolicy policy;
  KernelSpec kernels;
  ThresholdSpec threshold;
  double split_frac = 0.8;
  std::uint64_t split_seed = 0;
  std::filesystem::path manifest;
  std::filesystem::path embeddings;
  std::filesystem::path out_dir = "results";
  bool write_checkpoints = true;
  int jobs = 1;

  /// Throws std::invalid_argument for unknown setups, no seeds, or invalid
  /// nested configs.
  void validate() const;
};

/// Flat `key = value` config with a mandatory `schema_version = 1` line;
/// '#' starts a comment. Unknown keys are errors.
void apply_config(ExperimentSpec& spec, const std::string& text, const std::string& source);
void apply_config_file(ExperimentSpec& spec, const std::filesystem::path& path);
/// Every key apply_config accepts, with its current value, as config text.
std::string dump_config(const ExperimentSpec& spec);

std::vector<std::string> parse_setup_list(const std::string& csv);
std::vector<std::uint64_t> parse_seed_list(const std::string& csv);

// ---- run --------------------------------------------------------------------

struct CellResult {
  std::string setup;
  std::uint64_t seed = 0;
  RunMetrics metrics;
  std::vector<EpochRecord> history;
  int best_epoch = -1;
};

struct RunSummary {
  std::vector<CellResult> cells;      // successful cells, spec order
  std::vector<std::string> failures;  // one message per failed setup
  bool ok() const { return failures.empty(); }
};

/// Trains and evaluates every (setup, seed) cell. Writes, under out_dir:
///   metrics.csv, aggregate.csv, roc/<setup>.csv, history/<setup>_<seed>.csv,
///   checkpoints/<setup>_<seed>.bin.
/// A failing cell aborts the rest of its setup; other setups still run.
RunSummary cmd_run(const ExperimentSpec& spec, std::ostream* log = nullptr);

/// The manifest a run trains on: val assigned with split_train_val when the
/// file has no val records.
Manifest prepare_manifest(const ExperimentSpec& spec);

std::string encode_metrics(const std::vector<CellResult>& cells);
std::string encode_aggregate(const std::vector<std::string>& setups, const std::vector<Aggregate>& aggs);
std::string encode_roc_band(const std::string& setup, const Aggregate& agg);

// ---- report -----------------------------------------------------------------

struct MetricsRow {
  std::string setup;
  std::uint64_t seed = 0;
  double auc = 0, f1 = 0, prc = 0, rec = 0, acc = 0;
};

struct SetupSummary {
  std::string setup;
  std::size_t runs = 0;
  MeanStd auc, f1, prc, rec, acc;
};

/// Throws FormatError naming `source` for a malformed file.
std::vector<MetricsRow> parse_metrics(const std::string& text, const std::string& source);
/// Per-setup means in order of first appearance.
std::vector<SetupSummary> summarize(const std::vector<MetricsRow>& rows);
/// Descending by mean AUC (resp. F1); ties by setup name ascending.
std::vector<SetupSummary> rank_by_auc(std::vector<SetupSummary> s);
std::vector<SetupSummary> rank_by_f1(std::vector<SetupSummary> s);

std::string format_table_text(const std::vector<SetupSummary>& rows, const std::string& title);
std::string format_table_csv(const std::vector<SetupSummary>& rows);

/// Setups whose ROC bands accompany a ranking: the top `k` plus baseline when
/// present and not already included.
std::vector<std::string> band_setups(const std::vector<SetupSummary>& ranked, std::size_t k = 3);

struct ReportOutput {
  std::vector<SetupSummary> by_auc;
  std::vector<SetupSummary> by_f1;
  std::vector<std::string> missing_roc;  // band files that could not be found
};

/// Reads metrics.csv, writes table_auc.{txt,csv}, table_f1.{txt,csv} and
/// roc_top_auc.csv / roc_top_f1.csv into out_dir. Bands are copied from
/// roc_dir (default: <metrics dir>/roc).
ReportOutput cmd_report(const std::filesystem::path& metrics_csv, const std::filesystem::path& out_dir,
                        std::filesystem::path roc_dir = {});

// ---- ingest -----------------------------------------------------------------

struct IngestResult {
  Manifest manifest;
  std::vector<std::string> unreadable;
  std::string summary;
};

/// Builds a manifest from <src>/<class>/... or <src>/<split>/<class>/...
/// (class folders starting with "benign" or "malignant", split folders
/// train/val/test). Records are sorted by path. For the flat layout each class
/// is shuffled with `seed` and floor(test_frac * n) records go to test.
/// Throws std::invalid_argument when no usable image is found.
IngestResult cmd_ingest(const std::filesystem::path& src, const std::filesystem::path& out_manifest,
                        double test_frac = 0.2, std::uint64_t seed = 0);

/// Reads an EMB1 file, or a CSV of `id,v0,v1,...` rows, and writes it as EMB1.
/// When a manifest is given, every record id must be covered.
EmbeddingTable cmd_embed_import(const std::filesystem::path& input, const std::filesystem::path& output,
                                const std::filesystem::path& manifest = {});

}  // namespace mammofuse
