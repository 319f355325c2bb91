// mammofuse command-line front end: ingest, embed-import, synth, run, report.

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "mammofuse/experiment.hpp"
#include "mammofuse/synth.hpp"

using namespace mammofuse;

int main(int argc, char** argv) {
  CLI::App app{"Hybrid handcrafted/deep feature fusion for mammography ROI classification"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build a manifest CSV from class-labelled image folders");
  std::string ingest_src, ingest_out = "manifest.csv";
  double ingest_test_frac = 0.2;
  std::uint64_t ingest_seed = 0;
  ingest->add_option("src", ingest_src, "Directory with <class>/ or <split>/<class>/ folders")->required();
  ingest->add_option("--out", ingest_out, "Manifest to write");
  ingest->add_option("--test-frac", ingest_test_frac, "Per-class test fraction for the flat layout");
  ingest->add_option("--seed", ingest_seed, "Seed for the flat-layout test holdout");

  // embed-import
  auto* embed = app.add_subcommand("embed-import", "Validate or convert an embedding table to EMB1");
  std::string embed_in, embed_out, embed_manifest;
  embed->add_option("input", embed_in, "EMB1 file or CSV of id,v0,v1,...")->required();
  embed->add_option("--out", embed_out, "EMB1 file to write (omit to only validate)");
  embed->add_option("--manifest", embed_manifest, "Require an embedding for every manifest id");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-class dataset with a manifest");
  std::string synth_out = "synthetic", synth_variant = "texture";
  SynthOptions synth_opt;
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--variant", synth_variant, "texture | edges");
  synth->add_option("--per-class", synth_opt.per_class, "Images per class");
  synth->add_option("--size", synth_opt.size, "Image side length");
  synth->add_option("--seed", synth_opt.seed, "Generator seed");

  // run
  auto* run = app.add_subcommand("run", "Train and evaluate every (setup, seed) cell");
  ExperimentSpec spec;
  std::string setups = "baseline", seeds = "0,1,2,3", config, threshold = "0.5", manifest, embeddings, out = "results";
  run->add_option("--manifest", manifest, "Manifest CSV")->required();
  run->add_option("--embeddings", embeddings, "EMB1 table (required by dino setups)");
  run->add_option("--setups", setups, "Comma-separated setup names, or 'grid' for all sixteen");
  run->add_option("--seeds", seeds,
                  "Comma-separated seeds (default 0,1,2,3)");
  run->add_option("--out", out, "Output directory");
  run->add_option("--config", config, "key = value config file (schema_version = 1)");
  run->add_option("--threshold", threshold, "Operating threshold in [0,1], or 'val' for the val-optimal F1 point");
  run->add_option("--jobs", spec.jobs, "Setups trained concurrently");
  bool no_checkpoints = false;
  run->add_flag("--no-checkpoints", no_checkpoints, "Skip writing checkpoint files");
  bool dump = false;
  run->add_flag("--print-config", dump, "Print the effective configuration and exit");

  // report
  auto* report = app.add_subcommand("report", "Rank setups by AUC and F1 and collect ROC bands");
  std::string report_metrics, report_out, report_roc;
  report->add_option("metrics", report_metrics, "metrics.csv written by run")->required();
  report->add_option("--out", report_out, "Output directory (default: <metrics dir>/report)");
  report->add_option("--roc-dir", report_roc, "Directory with <setup>.csv bands (default: <metrics dir>/roc)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      auto res = cmd_ingest(ingest_src, ingest_out, ingest_test_frac, ingest_seed);
      for (const auto& u : res.unreadable) std::cerr << "unreadable: " << u << "\n";
      std::cout << res.summary << "\n";
      return 0;
    }
    if (*embed) {
      auto table = cmd_embed_import(embed_in, embed_out, embed_manifest);
      std::cout << table.size() << " embeddings of dim " << table.dim() << (embed_out.empty() ? " (valid)" : " written") << "\n";
      return 0;
    }
    if (*synth) {
      synth_opt.variant = parse_synth_variant(synth_variant);
      auto m = generate_synthetic(synth_opt, synth_out);
      std::cout << m.records.size() << " images written to " << synth_out << "\n";
      return 0;
    }
    if (*run) {
      if (!config.empty()) apply_config_file(spec, config);
      spec.setups = parse_setup_list(setups);
      spec.seeds = parse_seed_list(seeds);
      spec.threshold = ThresholdSpec::parse(threshold);
      spec.manifest = manifest;
      spec.embeddings = embeddings;
      spec.out_dir = out;
      spec.write_checkpoints = !no_checkpoints;
      if (dump) {
        std::cout << dump_config(spec);
        return 0;
      }
      auto summary = cmd_run(spec, &std::cerr);
      std::cout << summary.cells.size() << " runs written to " << out << "\n";
      for (const auto& f : summary.failures) std::cerr << "failed: " << f << "\n";
      return summary.ok() ? 0 : 1;
    }
    if (*report) {
      std::filesystem::path mp = report_metrics;
      std::filesystem::path outp = report_out.empty() ? mp.parent_path() / "report" : std::filesystem::path(report_out);
      auto rep = cmd_report(mp, outp, report_roc);
      std::cout << format_table_text(rep.by_auc, "Mean results, sorted by descending mean AUC") << "\n"
                << format_table_text(rep.by_f1, "Mean results, sorted by descending mean F1");
      for (const auto& m : rep.missing_roc) std::cerr << "missing ROC band: " << m << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
