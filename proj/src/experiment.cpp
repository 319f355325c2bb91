#include "mammofuse/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mammofuse/error.hpp"
#include "mammofuse/io_util.hpp"

namespace mammofuse {

namespace fs = std::filesystem;

// ---- threshold / spec -------------------------------------------------------

ThresholdSpec ThresholdSpec::parse(const std::string& s) {
  ThresholdSpec t;
  if (s == "val") {
    t.val_optimal = true;
    return t;
  }
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !(v >= 0 && v <= 1))
    throw std::invalid_argument("threshold must be a number in [0,1] or 'val', got '" + s + "'");
  t.value = v;
  return t;
}

std::string ThresholdSpec::describe() const { return val_optimal ? "val" : io::fmt_real(value, 6); }

void ExperimentSpec::validate() const {
  if (setups.empty()) throw std::invalid_argument("no setups requested");
  const auto& canon = canonical_setups();
  std::set<std::string> seen;
  for (const auto& s : setups) {
    if (std::find(canon.begin(), canon.end(), s) == canon.end())
      throw std::invalid_argument("unknown setup '" + s + "'");
    if (!seen.insert(s).second) throw std::invalid_argument("setup '" + s + "' listed twice");
  }
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw std::invalid_argument("seeds must be distinct");
  if (!(split_frac > 0 && split_frac < 1)) throw std::invalid_argument("split_frac must be in (0,1)");
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  train.validate();
  arch.validate();
  policy.validate();
  kernels.validate();
}

std::vector<std::string> parse_setup_list(const std::string& csv) {
  if (csv == "grid") return canonical_setups();
  std::vector<std::string> out;
  for (auto& s : io::split_csv(csv))
    if (!s.empty()) out.push_back(s);
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> out;
  for (auto& s : io::split_csv(csv)) {
    if (s.empty()) continue;
    if (!std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); }))
      throw std::invalid_argument("seed '" + s + "' is not a non-negative integer");
    out.push_back(std::stoull(s));
  }
  return out;
}

// ---- config file ------------------------------------------------------------

namespace {

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("not a number: '" + v + "'");
  return d;
}

int to_int(const std::string& v) {
  std::size_t used = 0;
  const int i = std::stoi(v, &used);
  if (used != v.size()) throw std::invalid_argument("not an integer: '" + v + "'");
  return i;
}

std::vector<int> to_int_list(const std::string& v) {
  std::vector<int> out;
  for (auto& s : io::split_csv(v))
    if (!s.empty()) out.push_back(to_int(s));
  return out;
}

std::array<double, 3> to_triple(const std::string& v) {
  auto f = io::split_csv(v);
  if (f.size() != 3) throw std::invalid_argument("expected three comma-separated values");
  return {to_double(f[0]), to_double(f[1]), to_double(f[2])};
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

// shortest text that parses back to the same double
std::string g(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct KernelNames {
  std::string d1 = "sobel";
  std::string d2 = "laplace4";
};

using Setter = std::function<void(ExperimentSpec&, KernelNames&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentSpec&, const KernelNames&)>;

struct Key {
  Setter set;
  Getter get;
};

const std::map<std::string, Key>& config_keys() {
  static const std::map<std::string, Key> keys = [] {
    std::map<std::string, Key> k;
#define REAL_KEY(name, field) \
  k[name] = {[](ExperimentSpec& s, KernelNames&, const std::string& v) { s.field = to_double(v); }, \
             [](const ExperimentSpec& s, const KernelNames&) { return g(s.field); }}
#define INT_KEY(name, field) \
  k[name] = {[](ExperimentSpec& s, KernelNames&, const std::string& v) { s.field = to_int(v); }, \
             [](const ExperimentSpec& s, const KernelNames&) { return std::to_string(s.field); }}
    INT_KEY("epochs", train.epochs);
    INT_KEY("batch_size", train.batch_size);
    REAL_KEY("base_lr", train.base_lr);
    REAL_KEY("weight_decay", train.weight_decay);
    REAL_KEY("label_smooth", train.label_smooth);
    REAL_KEY("adam_beta1", train.adam_beta1);
    REAL_KEY("adam_beta2", train.adam_beta2);
    REAL_KEY("adam_eps", train.adam_eps);
    INT_KEY("sched_T", train.sched_T);
    REAL_KEY("sched_gamma", train.sched_gamma);
    REAL_KEY("stage_lr_scale", train.stage_lr_scale);
    INT_KEY("train_resize", policy.train_resize);
    INT_KEY("eval_resize", policy.eval_resize);
    INT_KEY("crop", policy.crop);
    REAL_KEY("scale_lo", policy.scale_lo);
    REAL_KEY("scale_hi", policy.scale_hi);
    REAL_KEY("flip_p", policy.flip_p);
    INT_KEY("stem_channels", arch.stem_channels);
    INT_KEY("hidden", arch.hidden);
    REAL_KEY("dropout", arch.dropout_rate);
    REAL_KEY("split_frac", split_frac);
    REAL_KEY("tau", kernels.tau);
#undef REAL_KEY
#undef INT_KEY
    k["split_seed"] = {[](ExperimentSpec& s, KernelNames&, const std::string& v) { s.split_seed = std::stoull(v); },
                       [](const ExperimentSpec& s, const KernelNames&) { return std::to_string(s.split_seed); }};
    k["unfreeze_epochs"] = {
        [](ExperimentSpec& s, KernelNames&, const std::string& v) { s.train.unfreeze_epochs = to_int_list(v); },
        [](const ExperimentSpec& s, const KernelNames&) { return join_ints(s.train.unfreeze_epochs); }};
    k["stage_channels"] = {
        [](ExperimentSpec& s, KernelNames&, const std::string& v) { s.arch.stage_channels = to_int_list(v); },
        [](const ExperimentSpec& s, const KernelNames&) { return join_ints(s.arch.stage_channels); }};
    k["norm_mean"] = {[](ExperimentSpec& s, KernelNames&, const std::string& v) { s.policy.stats.mean = to_triple(v); },
                      [](const ExperimentSpec& s, const KernelNames&) {
                        const auto& m = s.policy.stats.mean;
                        return g(m[0]) + "," + g(m[1]) + "," + g(m[2]);
                      }};
    k["norm_std"] = {[](ExperimentSpec& s, KernelNames&, const std::string& v) { s.policy.stats.std = to_triple(v); },
                     [](const ExperimentSpec& s, const KernelNames&) {
                       const auto& m = s.policy.stats.std;
                       return g(m[0]) + "," + g(m[1]) + "," + g(m[2]);
                     }};
    k["d1_kernel"] = {[](ExperimentSpec&, KernelNames& n, const std::string& v) { n.d1 = v; },
                      [](const ExperimentSpec&, const KernelNames& n) { return n.d1; }};
    k["d2_kernel"] = {[](ExperimentSpec&, KernelNames& n, const std::string& v) { n.d2 = v; },
                      [](const ExperimentSpec&, const KernelNames& n) { return n.d2; }};
    k["threshold"] = {[](ExperimentSpec& s, KernelNames&, const std::string& v) { s.threshold = ThresholdSpec::parse(v); },
                      [](const ExperimentSpec& s, const KernelNames&) { return s.threshold.describe(); }};
    return k;
  }();
  return keys;
}

}  // namespace

void apply_config(ExperimentSpec& spec, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool versioned = false;
  KernelNames names;
  bool kernels_touched = false;
  ExperimentSpec work = spec;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (io::trim(line).empty()) continue;
    const auto eq = line.find('=');
    auto where = [&] { return "config '" + source + "' line " + std::to_string(lineno); };
    if (eq == std::string::npos) throw FormatError(where() + ": expected key = value");
    const std::string key = io::trim(line.substr(0, eq));
    const std::string value = io::trim(line.substr(eq + 1));
    if (key == "schema_version") {
      if (value != "1") throw FormatError(where() + ": unsupported schema_version '" + value + "'");
      versioned = true;
      continue;
    }
    const auto& keys = config_keys();
    auto it = keys.find(key);
    if (it == keys.end()) throw FormatError(where() + ": unknown key '" + key + "'");
    try {
      it->second.set(work, names, value);
    } catch (const std::exception& e) {
      throw FormatError(where() + ": bad value for '" + key + "': " + e.what());
    }
    if (key == "d1_kernel" || key == "d2_kernel") kernels_touched = true;
  }
  if (!versioned) throw FormatError("config '" + source + "' lacks schema_version = 1");
  if (kernels_touched) {
    const double tau = work.kernels.tau;
    try {
      work.kernels = KernelSpec::preset(names.d1, names.d2, tau);
    } catch (const std::invalid_argument& e) {
      throw FormatError("config '" + source + "': " + e.what());
    }
  }
  try {
    work.train.validate();
    work.arch.validate();
    work.policy.validate();
    work.kernels.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError("config '" + source + "': " + e.what());
  }
  spec = std::move(work);
}

void apply_config_file(ExperimentSpec& spec, const fs::path& path) {
  apply_config(spec, io::read_text(path), path.string());
}

std::string dump_config(const ExperimentSpec& spec) {
  KernelNames names;
  if (spec.kernels.gx[0][0] == -1 && spec.kernels.gx[1][0] == -1) names.d1 = "prewitt";
  if (spec.kernels.lap[0][0] == 1) names.d2 = "laplace8";
  std::string out = "schema_version = 1\n";
  for (const auto& [key, k] : config_keys()) out += key + " = " + k.get(spec, names) + "\n";
  return out;
}

// ---- run --------------------------------------------------------------------

Manifest prepare_manifest(const ExperimentSpec& spec) {
  Manifest m = read_manifest(spec.manifest);
  if (m.indices(Split::Val).empty()) {
    const fs::path base = m.base_dir;
    m = split_train_val(m, spec.split_frac, spec.split_seed);
    m.base_dir = base;
  }
  for (Split s : {Split::Train, Split::Val, Split::Test})
    if (m.indices(s).empty())
      throw std::invalid_argument("manifest '" + spec.manifest.string() + "' has an empty " + to_string(s) + " split");
  return m;
}

std::string encode_metrics(const std::vector<CellResult>& cells) {
  std::string out = "setup,seed,auc,f1,prc,rec,acc\n";
  for (const auto& c : cells) {
    const auto& m = c.metrics;
    out += c.setup + "," + std::to_string(c.seed) + "," + io::fmt_real(m.auc) + "," + io::fmt_real(m.f1) + "," +
           io::fmt_real(m.prc) + "," + io::fmt_real(m.rec) + "," + io::fmt_real(m.acc) + "\n";
  }
  return out;
}

std::string encode_aggregate(const std::vector<std::string>& setups, const std::vector<Aggregate>& aggs) {
  std::string out =
      "setup,runs,auc_mean,auc_std,f1_mean,f1_std,prc_mean,prc_std,rec_mean,rec_std,acc_mean,acc_std\n";
  for (std::size_t i = 0; i < setups.size(); ++i) {
    const auto& a = aggs[i];
    out += setups[i] + "," + std::to_string(a.runs);
    for (const MeanStd* ms : {&a.auc, &a.f1, &a.prc, &a.rec, &a.acc})
      out += "," + io::fmt_real(ms->mean) + "," + io::fmt_real(ms->std);
    out += "\n";
  }
  return out;
}

std::string encode_roc_band(const std::string& setup, const Aggregate& agg) {
  std::string out = "setup,fpr,tpr_mean,tpr_std\n";
  for (std::size_t i = 0; i < agg.fpr_grid.size(); ++i)
    out += setup + "," + io::fmt_real(agg.fpr_grid[i], 2) + "," + io::fmt_real(agg.tpr_mean[i]) + "," +
           io::fmt_real(agg.tpr_std[i]) + "\n";
  return out;
}

namespace {

std::string cell_name(const std::string& setup, std::uint64_t seed) { return setup + "_" + std::to_string(seed); }

}  // namespace

RunSummary cmd_run(const ExperimentSpec& spec, std::ostream* log) {
  spec.validate();
  const Manifest manifest = prepare_manifest(spec);
  const bool needs_emb = std::any_of(spec.setups.begin(), spec.setups.end(),
                                     [](const std::string& s) { return FeatureConfig::parse(s).use_dino; });
  EmbeddingTable emb;
  if (needs_emb) {
    if (spec.embeddings.empty()) throw std::invalid_argument("a dino setup needs --embeddings");
    emb = load_embeddings(spec.embeddings);
  }
  ImageCache cache;
  std::mutex log_mu;
  auto say = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard lock(log_mu);
    *log << msg << std::endl;
  };

  struct SetupOutcome {
    std::vector<CellResult> cells;
    std::string failure;
  };
  std::vector<SetupOutcome> outcomes(spec.setups.size());

  auto run_setup = [&](std::size_t si) {
    const std::string& name = spec.setups[si];
    ExampleContext ctx;
    ctx.manifest = &manifest;
    ctx.setup = FeatureConfig::parse(name);
    ctx.kernels = spec.kernels;
    ctx.policy = spec.policy;
    ctx.embeddings = needs_emb ? &emb : nullptr;
    ctx.cache = &cache;
    for (std::uint64_t seed : spec.seeds) {
      try {
        TrainConfig tc = spec.train;
        tc.seed = seed;
        TrainResult tr = train(ctx, tc, spec.arch);
        const double thr =
            spec.threshold.val_optimal ? best_f1_threshold(predict(tr.model, ctx, Split::Val)) : spec.threshold.value;
        CellResult cell;
        cell.setup = name;
        cell.seed = seed;
        cell.metrics = evaluate(predict(tr.model, ctx, Split::Test), thr);
        cell.history = tr.history;
        cell.best_epoch = tr.best_epoch;
        const std::string cn = cell_name(name, seed);
        io::write_file_atomic(spec.out_dir / "history" / (cn + ".csv"), encode_history(tr.history));
        if (spec.write_checkpoints)
          save_checkpoint({tr.model, tc, name}, spec.out_dir / "checkpoints" / (cn + ".bin"));
        say(cn + ": auc " + io::fmt_real(cell.metrics.auc, 4) + " f1 " + io::fmt_real(cell.metrics.f1, 4) +
            " (best epoch " + std::to_string(tr.best_epoch) + ")");
        outcomes[si].cells.push_back(std::move(cell));
      } catch (const std::exception& e) {
        outcomes[si].failure = cell_name(name, seed) + ": " + e.what();
        say("FAILED " + outcomes[si].failure);
        break;
      }
    }
  };

  if (spec.jobs == 1) {
    for (std::size_t si = 0; si < spec.setups.size(); ++si) run_setup(si);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int j = 0; j < spec.jobs; ++j)
      pool.emplace_back([&] {
        for (std::size_t si; (si = next++) < spec.setups.size();) run_setup(si);
      });
    for (auto& t : pool) t.join();
  }

  RunSummary summary;
  std::vector<std::string> agg_setups;
  std::vector<Aggregate> aggs;
  for (std::size_t si = 0; si < spec.setups.size(); ++si) {
    auto& o = outcomes[si];
    if (!o.failure.empty()) summary.failures.push_back(o.failure);
    if (!o.cells.empty()) {
      std::vector<RunMetrics> runs;
      for (const auto& c : o.cells) runs.push_back(c.metrics);
      agg_setups.push_back(spec.setups[si]);
      aggs.push_back(aggregate(runs));
      io::write_file_atomic(spec.out_dir / "roc" / (spec.setups[si] + ".csv"),
                            encode_roc_band(spec.setups[si], aggs.back()));
    }
    for (auto& c : o.cells) summary.cells.push_back(std::move(c));
  }
  io::write_file_atomic(spec.out_dir / "metrics.csv", encode_metrics(summary.cells));
  io::write_file_atomic(spec.out_dir / "aggregate.csv", encode_aggregate(agg_setups, aggs));
  return summary;
}

// ---- report -----------------------------------------------------------------

std::vector<MetricsRow> parse_metrics(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::vector<MetricsRow> rows;
  bool header = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (io::trim(line).empty()) continue;
    auto f = io::split_csv(line);
    if (!header) {
      if (f != std::vector<std::string>{"setup", "seed", "auc", "f1", "prc", "rec", "acc"})
        throw FormatError("metrics file '" + source + "' must start with setup,seed,auc,f1,prc,rec,acc");
      header = true;
      continue;
    }
    auto bad = [&](const std::string& why) {
      return FormatError("metrics file '" + source + "' line " + std::to_string(lineno) + ": " + why);
    };
    if (f.size() != 7) throw bad("expected 7 fields");
    MetricsRow r;
    try {
      r.setup = f[0];
      r.seed = std::stoull(f[1]);
      r.auc = to_double(f[2]);
      r.f1 = to_double(f[3]);
      r.prc = to_double(f[4]);
      r.rec = to_double(f[5]);
      r.acc = to_double(f[6]);
    } catch (const std::exception& e) {
      throw bad(e.what());
    }
    if (r.setup.empty()) throw bad("empty setup name");
    rows.push_back(r);
  }
  if (rows.empty()) throw FormatError("metrics file '" + source + "' has no rows");
  return rows;
}

std::vector<SetupSummary> summarize(const std::vector<MetricsRow>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const MetricsRow*>> by;
  for (const auto& r : rows) {
    if (!by.count(r.setup)) order.push_back(r.setup);
    by[r.setup].push_back(&r);
  }
  std::vector<SetupSummary> out;
  for (const auto& s : order) {
    const auto& rs = by[s];
    auto col = [&](double MetricsRow::*f) {
      std::vector<double> v;
      for (const auto* r : rs) v.push_back(r->*f);
      return mean_std(v);
    };
    out.push_back({s, rs.size(), col(&MetricsRow::auc), col(&MetricsRow::f1), col(&MetricsRow::prc),
                   col(&MetricsRow::rec), col(&MetricsRow::acc)});
  }
  return out;
}

std::vector<SetupSummary> rank_by_auc(std::vector<SetupSummary> s) {
  std::stable_sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
    return a.auc.mean != b.auc.mean ? a.auc.mean > b.auc.mean : a.setup < b.setup;
  });
  return s;
}

std::vector<SetupSummary> rank_by_f1(std::vector<SetupSummary> s) {
  std::stable_sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
    return a.f1.mean != b.f1.mean ? a.f1.mean > b.f1.mean : a.setup < b.setup;
  });
  return s;
}

std::string format_table_text(const std::vector<SetupSummary>& rows, const std::string& title) {
  std::size_t w = 5;
  for (const auto& r : rows) w = std::max(w, r.setup.size());
  auto pad = [&](const std::string& s) { return s + std::string(w - s.size() + 2, ' '); };
  std::string out = title + "\n" + pad("setup") + "| AUC    F1     PRC    REC    ACC    runs\n";
  out += std::string(w + 2, '-') + "+" + std::string(41, '-') + "\n";
  for (const auto& r : rows)
    out += pad(r.setup) + "| " + io::fmt_real(r.auc.mean, 3) + "  " + io::fmt_real(r.f1.mean, 3) + "  " +
           io::fmt_real(r.prc.mean, 3) + "  " + io::fmt_real(r.rec.mean, 3) + "  " + io::fmt_real(r.acc.mean, 3) +
           "  " + std::to_string(r.runs) + "\n";
  return out;
}

std::string format_table_csv(const std::vector<SetupSummary>& rows) {
  std::string out = "setup,AUC,F1,PRC,REC,ACC\n";
  for (const auto& r : rows)
    out += r.setup + "," + io::fmt_real(r.auc.mean) + "," + io::fmt_real(r.f1.mean) + "," + io::fmt_real(r.prc.mean) +
           "," + io::fmt_real(r.rec.mean) + "," + io::fmt_real(r.acc.mean) + "\n";
  return out;
}

std::vector<std::string> band_setups(const std::vector<SetupSummary>& ranked, std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) out.push_back(ranked[i].setup);
  const bool has_baseline = std::any_of(ranked.begin(), ranked.end(), [](const auto& r) { return r.setup == "baseline"; });
  if (has_baseline && std::find(out.begin(), out.end(), "baseline") == out.end()) out.push_back("baseline");
  return out;
}

ReportOutput cmd_report(const fs::path& metrics_csv, const fs::path& out_dir, fs::path roc_dir) {
  const auto rows = parse_metrics(io::read_text(metrics_csv), metrics_csv.string());
  const auto summary = summarize(rows);
  ReportOutput rep;
  rep.by_auc = rank_by_auc(summary);
  rep.by_f1 = rank_by_f1(summary);
  if (roc_dir.empty()) roc_dir = metrics_csv.parent_path() / "roc";

  io::write_file_atomic(out_dir / "table_auc.txt", format_table_text(rep.by_auc, "Mean results, sorted by descending mean AUC"));
  io::write_file_atomic(out_dir / "table_auc.csv", format_table_csv(rep.by_auc));
  io::write_file_atomic(out_dir / "table_f1.txt", format_table_text(rep.by_f1, "Mean results, sorted by descending mean F1"));
  io::write_file_atomic(out_dir / "table_f1.csv", format_table_csv(rep.by_f1));

  auto bands = [&](const std::vector<SetupSummary>& ranked, const std::string& file) {
    std::string out = "setup,fpr,tpr_mean,tpr_std\n";
    for (const auto& s : band_setups(ranked)) {
      const fs::path p = roc_dir / (s + ".csv");
      if (!fs::exists(p)) {
        if (std::find(rep.missing_roc.begin(), rep.missing_roc.end(), p.string()) == rep.missing_roc.end())
          rep.missing_roc.push_back(p.string());
        continue;
      }
      std::istringstream in(io::read_text(p));
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line))
        if (!io::trim(line).empty()) out += line + "\n";
    }
    io::write_file_atomic(out_dir / file, out);
  };
  bands(rep.by_auc, "roc_top_auc.csv");
  bands(rep.by_f1, "roc_top_f1.csv");
  return rep;
}

// ---- ingest -----------------------------------------------------------------

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

int class_of(const std::string& dir) {
  const std::string d = lower(dir);
  if (d.rfind("benign", 0) == 0) return 0;
  if (d.rfind("malignant", 0) == 0) return 1;
  return -1;
}

bool split_of(const std::string& dir, Split& out) {
  const std::string d = lower(dir);
  if (d == "train" || d == "training") out = Split::Train;
  else if (d == "val" || d == "validation") out = Split::Val;
  else if (d == "test") out = Split::Test;
  else return false;
  return true;
}

bool is_image_file(const fs::path& p) {
  const std::string e = lower(p.extension().string());
  return e == ".png" || e == ".pgm";
}

}  // namespace

IngestResult cmd_ingest(const fs::path& src, const fs::path& out_manifest, double test_frac, std::uint64_t seed) {
  if (!fs::is_directory(src)) throw std::invalid_argument("source '" + src.string() + "' is not a directory");
  if (!(test_frac >= 0 && test_frac < 1)) throw std::invalid_argument("test fraction must be in [0,1)");
  IngestResult res;
  const fs::path manifest_dir = fs::absolute(out_manifest).parent_path();
  bool layout_has_splits = false;

  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(src))
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  struct Pending {
    ManifestRecord rec;
    bool explicit_split;
  };
  std::vector<Pending> pending;
  for (const auto& f : files) {
    const fs::path rel = f.lexically_relative(src);
    std::vector<std::string> parts;
    for (const auto& p : rel) parts.push_back(p.string());
    int label = -1;
    Split split = Split::Train;
    bool explicit_split = false;
    if (parts.size() >= 2) label = class_of(parts[0]);
    if (label < 0 && parts.size() >= 3 && split_of(parts[0], split)) {
      label = class_of(parts[1]);
      explicit_split = true;
    }
    const std::string rel_s = rel.generic_string();
    if (label < 0) continue;  // not under a class folder
    if (rel_s.find(',') != std::string::npos) {
      res.unreadable.push_back(f.string() + " (comma in path)");
      continue;
    }
    try {
      (void)load_gray(f);
    } catch (const std::exception& e) {
      res.unreadable.push_back(f.string() + " (" + e.what() + ")");
      continue;
    }
    std::string id = rel.parent_path().generic_string() + "/" + rel.stem().string();
    const fs::path stored = fs::absolute(f).lexically_normal().lexically_relative(manifest_dir);
    pending.push_back({{id, stored, label, split}, explicit_split});
    layout_has_splits = layout_has_splits || explicit_split;
  }
  if (pending.empty()) throw std::invalid_argument("no readable class-labelled images under '" + src.string() + "'");

  Manifest& m = res.manifest;
  m.base_dir = manifest_dir;
  for (auto& p : pending) m.records.push_back(p.rec);
  if (!layout_has_splits && test_frac > 0) {
    for (int label = 0; label <= 1; ++label) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < m.records.size(); ++i)
        if (m.records[i].label == label) idx.push_back(i);
      Rng rng = derive_rng({seed, static_cast<std::uint64_t>(label), 0x7e57});
      shuffle(idx.begin(), idx.end(), rng);
      const auto n_test = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(idx.size())));
      for (std::size_t k = 0; k < n_test; ++k) m.records[idx[k]].split = Split::Test;
    }
  }
  write_manifest(m, out_manifest);

  std::ostringstream ss;
  ss << m.records.size() << " images";
  for (Split s : {Split::Train, Split::Val, Split::Test})
    ss << "; " << to_string(s) << ": " << m.count(s, 0) << " benign / " << m.count(s, 1) << " malignant";
  if (!res.unreadable.empty()) ss << "; " << res.unreadable.size() << " unreadable";
  res.summary = ss.str();
  return res;
}

EmbeddingTable cmd_embed_import(const fs::path& input, const fs::path& output, const fs::path& manifest) {
  const auto bytes = io::read_file(input);
  EmbeddingTable table;
  if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "EMB1")) {
    table = decode_embeddings(bytes, input.string());
  } else {
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::string line;
    int lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
      ++lineno;
      if (io::trim(line).empty()) continue;
      auto f = io::split_csv(line);
      if (f.size() < 2) throw FormatError("embedding CSV '" + input.string() + "' line " + std::to_string(lineno) + ": need id and values");
      if (first) {
        table = EmbeddingTable(static_cast<std::uint32_t>(f.size() - 1));
        first = false;
      }
      EmbeddingVector v;
      try {
        for (std::size_t i = 1; i < f.size(); ++i) v.values.push_back(static_cast<float>(to_double(f[i])));
        table.add(f[0], std::move(v));
      } catch (const std::exception& e) {
        throw FormatError("embedding CSV '" + input.string() + "' line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    if (first) throw FormatError("embedding CSV '" + input.string() + "' is empty");
  }
  if (!manifest.empty()) {
    const Manifest m = read_manifest(manifest);
    for (const auto& r : m.records)
      if (!table.contains(r.id)) throw MissingEmbedding(r.id);
  }
  if (!output.empty()) write_embeddings(table, output);
  return table;
}

}  // namespace mammofuse
