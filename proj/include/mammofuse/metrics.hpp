#pragma once

#include <cstddef>
#include <vector>

namespace mammofuse {

/// Scores (higher = more malignant) with their 0/1 labels.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;

  /// Throws std::invalid_argument on length mismatch or non-binary labels.
  void validate() const;
  std::size_t positives() const;
  std::size_t negatives() const;
};

struct RocPoint {
  double fpr = 0;
  double tpr = 0;
  bool operator==(const RocPoint&) const = default;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  bool operator==(const Confusion&) const = default;
};

struct Prf {
  double prc = 0, rec = 0, f1 = 0, acc = 0;
};

struct RunMetrics {
  double auc = 0, f1 = 0, prc = 0, rec = 0, acc = 0;
  double threshold = 0.5;
  std::vector<RocPoint> roc;
};

/// Thresholds at every distinct score, descending; tied scores give a single
/// point. Starts at (0,0), ends at (1,1). Throws std::invalid_argument unless
/// both classes are present.
std::vector<RocPoint> roc_curve(const ScoredSet& s);

/// Trapezoidal area under a ROC polyline.
double auc(const std::vector<RocPoint>& roc);

/// Predict positive iff score >= thr.
Confusion confusion_at(const ScoredSet& s, double thr = 0.5);

/// Precision, recall, F1, accuracy; any 0/0 is reported as 0.
Prf prf_acc(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);
Prf prf_acc(const Confusion& c);
/// F1 from given precision and recall (0 when both are 0).
double f1_score(double prc, double rec);

RunMetrics evaluate(const ScoredSet& s, double thr = 0.5);

/// Threshold from the candidate scores that maximizes F1 (ties: the higher
/// threshold). Used for the validation-optimal operating point.
double best_f1_threshold(const ScoredSet& s);

/// TPR of a ROC polyline at a given FPR (linear between points; on a vertical
/// segment, the upper end).
double interp_tpr(const std::vector<RocPoint>& roc, double fpr);

struct MeanStd {
  double mean = 0;
  double std = 0;  // sample standard deviation (n-1); 0 for a single value
};

MeanStd mean_std(const std::vector<double>& v);

struct Aggregate {
  std::size_t runs = 0;
  MeanStd auc, f1, prc, rec, acc;
  std::vector<double> fpr_grid;  // 0, 0.01, ..., 1
  std::vector<double> tpr_mean;
  std::vector<double> tpr_std;
  std::vector<double> band_lo;   // clip(mean - std, 0, 1)
  std::vector<double> band_hi;   // clip(mean + std, 0, 1)
};

/// Per-metric mean and sample std, plus vertically averaged ROC on a
/// 101-point fpr grid. Throws std::invalid_argument on an empty list.
Aggregate aggregate(const std::vector<RunMetrics>& runs);

}  // namespace mammofuse
