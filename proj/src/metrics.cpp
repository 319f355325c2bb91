#include "mammofuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mammofuse {

void ScoredSet::validate() const {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  for (int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument("labels must be 0 or 1");
}

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}
std::size_t ScoredSet::negatives() const { return labels.size() - positives(); }

std::vector<RocPoint> roc_curve(const ScoredSet& s) {
  s.validate();
  const std::size_t P = s.positives(), N = s.negatives();
  if (P == 0 || N == 0) throw std::invalid_argument("ROC needs at least one positive and one negative");
  std::vector<std::size_t> order(s.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s.scores[a] > s.scores[b]; });

  std::vector<RocPoint> roc{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double v = s.scores[order[i]];
    while (i < order.size() && s.scores[order[i]] == v) {
      (s.labels[order[i]] == 1 ? tp : fp)++;
      ++i;
    }
    roc.push_back({static_cast<double>(fp) / N, static_cast<double>(tp) / P});
  }
  if (!(roc.back() == RocPoint{1.0, 1.0})) roc.push_back({1.0, 1.0});
  return roc;
}

double auc(const std::vector<RocPoint>& roc) {
  double a = 0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    a += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  return a;
}

Confusion confusion_at(const ScoredSet& s, double thr) {
  s.validate();
  Confusion c;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    const bool pred = s.scores[i] >= thr;
    if (s.labels[i] == 1) (pred ? c.tp : c.fn)++;
    else (pred ? c.fp : c.tn)++;
  }
  return c;
}

namespace {
double ratio(double num, double den) { return den == 0 ? 0.0 : num / den; }
}  // namespace

double f1_score(double prc, double rec) { return ratio(2 * prc * rec, prc + rec); }

Prf prf_acc(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  Prf r;
  r.prc = ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
  r.rec = ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
  r.f1 = f1_score(r.prc, r.rec);
  r.acc = ratio(static_cast<double>(tp + tn), static_cast<double>(tp + fp + tn + fn));
  return r;
}

Prf prf_acc(const Confusion& c) { return prf_acc(c.tp, c.fp, c.tn, c.fn); }

RunMetrics evaluate(const ScoredSet& s, double thr) {
  RunMetrics m;
  m.roc = roc_curve(s);
  m.auc = auc(m.roc);
  const Prf p = prf_acc(confusion_at(s, thr));
  m.prc = p.prc;
  m.rec = p.rec;
  m.f1 = p.f1;
  m.acc = p.acc;
  m.threshold = thr;
  return m;
}

double best_f1_threshold(const ScoredSet& s) {
  s.validate();
  if (s.scores.empty()) return 0.5;
  std::vector<double> cands = s.scores;
  std::sort(cands.begin(), cands.end(), std::greater<>());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  double best_thr = cands.front(), best_f1 = -1;
  for (double t : cands) {
    const double f = prf_acc(confusion_at(s, t)).f1;
    if (f > best_f1) {
      best_f1 = f;
      best_thr = t;
    }
  }
  return best_thr;
}

double interp_tpr(const std::vector<RocPoint>& roc, double fpr) {
  if (roc.empty()) return 0;
  // last point with fpr <= target
  auto it = std::upper_bound(roc.begin(), roc.end(), fpr, [](double f, const RocPoint& p) { return f < p.fpr; });
  if (it == roc.begin()) return roc.front().tpr;
  const RocPoint& a = *(it - 1);
  if (it == roc.end() || a.fpr == fpr) return a.tpr;
  const RocPoint& b = *it;
  const double t = (fpr - a.fpr) / (b.fpr - a.fpr);
  return a.tpr + t * (b.tpr - a.tpr);
}

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd r;
  if (v.empty()) return r;
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return r;
}

Aggregate aggregate(const std::vector<RunMetrics>& runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate needs at least one run");
  Aggregate a;
  a.runs = runs.size();
  auto col = [&](double RunMetrics::*f) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.*f);
    return mean_std(v);
  };
  a.auc = col(&RunMetrics::auc);
  a.f1 = col(&RunMetrics::f1);
  a.prc = col(&RunMetrics::prc);
  a.rec = col(&RunMetrics::rec);
  a.acc = col(&RunMetrics::acc);
  for (int i = 0; i <= 100; ++i) {
    const double f = i / 100.0;
    std::vector<double> tprs;
    for (const auto& r : runs) tprs.push_back(interp_tpr(r.roc, f));
    const MeanStd ms = mean_std(tprs);
    a.fpr_grid.push_back(f);
    a.tpr_mean.push_back(ms.mean);
    a.tpr_std.push_back(ms.std);
    a.band_lo.push_back(std::clamp(ms.mean - ms.std, 0.0, 1.0));
    a.band_hi.push_back(std::clamp(ms.mean + ms.std, 0.0, 1.0));
  }
  return a;
}

}  // namespace mammofuse
