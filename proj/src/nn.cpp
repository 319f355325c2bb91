#include "mammofuse/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mammofuse/error.hpp"

namespace mammofuse {

// ---- configuration ----------------------------------------------------------

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("TrainConfig: " + m); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(base_lr > 0)) fail("base_lr must be > 0");
  if (!(weight_decay >= 0)) fail("weight_decay must be >= 0");
  if (!(label_smooth >= 0 && label_smooth < 1)) fail("label_smooth must be in [0,1)");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) fail("adam betas must be in [0,1)");
  if (!(adam_eps > 0)) fail("adam_eps must be > 0");
  if (sched_T < 1) fail("sched_T must be >= 1");
  if (!(sched_gamma >= 0 && sched_gamma <= 1)) fail("sched_gamma must be in [0,1]");
  if (!(stage_lr_scale > 0 && stage_lr_scale <= 1)) fail("stage_lr_scale must be in (0,1]");
  for (std::size_t i = 0; i < unfreeze_epochs.size(); ++i) {
    if (unfreeze_epochs[i] < 0) fail("unfreeze_epochs must be >= 0");
    if (i > 0 && unfreeze_epochs[i] <= unfreeze_epochs[i - 1]) fail("unfreeze_epochs must be strictly increasing");
  }
  if (!unfreeze_epochs.empty() && epochs <= unfreeze_epochs.back()) fail("epochs must exceed the last unfreeze epoch");
}

void ModelArch::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ModelArch: " + m); };
  if (in_channels != 3) fail("in_channels must be 3");
  if (stem_channels < 1) fail("stem_channels must be >= 1");
  if (stage_channels.size() < 3) fail("need at least 3 backbone stages");
  for (int c : stage_channels)
    if (c < 1) fail("stage channel counts must be >= 1");
  if (backbone_dim() < 8) fail("backbone output width must be >= 8");
  if (hidden < 1) fail("hidden must be >= 1");
  if (!(dropout_rate >= 0 && dropout_rate < 1)) fail("dropout_rate must be in [0,1)");
}

// ---- model ------------------------------------------------------------------

namespace {

ConvBlock make_conv(int in_c, int out_c) {
  ConvBlock b;
  b.in_c = in_c;
  b.out_c = out_c;
  b.weight.assign(static_cast<std::size_t>(out_c) * in_c * 9, 0.0);
  b.bias.assign(static_cast<std::size_t>(out_c), 0.0);
  return b;
}

void fill_uniform(std::vector<double>& v, double bound, Rng& rng) {
  for (double& x : v) x = (2.0 * uniform01(rng) - 1.0) * bound;
}

std::string stage_group(std::size_t i) { return "stage" + std::to_string(i + 1); }

}  // namespace

Model Model::shaped(const ModelArch& arch) {
  arch.validate();
  Model m;
  m.arch_ = arch;
  m.backbone_.stem = make_conv(arch.in_channels, arch.stem_channels);
  int prev = arch.stem_channels;
  for (int c : arch.stage_channels) {
    m.backbone_.stages.push_back(make_conv(prev, c));
    prev = c;
  }
  auto& h = m.head_;
  h.in_dim = arch.head_in_dim();
  h.hidden = arch.hidden;
  h.dropout_rate = arch.dropout_rate;
  h.w1.assign(static_cast<std::size_t>(h.hidden) * h.in_dim, 0.0);
  h.b1.assign(static_cast<std::size_t>(h.hidden), 0.0);
  h.w2.assign(static_cast<std::size_t>(h.hidden), 0.0);
  h.b2.assign(1, 0.0);
  return m;
}

Model Model::init(const ModelArch& arch, std::uint64_t seed) {
  Model m = shaped(arch);
  Rng rng = derive_rng({seed, 0x1417});
  auto init_conv = [&](ConvBlock& b) {
    fill_uniform(b.weight, std::sqrt(6.0 / (b.in_c * 9)), rng);
  };
  init_conv(m.backbone_.stem);
  for (auto& s : m.backbone_.stages) init_conv(s);
  auto& h = m.head_;
  const double b_in = 1.0 / std::sqrt(static_cast<double>(h.in_dim));
  const double b_hid = 1.0 / std::sqrt(static_cast<double>(h.hidden));
  fill_uniform(h.w1, b_in, rng);
  fill_uniform(h.b1, b_in, rng);
  fill_uniform(h.w2, b_hid, rng);
  fill_uniform(h.b2, b_hid, rng);
  return m;
}

Model Model::zeros_like() const { return shaped(arch_); }

std::vector<ParamBlock> Model::blocks() {
  std::vector<ParamBlock> out;
  auto conv = [&](ConvBlock& b, const std::string& g) {
    out.push_back({g + ".weight", g, {b.out_c, b.in_c, 3, 3}, b.weight});
    out.push_back({g + ".bias", g, {b.out_c}, b.bias});
  };
  conv(backbone_.stem, "stem");
  for (std::size_t i = 0; i < backbone_.stages.size(); ++i) conv(backbone_.stages[i], stage_group(i));
  out.push_back({"head.w1", "head", {head_.hidden, head_.in_dim}, head_.w1});
  out.push_back({"head.b1", "head", {head_.hidden}, head_.b1});
  out.push_back({"head.w2", "head", {1, head_.hidden}, head_.w2});
  out.push_back({"head.b2", "head", {1}, head_.b2});
  return out;
}

std::vector<ConstParamBlock> Model::blocks() const {
  std::vector<ConstParamBlock> out;
  for (auto& b : const_cast<Model*>(this)->blocks()) out.push_back({b.name, b.group, b.shape, b.values});
  return out;
}

std::size_t Model::param_count(std::string_view group) const {
  std::size_t n = 0;
  for (const auto& b : blocks())
    if (b.group == group) n += b.values.size();
  return n;
}

std::vector<std::string> Model::groups() const {
  std::vector<std::string> g{"stem"};
  for (std::size_t i = 0; i < backbone_.stages.size(); ++i) g.push_back(stage_group(i));
  g.push_back("head");
  return g;
}

bool Model::operator==(const Model& o) const {
  if (!(arch_ == o.arch_)) return false;
  auto a = blocks();
  auto b = o.blocks();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::equal(a[i].values.begin(), a[i].values.end(), b[i].values.begin())) return false;
  return true;
}

// ---- forward / backward -----------------------------------------------------

namespace {

using Act = ForwardCache::Act;

int out_extent(int in) { return (in + 1) / 2; }

// valid output x range for a given kernel column: 0 <= 2x + k - 1 < in
inline void tap_range(int k, int in, int out, int& lo, int& hi) {
  lo = k == 0 ? 1 : 0;
  hi = in >= k ? std::min(out - 1, (in - k) / 2) : -1;
}

void conv_forward(const ConvBlock& b, const Act& in, Act& out) {
  out.c = b.out_c;
  out.h = out_extent(in.h);
  out.w = out_extent(in.w);
  const std::size_t plane = static_cast<std::size_t>(out.h) * out.w;
  const std::size_t in_plane = static_cast<std::size_t>(in.h) * in.w;
  out.data.assign(plane * out.c, 0.0);
  for (int o = 0; o < b.out_c; ++o) {
    double* dst = out.data.data() + plane * o;
    std::fill(dst, dst + plane, b.bias[static_cast<std::size_t>(o)]);
    for (int i = 0; i < b.in_c; ++i) {
      const double* src = in.data.data() + in_plane * i;
      const double* w = b.weight.data() + (static_cast<std::size_t>(o) * b.in_c + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        int ylo, yhi;
        tap_range(ky, in.h, out.h, ylo, yhi);
        for (int kx = 0; kx < 3; ++kx) {
          const double wk = w[ky * 3 + kx];
          int xlo, xhi;
          tap_range(kx, in.w, out.w, xlo, xhi);
          for (int y = ylo; y <= yhi; ++y) {
            const double* srow = src + static_cast<std::size_t>(2 * y + ky - 1) * in.w;
            double* drow = dst + static_cast<std::size_t>(y) * out.w;
            for (int x = xlo; x <= xhi; ++x) drow[x] += wk * srow[2 * x + kx - 1];
          }
        }
      }
    }
  }
  for (double& v : out.data) v = v > 0 ? v : 0.0;
}

// d_out: gradient w.r.t. the post-ReLU output; overwritten with the
// pre-activation gradient.
void conv_backward(const ConvBlock& b, const Act& in, const Act& out, std::vector<double>& d_out,
                   ConvBlock* grads, std::vector<double>* d_in) {
  const std::size_t plane = static_cast<std::size_t>(out.h) * out.w;
  const std::size_t in_plane = static_cast<std::size_t>(in.h) * in.w;
  for (std::size_t k = 0; k < d_out.size(); ++k)
    if (!(out.data[k] > 0)) d_out[k] = 0.0;
  if (d_in) d_in->assign(in_plane * in.c, 0.0);
  for (int o = 0; o < b.out_c; ++o) {
    const double* g = d_out.data() + plane * o;
    if (grads) {
      double s = 0;
      for (std::size_t k = 0; k < plane; ++k) s += g[k];
      grads->bias[static_cast<std::size_t>(o)] += s;
    }
    for (int i = 0; i < b.in_c; ++i) {
      const double* src = in.data.data() + in_plane * i;
      const std::size_t widx = (static_cast<std::size_t>(o) * b.in_c + i) * 9;
      const double* w = b.weight.data() + widx;
      double* gin = d_in ? d_in->data() + in_plane * i : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        int ylo, yhi;
        tap_range(ky, in.h, out.h, ylo, yhi);
        for (int kx = 0; kx < 3; ++kx) {
          int xlo, xhi;
          tap_range(kx, in.w, out.w, xlo, xhi);
          const double wk = w[ky * 3 + kx];
          double gw = 0;
          for (int y = ylo; y <= yhi; ++y) {
            const std::size_t off = static_cast<std::size_t>(2 * y + ky - 1) * in.w;
            const double* srow = src + off;
            const double* grow = g + static_cast<std::size_t>(y) * out.w;
            if (grads)
              for (int x = xlo; x <= xhi; ++x) gw += grow[x] * srow[2 * x + kx - 1];
            if (gin) {
              double* irow = gin + off;
              for (int x = xlo; x <= xhi; ++x) irow[2 * x + kx - 1] += wk * grow[x];
            }
          }
          if (grads) grads->weight[widx + static_cast<std::size_t>(ky * 3 + kx)] += gw;
        }
      }
    }
  }
}

Act input_act(const NormalizedImage& img) {
  Act a;
  a.c = 3;
  a.h = img.height();
  a.w = img.width();
  a.data.reserve(static_cast<std::size_t>(a.h) * a.w * 3);
  for (int c = 0; c < 3; ++c) {
    auto p = img.plane(c);
    a.data.insert(a.data.end(), p.begin(), p.end());
  }
  return a;
}

std::vector<double> global_avg_pool(const Act& a) {
  std::vector<double> f(static_cast<std::size_t>(a.c), 0.0);
  const std::size_t plane = static_cast<std::size_t>(a.h) * a.w;
  for (int c = 0; c < a.c; ++c) {
    double s = 0;
    const double* p = a.data.data() + plane * c;
    for (std::size_t k = 0; k < plane; ++k) s += p[k];
    f[static_cast<std::size_t>(c)] = s / static_cast<double>(plane);
  }
  return f;
}

// Shared head pass; fills cache fields when given.
double head_pass(std::span<const double> x, const HeadParams& p, bool train_mode, Rng* rng,
                 ForwardCache* cache) {
  if (x.size() != static_cast<std::size_t>(p.in_dim))
    throw std::invalid_argument("head input has length " + std::to_string(x.size()) + ", expected " +
                                std::to_string(p.in_dim));
  const auto H = static_cast<std::size_t>(p.hidden);
  std::vector<double> pre(H), hid(H), mask(H, 1.0);
  const double keep_scale = 1.0 / (1.0 - p.dropout_rate);
  double logit = p.b2[0];
  for (std::size_t j = 0; j < H; ++j) {
    const double* w = p.w1.data() + j * x.size();
    double s = p.b1[j];
    for (std::size_t k = 0; k < x.size(); ++k) s += w[k] * x[k];
    pre[j] = s;
    double h = s > 0 ? s : 0.0;
    if (train_mode && p.dropout_rate > 0) {
      mask[j] = uniform01(*rng) < p.dropout_rate ? 0.0 : keep_scale;
      h *= mask[j];
    }
    hid[j] = h;
    logit += p.w2[j] * h;
  }
  if (cache) {
    cache->hidden_pre = std::move(pre);
    cache->hidden = std::move(hid);
    cache->mask = std::move(mask);
    cache->logit = logit;
  }
  return logit;
}

}  // namespace

double head_forward(std::span<const double> x, const HeadParams& p, bool train_mode, Rng& rng) {
  return head_pass(x, p, train_mode, &rng, nullptr);
}

std::vector<double> backbone_forward(const ToyBackbone& bb, const NormalizedImage& img, ForwardCache* cache) {
  std::vector<Act> local;
  auto& acts = cache ? cache->acts : local;
  acts.clear();
  acts.reserve(bb.stages.size() + 2);
  acts.push_back(input_act(img));
  if (acts[0].c != bb.stem.in_c) throw std::invalid_argument("image channel count does not match the stem");
  acts.emplace_back();
  conv_forward(bb.stem, acts[0], acts[1]);
  for (const auto& s : bb.stages) {
    acts.emplace_back();
    conv_forward(s, acts[acts.size() - 2], acts.back());
  }
  return global_avg_pool(acts.back());
}

double model_forward(const Model& m, const NormalizedImage& img, std::span<const double> emb, bool train_mode,
                     Rng& rng, ForwardCache* cache) {
  if (emb.size() != m.arch().emb_dim)
    throw std::invalid_argument("embedding length " + std::to_string(emb.size()) + " != model emb_dim " +
                                std::to_string(m.arch().emb_dim));
  auto feats = backbone_forward(m.backbone(), img, cache);
  feats.insert(feats.end(), emb.begin(), emb.end());
  const double logit = head_pass(feats, m.head(), train_mode, &rng, cache);
  if (cache) cache->features = std::move(feats);
  return logit;
}

void model_backward(const Model& m, const ForwardCache& cache, double dlogit, Model& grads,
                    const std::vector<std::string>& groups) {
  auto wants = [&](const std::string& g) { return std::find(groups.begin(), groups.end(), g) != groups.end(); };
  const auto& p = m.head();
  auto& gp = grads.head();
  const auto H = static_cast<std::size_t>(p.hidden);
  const auto F = static_cast<std::size_t>(p.in_dim);
  const std::size_t nstages = m.backbone().stages.size();

  // lowest backbone block index needing gradients: 0 = stem, k = stage k
  int lowest = -1;
  if (wants("stem")) {
    lowest = 0;
  } else {
    for (std::size_t s = 0; s < nstages; ++s)
      if (wants(stage_group(s))) {
        lowest = static_cast<int>(s) + 1;
        break;
      }
  }

  std::vector<double> d_pre(H);
  for (std::size_t j = 0; j < H; ++j) {
    const double dh = dlogit * p.w2[j] * cache.mask[j];
    d_pre[j] = cache.hidden_pre[j] > 0 ? dh : 0.0;
  }
  if (wants("head")) {
    gp.b2[0] += dlogit;
    for (std::size_t j = 0; j < H; ++j) {
      gp.w2[j] += dlogit * cache.hidden[j];
      gp.b1[j] += d_pre[j];
      double* gw = gp.w1.data() + j * F;
      for (std::size_t k = 0; k < F; ++k) gw[k] += d_pre[j] * cache.features[k];
    }
  }
  if (lowest < 0) return;

  const std::size_t D = static_cast<std::size_t>(m.arch().backbone_dim());
  std::vector<double> d_feat(D, 0.0);
  for (std::size_t j = 0; j < H; ++j) {
    if (d_pre[j] == 0.0) continue;
    const double* w = p.w1.data() + j * F;
    for (std::size_t k = 0; k < D; ++k) d_feat[k] += d_pre[j] * w[k];
  }
  const Act& last = cache.acts.back();
  const std::size_t plane = static_cast<std::size_t>(last.h) * last.w;
  std::vector<double> d_act(last.data.size());
  for (std::size_t c = 0; c < D; ++c) {
    const double g = d_feat[c] / static_cast<double>(plane);
    std::fill(d_act.begin() + static_cast<std::ptrdiff_t>(c * plane),
              d_act.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane), g);
  }

  // block index b: 0 = stem, s+1 = stage s; acts[b] is its input, acts[b+1] its output
  for (int b = static_cast<int>(nstages); b >= lowest; --b) {
    const ConvBlock& blk = b == 0 ? m.backbone().stem : m.backbone().stages[static_cast<std::size_t>(b - 1)];
    ConvBlock& gblk = b == 0 ? grads.backbone().stem : grads.backbone().stages[static_cast<std::size_t>(b - 1)];
    const std::string group = b == 0 ? "stem" : stage_group(static_cast<std::size_t>(b - 1));
    std::vector<double> d_in;
    const bool need_input = b > lowest;
    conv_backward(blk, cache.acts[static_cast<std::size_t>(b)], cache.acts[static_cast<std::size_t>(b) + 1], d_act,
                  wants(group) ? &gblk : nullptr, need_input ? &d_in : nullptr);
    if (need_input) d_act = std::move(d_in);
  }
}

// ---- loss, optimizer, schedules ---------------------------------------------

double smooth_label(int y, double eps) {
  if (!(eps >= 0 && eps < 1)) throw std::invalid_argument("label smoothing eps must be in [0,1)");
  return y * (1.0 - eps) + eps / 2.0;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_with_logits(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

double bce_with_logits_grad(double logit, double target) { return sigmoid(logit) - target; }

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st, double lr,
               const TrainConfig& cfg, std::string_view block) {
  if (grads.size() != params.size()) throw std::invalid_argument("adam_step: gradient/parameter size mismatch");
  if (st.m.empty() && st.t == 0) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  if (st.m.size() != params.size() || st.v.size() != params.size())
    throw std::invalid_argument("adam_step: state size mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw TrainingError("non-finite gradient in parameter block '" + std::string(block) + "' at index " +
                          std::to_string(i));
  ++st.t;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + cfg.weight_decay * params[i];
    st.m[i] = b1 * st.m[i] + (1 - b1) * g;
    st.v[i] = b2 * st.v[i] + (1 - b2) * g * g;
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }
}

double lr_at(int epoch, const TrainConfig& cfg) {
  const double eta_min = cfg.sched_gamma * cfg.base_lr;
  const int phase = epoch % cfg.sched_T;
  return eta_min + (cfg.base_lr - eta_min) * (1.0 + std::cos(std::numbers::pi * phase / cfg.sched_T)) / 2.0;
}

std::vector<GroupPlan> unfreeze_plan(int epoch, const TrainConfig& cfg, const FeatureConfig& setup, int num_stages) {
  std::vector<GroupPlan> plan;
  const bool stem_trains = !setup.is_baseline_packing();
  plan.push_back({"stem", stem_trains, stem_trains ? 1.0 : 0.0});
  for (int s = 0; s < num_stages; ++s) plan.push_back({stage_group(static_cast<std::size_t>(s)), false, 0.0});
  if (!setup.frozen) {
    double mult = 1.0;
    for (std::size_t k = 0; k < cfg.unfreeze_epochs.size(); ++k) {
      mult *= cfg.stage_lr_scale;
      const int stage = num_stages - 1 - static_cast<int>(k);
      if (stage < 0) break;
      if (epoch >= cfg.unfreeze_epochs[k]) plan[static_cast<std::size_t>(stage) + 1] = {stage_group(static_cast<std::size_t>(stage)), true, mult};
    }
  }
  plan.push_back({"head", true, 1.0});
  return plan;
}

std::size_t trainable_param_count(const Model& m, const std::vector<GroupPlan>& plan) {
  std::size_t n = 0;
  for (const auto& g : plan)
    if (g.trainable) n += m.param_count(g.group);
  return n;
}

}  // namespace mammofuse
