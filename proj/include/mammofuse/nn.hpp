#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mammofuse/fusion.hpp"
#include "mammofuse/image.hpp"
#include "mammofuse/rng.hpp"

namespace mammofuse {

// ---- configuration ----------------------------------------------------------

struct TrainConfig {
  int epochs = 25;
  int batch_size = 32;
  double base_lr = 1e-4;
  double weight_decay = 1e-3;
  double label_smooth = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int sched_T = 10;
  double sched_gamma = 0.1;
  std::vector<int> unfreeze_epochs{4, 10, 14};
  double stage_lr_scale = 0.1;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Shape of the desk-scale network: a stem conv followed by stride-2 stages,
/// global average pooling, optional late-fused embedding, and the classifier
/// head (hidden ReLU layer, dropout, single logit).
struct ModelArch {
  int in_channels = 3;
  int stem_channels = 8;
  std::vector<int> stage_channels{8, 16, 16};
  int hidden = 256;
  std::uint32_t emb_dim = 0;
  double dropout_rate = 0.4;

  int backbone_dim() const { return stage_channels.empty() ? stem_channels : stage_channels.back(); }
  int head_in_dim() const { return backbone_dim() + static_cast<int>(emb_dim); }
  void validate() const;
  bool operator==(const ModelArch&) const = default;
};

// ---- parameters -------------------------------------------------------------

/// 3x3 convolution, stride 2, zero padding 1, followed by ReLU.
struct ConvBlock {
  int in_c = 0;
  int out_c = 0;
  std::vector<double> weight;  // [out_c][in_c][3][3]
  std::vector<double> bias;    // [out_c]
};

struct ToyBackbone {
  ConvBlock stem;
  std::vector<ConvBlock> stages;  // deepest last
};

struct HeadParams {
  int in_dim = 0;
  int hidden = 256;
  std::vector<double> w1;  // [hidden][in_dim]
  std::vector<double> b1;  // [hidden]
  std::vector<double> w2;  // [hidden]
  std::vector<double> b2;  // [1]
  double dropout_rate = 0.4;
};

/// Named view of one parameter array. `group` is the unit of freezing:
/// "head", "stem", "stage1".."stageN".
struct ParamBlock {
  std::string name;
  std::string group;
  std::vector<int> shape;
  std::span<double> values;
};

struct ConstParamBlock {
  std::string name;
  std::string group;
  std::vector<int> shape;
  std::span<const double> values;
};

class Model {
public:
  Model() = default;
  /// He-uniform conv weights, PyTorch-style uniform head init, seeded.
  static Model init(const ModelArch& arch, std::uint64_t seed);
  /// Same shapes, every parameter zero. Used as a gradient accumulator.
  Model zeros_like() const;

  const ModelArch& arch() const noexcept { return arch_; }
  ToyBackbone& backbone() noexcept { return backbone_; }
  const ToyBackbone& backbone() const noexcept { return backbone_; }
  HeadParams& head() noexcept { return head_; }
  const HeadParams& head() const noexcept { return head_; }

  /// Fixed order: stem, stage1..N (weight, bias each), then head w1, b1, w2, b2.
  std::vector<ParamBlock> blocks();
  std::vector<ConstParamBlock> blocks() const;
  std::size_t param_count(std::string_view group) const;
  std::vector<std::string> groups() const;

  bool operator==(const Model& o) const;

private:
  static Model shaped(const ModelArch& arch);

  ModelArch arch_;
  ToyBackbone backbone_;
  HeadParams head_;
};

// ---- forward / backward -----------------------------------------------------

/// Activations kept for the backward pass.
struct ForwardCache {
  struct Act {
    int c = 0, h = 0, w = 0;
    std::vector<double> data;
  };
  std::vector<Act> acts;          // input, then post-ReLU output of every conv block
  std::vector<double> features;   // pooled backbone output, then embedding
  std::vector<double> hidden_pre; // w1 x + b1
  std::vector<double> hidden;     // after ReLU and dropout
  std::vector<double> mask;       // dropout scale per hidden unit (0 or 1/(1-p)); 1 in eval
  double logit = 0;
};

/// Head only: h = relu(w1 x + b1), inverted dropout in train mode, w2 h + b2.
/// Throws std::invalid_argument if x has the wrong length.
double head_forward(std::span<const double> x, const HeadParams& p, bool train_mode, Rng& rng);

/// Pooled backbone features for one image.
std::vector<double> backbone_forward(const ToyBackbone& bb, const NormalizedImage& img,
                                     ForwardCache* cache = nullptr);

/// Full model. `emb` must have arch().emb_dim elements. `rng` is only used in
/// train mode.
double model_forward(const Model& m, const NormalizedImage& img, std::span<const double> emb,
                     bool train_mode, Rng& rng, ForwardCache* cache = nullptr);

/// Accumulates dlogit-weighted parameter gradients into `grads` for every group
/// listed in `groups` and skips the rest (backpropagation stops below the
/// shallowest listed backbone group).
void model_backward(const Model& m, const ForwardCache& cache, double dlogit, Model& grads,
                    const std::vector<std::string>& groups);

// ---- loss, optimizer, schedules ---------------------------------------------

double smooth_label(int y, double eps);

/// Stable max(z,0) - z t + log(1 + exp(-|z|)).
double bce_with_logits(double logit, double target);
/// d loss / d logit = sigmoid(logit) - target.
double bce_with_logits_grad(double logit, double target);
double sigmoid(double z);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

/// One Adam update with L2 weight decay folded into the gradient
/// (g <- g + weight_decay * param). Throws TrainingError naming `block` when a
/// gradient is not finite; params are untouched in that case.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const TrainConfig& cfg, std::string_view block = "params");

/// Cosine annealing restarted every sched_T epochs, floor sched_gamma * base_lr.
double lr_at(int epoch, const TrainConfig& cfg);

struct GroupPlan {
  std::string group;
  bool trainable = false;
  double lr_mult = 0.0;
};

/// Which parameter groups train at `epoch` and their lr multipliers. The head
/// always trains at x1; the stem trains at x1 unless the setup uses baseline
/// packing; the deepest stages join at unfreeze_epochs[k] with
/// stage_lr_scale^(k+1). "frozen" never unfreezes a stage.
std::vector<GroupPlan> unfreeze_plan(int epoch, const TrainConfig& cfg, const FeatureConfig& setup,
                                     int num_stages);

std::size_t trainable_param_count(const Model& m, const std::vector<GroupPlan>& plan);

}  // namespace mammofuse
