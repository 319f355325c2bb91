#include "mammofuse/train.hpp"

#include <cmath>
#include <map>

#include "mammofuse/error.hpp"
#include "mammofuse/io_util.hpp"

namespace mammofuse {

namespace {

bool has_both_classes(const Manifest& m, Split s) { return m.count(s, 0) > 0 && m.count(s, 1) > 0; }

}  // namespace

ScoredSet predict(const Model& model, const ExampleContext& ctx, Split split) {
  ScoredSet out;
  Rng unused(0);
  for (const auto& batch : batches(*ctx.manifest, split, 32, 0, 0)) {
    for (const auto& ex : materialize(ctx, batch, Mode::Eval, 0, 0)) {
      out.scores.push_back(sigmoid(model_forward(model, ex.image, ex.embedding, false, unused)));
      out.labels.push_back(ex.label);
    }
  }
  return out;
}

TrainResult train(const ExampleContext& ctx, const TrainConfig& cfg, ModelArch arch, const EpochObserver& observer) {
  cfg.validate();
  ctx.policy.validate();
  ctx.kernels.validate();
  const Manifest& m = *ctx.manifest;
  if (m.indices(Split::Train).empty()) throw TrainingError("train split is empty");
  if (m.indices(Split::Val).empty()) throw TrainingError("val split is empty");
  if (!has_both_classes(m, Split::Val)) throw TrainingError("val split must contain both classes");

  arch.emb_dim = 0;
  if (ctx.setup.use_dino) {
    if (!ctx.embeddings) throw TrainingError("setup '" + ctx.setup.setup_name + "' needs an embedding table");
    arch.emb_dim = ctx.embeddings->dim();
    for (std::size_t i : m.indices(Split::Train)) ctx.embeddings->lookup(m.records[i].id);
    for (std::size_t i : m.indices(Split::Val)) ctx.embeddings->lookup(m.records[i].id);
  }

  Model model = Model::init(arch, cfg.seed);
  const int nstages = static_cast<int>(arch.stage_channels.size());
  std::map<std::size_t, AdamState> states;  // keyed by block index

  TrainResult result;
  result.best_val_auc = -1;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto plan = unfreeze_plan(epoch, cfg, ctx.setup, nstages);
    std::map<std::string, double> mult;
    std::vector<std::string> groups;
    for (const auto& g : plan)
      if (g.trainable) {
        groups.push_back(g.group);
        mult[g.group] = g.lr_mult;
      }
    const double lr = lr_at(epoch, cfg);

    double loss_sum = 0;
    std::size_t seen = 0;
    const auto epoch_batches = batches(m, Split::Train, cfg.batch_size, cfg.seed, epoch);
    for (std::size_t bi = 0; bi < epoch_batches.size(); ++bi) {
      const auto examples = materialize(ctx, epoch_batches[bi], Mode::Train, cfg.seed, epoch);
      Model grads = model.zeros_like();
      Rng dropout_rng = derive_rng({cfg.seed, static_cast<std::uint64_t>(epoch), bi, 0xd209});
      const double inv_n = 1.0 / static_cast<double>(examples.size());
      for (const auto& ex : examples) {
        ForwardCache cache;
        const double logit = model_forward(model, ex.image, ex.embedding, true, dropout_rng, &cache);
        const double target = smooth_label(ex.label, cfg.label_smooth);
        const double loss = bce_with_logits(logit, target);
        if (!std::isfinite(loss))
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " on record '" +
                              m.records[ex.record].id + "'");
        loss_sum += loss;
        model_backward(model, cache, bce_with_logits_grad(logit, target) * inv_n, grads, groups);
      }
      seen += examples.size();

      auto params = model.blocks();
      auto gblocks = grads.blocks();
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto it = mult.find(params[k].group);
        if (it == mult.end()) continue;
        adam_step(params[k].values, gblocks[k].values, states[k], lr * it->second, cfg, params[k].name);
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.lr = lr;
    rec.trainable_params = trainable_param_count(model, plan);
    rec.val_auc = auc(roc_curve(predict(model, ctx, Split::Val)));
    result.history.push_back(rec);
    if (rec.val_auc > result.best_val_auc) {
      result.best_val_auc = rec.val_auc;
      result.best_epoch = epoch;
      result.model = model;
    }
    if (observer) observer(rec);
  }
  return result;
}

std::string encode_history(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_auc,lr,trainable_param_count\n";
  for (const auto& r : history)
    out += std::to_string(r.epoch) + "," + io::fmt_real(r.train_loss, 8) + "," + io::fmt_real(r.val_auc, 6) + "," +
           io::fmt_sci(r.lr) + "," + std::to_string(r.trainable_params) + "\n";
  return out;
}

}  // namespace mammofuse
