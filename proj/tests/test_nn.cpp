#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mammofuse/error.hpp"
#include "mammofuse/nn.hpp"
#include "mammofuse/train.hpp"
#include "support.hpp"

using namespace mammofuse;
using testing::random_image;
using testing::TempDir;

namespace {

ModelArch tiny_arch(std::uint32_t emb_dim = 0) {
  ModelArch a;
  a.stem_channels = 3;
  a.stage_channels = {4, 4, 8};
  a.hidden = 6;
  a.emb_dim = emb_dim;
  return a;
}

NormalizedImage random_input(int size, Rng& rng) {
  return normalize(RgbImage(random_image(size, size, rng), random_image(size, size, rng), random_image(size, size, rng)),
                   ChannelStats::imagenet());
}

struct Sample {
  NormalizedImage img;
  std::vector<double> emb;
  double target;
};

double batch_loss(const Model& m, const std::vector<Sample>& batch) {
  Rng unused = derive_rng({0});
  double l = 0;
  for (const auto& s : batch) l += bce_with_logits(model_forward(m, s.img, s.emb, false, unused), s.target);
  return l / static_cast<double>(batch.size());
}

Model batch_grad(const Model& m, const std::vector<Sample>& batch) {
  Model g = m.zeros_like();
  Rng unused = derive_rng({0});
  for (const auto& s : batch) {
    ForwardCache cache;
    const double z = model_forward(m, s.img, s.emb, false, unused, &cache);
    model_backward(m, cache, bce_with_logits_grad(z, s.target) / static_cast<double>(batch.size()), g, m.groups());
  }
  return g;
}

// Small on-disk dataset whose label is carried entirely by a 2-d embedding.
struct EmbeddingDataset {
  TempDir dir{"nn_train"};
  Manifest manifest;
  EmbeddingTable table{2};

  explicit EmbeddingDataset(int per_class) {
    Rng rng = derive_rng({77});
    manifest.base_dir = dir.path();
    std::filesystem::create_directories(dir / "img");
    for (int label = 0; label <= 1; ++label)
      for (int i = 0; i < per_class; ++i) {
        const std::string id = (label ? "m" : "b") + std::to_string(i);
        save_pgm(random_image(8, 8, rng), dir / ("img/" + id + ".pgm"));
        const Split split = i < per_class * 6 / 10 ? Split::Train : i < per_class * 8 / 10 ? Split::Val : Split::Test;
        manifest.records.push_back({id, "img/" + id + ".pgm", label, split});
        const double sign = label ? 1.0 : -1.0;
        table.add(id, {{static_cast<float>(sign * (1.0 + uniform01(rng))), static_cast<float>(uniform01(rng) - 0.5)}});
      }
  }

  ExampleContext context(const std::string& setup, ImageCache& cache) const {
    ExampleContext ctx;
    ctx.manifest = &manifest;
    ctx.setup = FeatureConfig::parse(setup);
    ctx.policy.train_resize = 8;
    ctx.policy.eval_resize = 8;
    ctx.policy.crop = 8;
    ctx.embeddings = &table;
    ctx.cache = &cache;
    return ctx;
  }
};

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(TrainConfig{}.validate());
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS(c.validate());
  c = {};
  c.unfreeze_epochs = {10, 4};
  CHECK_THROWS(c.validate());
  c = {};
  c.sched_gamma = 1.5;
  CHECK_THROWS(c.validate());
  c = {};
  c.epochs = 14;
  CHECK_THROWS(c.validate());
  c.unfreeze_epochs = {4, 10};
  CHECK_NOTHROW(c.validate());
  c.unfreeze_epochs.clear();
  c.epochs = 1;
  CHECK_NOTHROW(c.validate());
  CHECK_NOTHROW(ModelArch{}.validate());
  ModelArch a;
  a.stage_channels = {8, 8};
  CHECK_THROWS(a.validate());
}

TEST_CASE("model init and parameter blocks") {
  const auto arch = tiny_arch(2);
  const Model a = Model::init(arch, 5), b = Model::init(arch, 5), c = Model::init(arch, 6);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  const auto blocks = a.blocks();
  std::vector<std::string> names;
  for (const auto& bl : blocks) names.push_back(bl.name);
  CHECK(names == std::vector<std::string>{"stem.weight", "stem.bias", "stage1.weight", "stage1.bias", "stage2.weight",
                                          "stage2.bias", "stage3.weight", "stage3.bias", "head.w1", "head.b1",
                                          "head.w2", "head.b2"});
  CHECK(a.param_count("stem") == 3 * 3 * 9 + 3);
  CHECK(a.param_count("stage3") == 8 * 4 * 9 + 8);
  CHECK(a.param_count("head") == 6 * 10 + 6 + 6 + 1);
  CHECK(a.groups() == std::vector<std::string>{"stem", "stage1", "stage2", "stage3", "head"});
  const Model z = a.zeros_like();
  for (const auto& bl : z.blocks())
    for (double v : bl.values) CHECK(v == 0.0);
}

TEST_CASE("head_forward") {
  HeadParams p;
  p.in_dim = 3;
  p.hidden = 4;
  p.w1.assign(12, 0.0);
  p.b1.assign(4, 0.0);
  p.w2.assign(4, 0.0);
  p.b2.assign(1, 0.0);
  Rng rng = derive_rng({1});
  const std::vector<double> x{0.3, -2.0, 5.0};
  CHECK(head_forward(x, p, true, rng) == 0.0);
  CHECK(head_forward(x, p, false, rng) == 0.0);
  CHECK_THROWS_AS(head_forward(std::vector<double>{1.0}, p, false, rng), std::invalid_argument);

  const Model m = Model::init(tiny_arch(3), 9);
  const std::vector<double> x11(11, 0.4);
  CHECK(head_forward(x11, m.head(), false, rng) == head_forward(x11, m.head(), false, rng));
}

TEST_CASE("inverted dropout keeps the expectation") {
  HeadParams p;
  p.in_dim = 2;
  p.hidden = 64;
  p.dropout_rate = 0.4;
  Rng init = derive_rng({2});
  for (int i = 0; i < 128; ++i) p.w1.push_back(uniform01(init));
  p.b1.assign(64, 0.1);
  p.b2.assign(1, 0.0);
  p.w2.assign(64, 1.0);
  const std::vector<double> x{0.7, 0.2};
  Rng rng = derive_rng({3});
  const double expect = head_forward(x, p, false, rng);
  double sum = 0;
  for (int i = 0; i < 10000; ++i) sum += head_forward(x, p, true, rng);
  CHECK(std::abs(sum / 10000 - expect) <= 0.02 * std::abs(expect));
}

TEST_CASE("dropout mask values and rate") {
  ModelArch arch = tiny_arch();
  arch.hidden = 200;
  const Model m = Model::init(arch, 8);
  Rng rng = derive_rng({44});
  const auto img = random_input(9, rng);
  std::size_t dropped = 0, total = 0;
  for (int i = 0; i < 50; ++i) {
    ForwardCache cache;
    model_forward(m, img, {}, true, rng, &cache);
    for (double k : cache.mask) {
      CHECK((k == 0.0 || k == doctest::Approx(1 / 0.6).epsilon(1e-15)));
      dropped += k == 0.0;
      ++total;
    }
  }
  CHECK(static_cast<double>(dropped) / total == doctest::Approx(0.4).epsilon(0.05));
  ForwardCache eval;
  model_forward(m, img, {}, false, rng, &eval);
  for (double k : eval.mask) CHECK(k == 1.0);
}

TEST_CASE("smooth_label") {
  CHECK(smooth_label(1, 0.1) == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(smooth_label(0, 0.1) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(smooth_label(1, 0.0) == 1.0);
  CHECK(smooth_label(0, 0.0) == 0.0);
  CHECK_THROWS(smooth_label(1, 1.0));
}

TEST_CASE("bce_with_logits") {
  CHECK(bce_with_logits(0, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce_with_logits(0, 0.5) == doctest::Approx(0.693147).epsilon(1e-6));
  // log1p(exp(-20)) to full precision
  CHECK(bce_with_logits(20, 1) == doctest::Approx(2.0611536181902037e-09).epsilon(1e-12));
  CHECK(std::isfinite(bce_with_logits(800, 0)));
  CHECK(bce_with_logits(800, 0) == 800.0);
  CHECK(bce_with_logits(-800, 1) == 800.0);
  CHECK(bce_with_logits_grad(0, 0.95) == doctest::Approx(-0.45).epsilon(1e-15));
  CHECK(sigmoid(-800) == 0.0);
  CHECK(sigmoid(800) == 1.0);

  const double h = 1e-5;
  double worst = 0;
  for (double z = -10; z <= 10.0001; z += 0.25)
    for (double t : {0.0, 0.05, 0.5, 0.95, 1.0}) {
      const double fd = (bce_with_logits(z + h, t) - bce_with_logits(z - h, t)) / (2 * h);
      worst = std::max(worst, std::abs(fd - bce_with_logits_grad(z, t)));
    }
  CHECK(worst < 1e-6);
}

TEST_CASE("adam_step") {
  TrainConfig cfg;
  cfg.weight_decay = 0;
  SUBCASE("first step moves by lr") {
    std::vector<double> w{0.5, -0.5};
    AdamState st;
    adam_step(w, std::vector<double>{1.0, -1.0}, st, 1e-4, cfg);
    CHECK(w[0] - 0.5 == doctest::Approx(-1e-4 / (1 + 1e-8)).epsilon(1e-9));
    CHECK(w[1] + 0.5 == doctest::Approx(1e-4 / (1 + 1e-8)).epsilon(1e-9));
    CHECK(st.t == 1);
  }
  SUBCASE("zero gradient leaves params") {
    std::vector<double> w{0.5, -0.5};
    AdamState st;
    for (int i = 0; i < 3; ++i) adam_step(w, std::vector<double>{0.0, 0.0}, st, 1e-3, cfg);
    CHECK(w == std::vector<double>{0.5, -0.5});
  }
  SUBCASE("scalar trace on w^2") {
    for (double wd : {0.0, 1e-3}) {
      TrainConfig c = cfg;
      c.weight_decay = wd;
      std::vector<double> w{1.0};
      AdamState st;
      double rw = 1.0, rm = 0, rv = 0;
      for (int t = 1; t <= 10; ++t) {
        adam_step(w, std::vector<double>{2 * w[0]}, st, 1e-2, c);
        const double g = 2 * rw + wd * rw;
        rm = 0.9 * rm + 0.1 * g;
        rv = 0.999 * rv + 0.001 * g * g;
        const double mh = rm / (1 - std::pow(0.9, t)), vh = rv / (1 - std::pow(0.999, t));
        rw -= 1e-2 * mh / (std::sqrt(vh) + 1e-8);
        CHECK(std::abs(w[0] - rw) < 1e-10);
      }
    }
  }
  SUBCASE("non-finite gradient names the block and changes nothing") {
    std::vector<double> w{0.5, -0.5};
    AdamState st;
    CHECK_THROWS_AS(adam_step(w, std::vector<double>{1.0, NAN}, st, 1e-3, cfg, "stage2.weight"), TrainingError);
    try {
      adam_step(w, std::vector<double>{INFINITY, 0.0}, st, 1e-3, cfg, "stage2.weight");
    } catch (const TrainingError& e) {
      CHECK(std::string(e.what()).find("stage2.weight") != std::string::npos);
    }
    CHECK(w == std::vector<double>{0.5, -0.5});
    CHECK(st.t == 0);
  }
}

TEST_CASE("lr_at") {
  const TrainConfig cfg;
  CHECK(lr_at(0, cfg) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(5, cfg) == doctest::Approx(5.5e-5).epsilon(1e-12));
  CHECK(lr_at(10, cfg) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(20, cfg) == doctest::Approx(1e-4).epsilon(1e-12));
  for (int e = 0; e < 100; ++e) {
    CHECK(lr_at(e, cfg) <= cfg.base_lr * (1 + 1e-12));
    CHECK(lr_at(e, cfg) >= cfg.sched_gamma * cfg.base_lr * (1 - 1e-12));
    if (e % 10 != 9) CHECK(lr_at(e + 1, cfg) < lr_at(e, cfg));
  }
}

TEST_CASE("unfreeze_plan") {
  const TrainConfig cfg;
  auto find = [](const std::vector<GroupPlan>& p, const std::string& g) {
    for (const auto& x : p)
      if (x.group == g) return x;
    FAIL("missing group " << g);
    return GroupPlan{};
  };
  SUBCASE("epoch 3") {
    const auto base = unfreeze_plan(3, cfg, FeatureConfig::parse("baseline"), 3);
    CHECK(find(base, "head").trainable);
    CHECK(find(base, "head").lr_mult == 1.0);
    CHECK_FALSE(find(base, "stem").trainable);
    for (auto s : {"stage1", "stage2", "stage3"}) CHECK_FALSE(find(base, s).trainable);
    const auto d1 = unfreeze_plan(3, cfg, FeatureConfig::parse("d1"), 3);
    CHECK(find(d1, "stem").trainable);
    CHECK(find(d1, "stem").lr_mult == 1.0);
    CHECK_FALSE(find(d1, "stage3").trainable);
  }
  SUBCASE("epochs 4, 10, 14") {
    const auto setup = FeatureConfig::parse("baseline");
    const auto p4 = unfreeze_plan(4, cfg, setup, 3);
    CHECK(find(p4, "stage3").trainable);
    CHECK(find(p4, "stage3").lr_mult == doctest::Approx(0.1));
    CHECK_FALSE(find(p4, "stage2").trainable);
    const auto p10 = unfreeze_plan(10, cfg, setup, 3);
    CHECK(find(p10, "head").lr_mult == 1.0);
    CHECK(find(p10, "stage3").lr_mult == doctest::Approx(0.1));
    CHECK(find(p10, "stage2").lr_mult == doctest::Approx(0.01));
    CHECK_FALSE(find(p10, "stage1").trainable);
    const auto p14 = unfreeze_plan(14, cfg, setup, 3);
    CHECK(find(p14, "stage1").lr_mult == doctest::Approx(0.001));
    const auto deep = unfreeze_plan(24, cfg, setup, 5);
    CHECK_FALSE(find(deep, "stage2").trainable);
    CHECK(find(deep, "stage3").trainable);
  }
  SUBCASE("frozen never unfreezes") {
    for (int e = 0; e < 25; ++e) {
      const auto p = unfreeze_plan(e, cfg, FeatureConfig::parse("frozen"), 3);
      for (const auto& g : p) CHECK(g.trainable == (g.group == "head"));
    }
  }
  SUBCASE("trainable count jumps exactly at the unfreeze epochs") {
    const Model m = Model::init(tiny_arch(), 1);
    for (const auto& name : {"baseline", "d1", "dino_all"}) {
      std::vector<int> jumps;
      std::size_t prev = trainable_param_count(m, unfreeze_plan(0, cfg, FeatureConfig::parse(name), 3));
      for (int e = 1; e < 25; ++e) {
        const std::size_t n = trainable_param_count(m, unfreeze_plan(e, cfg, FeatureConfig::parse(name), 3));
        CHECK(n >= prev);
        if (n > prev) jumps.push_back(e);
        prev = n;
      }
      CHECK(jumps == std::vector<int>{4, 10, 14});
    }
  }
}

TEST_CASE("full-model gradient matches finite differences") {
  Rng rng = derive_rng({41});
  const Model m0 = Model::init(tiny_arch(2), 3);
  std::vector<Sample> batch;
  for (int i = 0; i < 4; ++i)
    batch.push_back({random_input(11, rng), {uniform01(rng) - 0.5, uniform01(rng)}, smooth_label(i % 2, 0.1)});
  const Model g = batch_grad(m0, batch);

  Model m = m0;
  const double h = 1e-5;
  double diff2 = 0, ana2 = 0, num2 = 0;
  auto blocks = m.blocks();
  const auto gblocks = g.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (std::size_t i = 0; i < blocks[b].values.size(); ++i) {
      double& w = blocks[b].values[i];
      const double keep = w;
      w = keep + h;
      const double lp = batch_loss(m, batch);
      w = keep - h;
      const double lm = batch_loss(m, batch);
      w = keep;
      const double fd = (lp - lm) / (2 * h), an = gblocks[b].values[i];
      diff2 += (fd - an) * (fd - an);
      ana2 += an * an;
      num2 += fd * fd;
    }
  const double rel = std::sqrt(diff2) / std::max(std::sqrt(ana2), std::sqrt(num2));
  CHECK(ana2 > 0);
  CHECK(rel < 1e-4);
}

TEST_CASE("backward skips groups that are not requested") {
  Rng rng = derive_rng({42});
  const Model m = Model::init(tiny_arch(), 4);
  const auto img = random_input(10, rng);
  ForwardCache cache;
  Rng unused = derive_rng({0});
  model_forward(m, img, {}, false, unused, &cache);
  Model partial = m.zeros_like(), full = m.zeros_like();
  model_backward(m, cache, 0.7, partial, {"head", "stage3"});
  model_backward(m, cache, 0.7, full, m.groups());
  const auto pb = partial.blocks();
  const auto fb = full.blocks();
  for (std::size_t b = 0; b < pb.size(); ++b) {
    const bool wanted = pb[b].group == "head" || pb[b].group == "stage3";
    for (std::size_t i = 0; i < pb[b].values.size(); ++i)
      CHECK(pb[b].values[i] == (wanted ? fb[b].values[i] : 0.0));
  }
}

TEST_CASE("eval forward is a pure function") {
  Rng rng = derive_rng({43});
  const Model m = Model::init(tiny_arch(), 4);
  const auto img = random_input(13, rng);
  Rng a = derive_rng({1}), b = derive_rng({2});
  CHECK(model_forward(m, img, {}, false, a) == model_forward(m, img, {}, false, b));
  CHECK_THROWS(model_forward(m, img, std::vector<double>{1.0}, false, a));
}

TEST_CASE("optimal constant logit under label smoothing is zero") {
  TrainConfig cfg;
  cfg.weight_decay = 0;
  std::vector<double> b{1.5};
  AdamState st;
  const double t1 = smooth_label(1, 0.1), t0 = smooth_label(0, 0.1);
  for (int i = 0; i < 4000; ++i) {
    const double g = (bce_with_logits_grad(b[0], t1) + bce_with_logits_grad(b[0], t0)) / 2;
    adam_step(b, std::vector<double>{g}, st, 1e-2, cfg);
  }
  CHECK(std::abs(b[0]) < 1e-3);
  CHECK(sigmoid(b[0]) == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("training on a separable embedding") {
  EmbeddingDataset data(30);
  ImageCache cache;
  const auto ctx = data.context("dino", cache);
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.unfreeze_epochs = {4, 10, 11};
  cfg.batch_size = 8;
  cfg.base_lr = 3e-3;
  cfg.seed = 5;
  ModelArch arch = tiny_arch();
  const auto r = train(ctx, cfg, arch);
  REQUIRE(r.history.size() == 12);
  for (int e = 1; e < 5; ++e) CHECK(r.history[e].train_loss < r.history[e - 1].train_loss);
  CHECK(r.best_val_auc == doctest::Approx(1.0).epsilon(0.02));
  CHECK(r.model.arch().emb_dim == 2);
  const auto test = predict(r.model, ctx, Split::Test);
  CHECK(test.scores.size() == 12);
  CHECK(auc(roc_curve(test)) >= 0.98);

  SUBCASE("bitwise reproducible") {
    const auto again = train(ctx, cfg, arch);
    CHECK(again.model == r.model);
    CHECK(again.history == r.history);
    CHECK(encode_history(again.history) == encode_history(r.history));
  }
  SUBCASE("history records the schedule") {
    for (const auto& h : r.history) CHECK(h.lr == doctest::Approx(lr_at(h.epoch, cfg)).epsilon(1e-12));
    CHECK(r.history[3].trainable_params < r.history[4].trainable_params);
    CHECK(r.history[9].trainable_params < r.history[10].trainable_params);
    CHECK(r.history[10].trainable_params < r.history[11].trainable_params);
    const auto csv = encode_history(r.history);
    CHECK(csv.rfind("epoch,train_loss,val_auc,lr,trainable_param_count\n", 0) == 0);
  }
  SUBCASE("checkpoint round trip") {
    TempDir dir("ckpt");
    const Checkpoint ck{r.model, cfg, "dino"};
    save_checkpoint(ck, dir / "a.bin");
    const auto back = load_checkpoint(dir / "a.bin");
    CHECK(back.model == r.model);
    CHECK(back.config == cfg);
    CHECK(back.setup == "dino");
    CHECK(encode_checkpoint(back) == encode_checkpoint(ck));
    auto bytes = encode_checkpoint(ck);
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint({bytes.begin(), bytes.end()}, "mem"), FormatError);
    CHECK_THROWS_AS(decode_checkpoint({bytes.begin(), bytes.begin() + 20}, "mem"), FormatError);
  }
}

TEST_CASE("training errors") {
  EmbeddingDataset data(10);
  ImageCache cache;
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.unfreeze_epochs.clear();
  SUBCASE("uncovered embedding id") {
    EmbeddingTable partial(2);
    partial.add("b0", {{0.0f, 0.0f}});
    auto ctx = data.context("dino", cache);
    ctx.embeddings = &partial;
    CHECK_THROWS_AS(train(ctx, cfg, tiny_arch()), MissingEmbedding);
  }
  SUBCASE("one-class validation split") {
    Manifest m = data.manifest;
    for (auto& r : m.records)
      if (r.split == Split::Val && r.label == 1) r.split = Split::Test;
    auto ctx = data.context("baseline", cache);
    ctx.manifest = &m;
    CHECK_THROWS_AS(train(ctx, cfg, tiny_arch()), TrainingError);
  }
  SUBCASE("empty training split") {
    Manifest m = data.manifest;
    for (auto& r : m.records)
      if (r.split == Split::Train) r.split = Split::Test;
    auto ctx = data.context("baseline", cache);
    ctx.manifest = &m;
    CHECK_THROWS_AS(train(ctx, cfg, tiny_arch()), TrainingError);
  }
}
