#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "mammofuse/error.hpp"
#include "mammofuse/fusion.hpp"
#include "support.hpp"

using namespace mammofuse;
using testing::random_image;
using testing::TempDir;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

EmbeddingTable small_table() {
  EmbeddingTable t(3);
  t.add("s1", {{0.5f, -1.0f, 2.0f}});
  t.add("case/7", {{0.0f, 1e-7f, -3.25f}});
  return t;
}

}  // namespace

TEST_CASE("setup names round-trip") {
  const auto& names = canonical_setups();
  CHECK(names.size() == 16);
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == 16);
  for (const auto& n : names) {
    const auto cfg = FeatureConfig::parse(n);
    CHECK(cfg.canonical_name() == n);
    CHECK(cfg.setup_name == n);
  }
  const auto all = FeatureConfig::parse("all");
  CHECK((all.use_d1 && all.use_d2 && all.use_t && all.use_lbp && !all.use_dino));
  const auto dall = FeatureConfig::parse("dino_all");
  CHECK((dall.use_d1 && dall.use_d2 && dall.use_t && dall.use_lbp && dall.use_dino));
  const auto d2l = FeatureConfig::parse("d2_LBP");
  CHECK((d2l.use_d2 && d2l.use_lbp && !d2l.use_d1 && !d2l.use_t && !d2l.use_dino));
  CHECK(FeatureConfig::parse("baseline").is_baseline_packing());
  CHECK(FeatureConfig::parse("frozen").is_baseline_packing());
  CHECK(FeatureConfig::parse("frozen").frozen);
  CHECK_FALSE(FeatureConfig::parse("dino").is_baseline_packing());
  CHECK_THROWS(FeatureConfig::parse("LBP_d2"));
  CHECK_THROWS(FeatureConfig::parse("lbp"));
  CHECK_THROWS(FeatureConfig::parse(""));
  CHECK_THROWS(FeatureConfig::parse("d1_d1"));
}

TEST_CASE("gray_to_rgb") {
  const auto c = gray_to_rgb(GrayImage(3, 2, 0.4));
  for (int p = 0; p < 3; ++p) CHECK(c.plane(p) == GrayImage(3, 2, 0.4));
  Rng rng = derive_rng({31});
  const auto g = random_image(5, 4, rng);
  const auto r = gray_to_rgb(g);
  CHECK(r.red() == g);
  CHECK(r.green() == g);
  CHECK(r.blue() == g);
  CHECK(gray_to_rgb(GrayImage(2, 2)) == RgbImage(GrayImage(2, 2), GrayImage(2, 2), GrayImage(2, 2)));
}

TEST_CASE("pack_early") {
  Rng rng = derive_rng({32});
  const auto g = random_image(12, 10, rng);
  const KernelSpec k;
  CHECK(pack_early(g, FeatureConfig::parse("baseline"), k) == gray_to_rgb(g));
  CHECK(pack_early(g, FeatureConfig::parse("dino"), k) == gray_to_rgb(g));

  const auto d1 = pack_early(g, FeatureConfig::parse("d1"), k);
  CHECK(d1.red() == d1_map(g, k).image);
  CHECK(d1.green() == g);
  CHECK(d1.blue() == g);

  const auto all = pack_early(g, FeatureConfig::parse("all"), k);
  const auto a = d1_map(g, k).image, b = d2_map(g, k).image, t = threshold_map(g, k.tau).image;
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(all.red().data()[i] == doctest::Approx((a.data()[i] + b.data()[i] + t.data()[i]) / 3).epsilon(1e-12));
  CHECK(all.blue() == lbp_map(g).image);
  CHECK(all.green() == g);

  const auto tl = pack_early(g, FeatureConfig::parse("t_LBP"), k);
  CHECK(tl.red() == t);
  CHECK(tl.blue() == lbp_map(g).image);
}

TEST_CASE("pack_early invariants over every setup") {
  Rng rng = derive_rng({33});
  for (int n = 0; n < 10; ++n) {
    const auto g = random_image(9, 9, rng);
    for (const auto& name : canonical_setups()) {
      const auto cfg = FeatureConfig::parse(name);
      const auto p = pack_early(g, cfg);
      CHECK(p.green() == g);
      for (int c = 0; c < 3; ++c)
        for (double v : p.plane(c).data()) CHECK((v >= 0 && v <= 1));
      if (cfg.is_baseline_packing()) CHECK(p == gray_to_rgb(g));
    }
  }
}

TEST_CASE("EmbeddingTable") {
  auto t = small_table();
  CHECK(t.size() == 2);
  CHECK(t.lookup("s1").values[2] == 2.0f);
  CHECK_THROWS_AS(t.lookup("nope"), MissingEmbedding);
  try {
    t.lookup("nope");
  } catch (const MissingEmbedding& e) {
    CHECK(e.id() == "nope");
  }
  CHECK_THROWS_AS(t.add("s1", {{1, 2, 3}}), std::invalid_argument);
  CHECK_THROWS_AS(t.add("s2", {{1, 2}}), std::invalid_argument);
  CHECK_THROWS_AS(t.add("s3", {{1, NAN, 3}}), std::invalid_argument);
}

TEST_CASE("EMB1 encoding") {
  SUBCASE("layout") {
    EmbeddingTable t(2);
    t.add("ab", {{1.0f, -2.0f}});
    const auto s = encode_embeddings(t);
    CHECK(s.size() == 4 + 4 + 4 + 2 + 2 + 8);
    CHECK(s.substr(0, 4) == "EMB1");
    std::uint32_t count, dim;
    std::memcpy(&count, s.data() + 4, 4);
    std::memcpy(&dim, s.data() + 8, 4);
    CHECK(count == 1);
    CHECK(dim == 2);
    CHECK(static_cast<unsigned char>(s[12]) == 2);
    CHECK(s.substr(14, 2) == "ab");
    float f;
    std::memcpy(&f, s.data() + 20, 4);
    CHECK(f == -2.0f);
  }
  SUBCASE("round trip through a file is exact") {
    TempDir dir("emb");
    const auto t = small_table();
    write_embeddings(t, dir / "e.emb");
    const auto back = load_embeddings(dir / "e.emb");
    CHECK(back == t);
    CHECK(encode_embeddings(back) == encode_embeddings(t));
  }
  SUBCASE("empty and zero tables") {
    EmbeddingTable empty(384);
    const auto e = decode_embeddings(bytes_of(encode_embeddings(empty)), "mem");
    CHECK(e.size() == 0);
    CHECK(e.dim() == 384);
    CHECK_THROWS_AS(e.lookup("s1"), MissingEmbedding);
    EmbeddingTable z(384);
    z.add("s1", {std::vector<float>(384, 0.0f)});
    const auto zz = decode_embeddings(bytes_of(encode_embeddings(z)), "mem");
    CHECK(zz.lookup("s1") == EmbeddingVector{std::vector<float>(384, 0.0f)});
  }
  SUBCASE("malformed input") {
    const auto good = encode_embeddings(small_table());
    CHECK_THROWS_AS(decode_embeddings(bytes_of("EMB2" + good.substr(4)), "m"), FormatError);
    CHECK_THROWS_AS(decode_embeddings(bytes_of(good.substr(0, good.size() - 1)), "m"), FormatError);
    CHECK_THROWS_AS(decode_embeddings(bytes_of(good + "x"), "m"), FormatError);
    CHECK_THROWS_AS(decode_embeddings(bytes_of("EM"), "m"), FormatError);
    // the same record twice
    EmbeddingTable one(3);
    one.add("s1", {{1, 2, 3}});
    auto dup = encode_embeddings(one);
    const std::string rec = dup.substr(12);
    dup += rec;
    dup[4] = 2;
    CHECK_THROWS_AS(decode_embeddings(bytes_of(dup), "m"), FormatError);
    TempDir dir("emb_bad");
    CHECK_THROWS_AS(load_embeddings(dir / "absent.emb"), FormatError);
  }
}

TEST_CASE("concat_late") {
  const std::vector<double> bb{1, 2};
  CHECK(concat_late(bb, {{3.0f}}) == std::vector<double>{1, 2, 3});
  CHECK(concat_late(bb, {}) == bb);
  const std::vector<double> wide(2048, 0.5);
  const auto c = concat_late(wide, {std::vector<float>(384, 0.25f)});
  CHECK(c.size() == 2432);
  CHECK(std::equal(wide.begin(), wide.end(), c.begin()));
  CHECK(c.back() == 0.25);
}
