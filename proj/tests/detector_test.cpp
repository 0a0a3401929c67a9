#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ccyd/detector.hpp"
#include "oracles.hpp"

#include <set>

using namespace ccyd;

namespace {

Tensor random_image(const DetectorConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t n = static_cast<std::size_t>(cfg.in_channels) * cfg.input_size * cfg.input_size;
  std::vector<float> px(n);
  for (auto& v : px) v = static_cast<float>(oracles::uni(rng, 0.0, 1.0));
  return Tensor::from_data({1, cfg.in_channels, cfg.input_size, cfg.input_size}, std::move(px));
}

}  // namespace

TEST_CASE("config validation names the offending field") {
  DetectorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.input_size = 100;  // not divisible by 32
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("input_size"), std::invalid_argument);
  cfg = DetectorConfig{};
  cfg.width_base = 7;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("width_base"), std::invalid_argument);
  cfg = DetectorConfig{};
  cfg.num_classes = 0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("num_classes"), std::invalid_argument);
  cfg = DetectorConfig{};
  cfg.anchors[0][0][0] = -3.0f;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("anchors"), std::invalid_argument);
}

TEST_CASE("layer_specs chain is shape-consistent and covers the whole net") {
  DetectorConfig cfg;
  const auto specs = layer_specs(cfg);
  CHECK(specs.size() > 20);
  std::set<std::string> names;
  for (const auto& s : specs) {
    CHECK(s.in_ch > 0);
    CHECK(s.out_ch > 0);
    CHECK((s.k == 1 || s.k == 3));
    CHECK(names.insert(s.name).second);  // unique names
  }
  // the three heads close the list and emit A*(5+nc) channels
  const int head_ch = cfg.head_channels();
  CHECK(head_ch == 21);
  int heads = 0;
  for (const auto& s : specs)
    if (s.name.rfind("head.", 0) == 0) {
      CHECK(s.out_ch == head_ch);
      CHECK(s.linear);
      CHECK(s.k == 1);
      ++heads;
    } else {
      CHECK(!s.linear);
    }
  CHECK(heads == 3);
}

TEST_CASE("build is deterministic in the seed and shaped per the specs") {
  DetectorConfig cfg;
  auto w1 = build(cfg, 42);
  auto w2 = build(cfg, 42);
  auto w3 = build(cfg, 43);
  REQUIRE(w1.size() == w2.size());
  bool any_diff_seed43 = false;
  for (const auto& [name, t] : w1) {
    REQUIRE(w2.count(name) == 1);
    const Tensor& u = w2.at(name);
    REQUIRE(u.size() == t.size());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.data()[i] == u.data()[i]);
    const Tensor& v = w3.at(name);
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t.data()[i] != v.data()[i]) any_diff_seed43 = true;
  }
  CHECK(any_diff_seed43);

  const auto specs = layer_specs(cfg);
  CHECK(w1.size() == 2 * specs.size());  // weight + bias per conv
  for (const auto& s : specs) {
    REQUIRE(w1.count(s.name + ".weight") == 1);
    REQUIRE(w1.count(s.name + ".bias") == 1);
    const Tensor& wt = w1.at(s.name + ".weight");
    CHECK(wt.shape() == std::vector<int>{s.out_ch, s.in_ch, s.k, s.k});
    const Tensor& bt = w1.at(s.name + ".bias");
    CHECK(bt.shape() == std::vector<int>{s.out_ch});
    for (std::size_t i = 0; i < bt.size(); ++i) CHECK(bt.data()[i] == 0.0f);
  }
}

TEST_CASE("forward produces three head tensors at strides 8/16/32") {
  DetectorConfig cfg;
  auto w = build(cfg, 1);
  Tensor img = random_image(cfg, 5);
  RawPrediction raw = forward(w, cfg, img);
  for (int s = 0; s < 3; ++s) {
    const int g = cfg.input_size / cfg.strides[static_cast<std::size_t>(s)];
    CHECK(raw.scales[static_cast<std::size_t>(s)].shape() ==
          std::vector<int>{1, cfg.head_channels(), g, g});
    for (std::size_t i = 0; i < raw.scales[static_cast<std::size_t>(s)].size(); ++i)
      CHECK(std::isfinite(raw.scales[static_cast<std::size_t>(s)].data()[i]));
  }
}

TEST_CASE("forward works at other input sizes and widths") {
  DetectorConfig cfg;
  cfg.input_size = 96;
  cfg.width_base = 8;
  auto w = build(cfg, 2);
  RawPrediction raw = forward(w, cfg, random_image(cfg, 9));
  CHECK(raw.scales[0].dim(2) == 12);
  CHECK(raw.scales[1].dim(2) == 6);
  CHECK(raw.scales[2].dim(2) == 3);
}

TEST_CASE("forward rejects mis-shaped images and unknown capture names") {
  DetectorConfig cfg;
  auto w = build(cfg, 3);
  Tensor bad = Tensor::zeros({1, 1, 64, 64});
  CHECK_THROWS_AS(forward(w, cfg, bad), std::invalid_argument);
  Tensor img = random_image(cfg, 4);
  CapturedActivations caps;
  CHECK_THROWS_AS(forward(w, cfg, img, {"no.such.layer"}, &caps), std::invalid_argument);
}

TEST_CASE("capture returns detached post-activation maps for the neck taps") {
  DetectorConfig cfg;
  auto w = build(cfg, 6);
  Tensor img = random_image(cfg, 7);
  const auto taps = neck_output_layers();
  CapturedActivations caps;
  forward(w, cfg, img, {taps.begin(), taps.end()}, &caps);
  REQUIRE(caps.size() == 3);
  const std::array<int, 3> grids{16, 8, 4};
  for (int i = 0; i < 3; ++i) {
    const Tensor& a = caps.at(taps[static_cast<std::size_t>(i)]);
    CHECK(a.dim(2) == grids[static_cast<std::size_t>(i)]);
    CHECK(a.dim(3) == grids[static_cast<std::size_t>(i)]);
    CHECK(!a.requires_grad());
    CHECK(a.node()->is_leaf());
  }
}

TEST_CASE("decode matches the per-cell loop oracle") {
  DetectorConfig cfg;
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    RawPrediction raw;
    for (int s = 0; s < 3; ++s) {
      const int g = cfg.input_size / cfg.strides[static_cast<std::size_t>(s)];
      std::vector<float> vals(static_cast<std::size_t>(cfg.head_channels()) * g * g);
      for (auto& v : vals) v = static_cast<float>(oracles::uni(rng, -4.0, 4.0));
      raw.scales[static_cast<std::size_t>(s)] =
          Tensor::from_data({1, cfg.head_channels(), g, g}, std::move(vals));
    }
    auto got = decode(raw, cfg, 0.3f);
    auto want = oracles::decode_reference(raw, cfg, 0.3f);
    REQUIRE(got.size() == want.size());
    CHECK(!got.empty());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].class_id == want[i].class_id);
      CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-5));
      CHECK(got[i].box.x1 == doctest::Approx(want[i].box.x1).epsilon(1e-4));
      CHECK(got[i].box.y1 == doctest::Approx(want[i].box.y1).epsilon(1e-4));
      CHECK(got[i].box.x2 == doctest::Approx(want[i].box.x2).epsilon(1e-4));
      CHECK(got[i].box.y2 == doctest::Approx(want[i].box.y2).epsilon(1e-4));
    }
  }
}

TEST_CASE("decode box geometry for hand-set logits") {
  DetectorConfig cfg;
  RawPrediction raw;
  for (int s = 0; s < 3; ++s) {
    const int g = cfg.input_size / cfg.strides[static_cast<std::size_t>(s)];
    raw.scales[static_cast<std::size_t>(s)] =
        Tensor::full({1, cfg.head_channels(), g, g}, -20.0f);  // all scores ~0
  }
  // one cell on the stride-8 scale, anchor 0: zero offsets, confident APD
  Tensor& t = raw.scales[0];
  const int g = 16, cy = 3, cx = 5;
  auto set_attr = [&](int attr, float v) {
    t.data()[((static_cast<std::size_t>(attr)) * g + cy) * g + cx] = v;
  };
  set_attr(0, 0.0f);   // tx: 2*sigmoid(0)-0.5 = 0.5 -> bx = (cx+0.5)*s
  set_attr(1, 0.0f);
  set_attr(2, 0.0f);   // tw: (2*0.5)^2 = 1 -> anchor size
  set_attr(3, 0.0f);
  set_attr(4, 20.0f);  // obj ~1
  set_attr(5, -20.0f);
  set_attr(6, 20.0f);  // cls APD ~1
  auto dets = decode(raw, cfg, 0.25f);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].class_id == 1);
  CHECK(dets[0].score == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(dets[0].box.cx() == doctest::Approx((cx + 0.5) * 8.0).epsilon(1e-4));
  CHECK(dets[0].box.cy() == doctest::Approx((cy + 0.5) * 8.0).epsilon(1e-4));
  CHECK(dets[0].box.w() == doctest::Approx(cfg.anchors[0][0][0]).epsilon(1e-4));
  CHECK(dets[0].box.h() == doctest::Approx(cfg.anchors[0][0][1]).epsilon(1e-4));
}

TEST_CASE("decoded boxes are clipped to the image") {
  DetectorConfig cfg;
  RawPrediction raw;
  for (int s = 0; s < 3; ++s) {
    const int g = cfg.input_size / cfg.strides[static_cast<std::size_t>(s)];
    raw.scales[static_cast<std::size_t>(s)] =
        Tensor::full({1, cfg.head_channels(), g, g}, 6.0f);  // everything confident and large
  }
  auto dets = decode(raw, cfg, 0.1f);
  CHECK(!dets.empty());
  for (const auto& d : dets) {
    CHECK(d.box.x1 >= 0.0f);
    CHECK(d.box.y1 >= 0.0f);
    CHECK(d.box.x2 <= static_cast<float>(cfg.input_size));
    CHECK(d.box.y2 <= static_cast<float>(cfg.input_size));
  }
}
