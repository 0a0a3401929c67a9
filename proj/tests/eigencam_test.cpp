#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ccyd/eigencam.hpp"
#include "ccyd/image_io.hpp"
#include "oracles.hpp"

#include <cmath>
#include <numeric>

using namespace ccyd;

namespace {

std::vector<double> random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::vector<double> m(static_cast<std::size_t>(rows) * cols);
  for (auto& v : m) v = oracles::uni(rng, -2.0, 2.0);
  return m;
}

// power iteration on MᵀM: independent estimate of the top right singular vector
std::vector<double> top_right_singular(const std::vector<double>& M, int rows, int cols) {
  std::vector<double> v(static_cast<std::size_t>(cols), 1.0 / std::sqrt(cols));
  std::vector<double> mv(static_cast<std::size_t>(rows)), next(static_cast<std::size_t>(cols));
  for (int it = 0; it < 2000; ++it) {
    for (int r = 0; r < rows; ++r) {
      double s = 0;
      for (int c = 0; c < cols; ++c) s += M[static_cast<std::size_t>(r) * cols + c] * v[static_cast<std::size_t>(c)];
      mv[static_cast<std::size_t>(r)] = s;
    }
    for (int c = 0; c < cols; ++c) {
      double s = 0;
      for (int r = 0; r < rows; ++r) s += M[static_cast<std::size_t>(r) * cols + c] * mv[static_cast<std::size_t>(r)];
      next[static_cast<std::size_t>(c)] = s;
    }
    double norm = std::sqrt(std::inner_product(next.begin(), next.end(), next.begin(), 0.0));
    for (auto& x : next) x /= norm;
    v = next;
  }
  return v;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("gram_svd reconstructs M to 1e-5 Frobenius, relative") {
  std::mt19937_64 rng(1);
  for (auto [rows, cols] : {std::pair{20, 6}, {64, 16}, {9, 9}}) {
    auto M = random_matrix(rows, cols, rng);
    std::vector<double> U, S, V;
    gram_svd(M, rows, cols, U, S, V);
    REQUIRE(static_cast<int>(S.size()) == cols);
    for (int i = 1; i < cols; ++i) CHECK(S[static_cast<std::size_t>(i)] <= S[static_cast<std::size_t>(i - 1)] + 1e-12);
    for (double s : S) CHECK(s >= 0.0);
    double err = 0, norm = 0;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        double rec = 0;
        for (int k = 0; k < cols; ++k)
          rec += U[static_cast<std::size_t>(r) * cols + k] * S[static_cast<std::size_t>(k)] *
                 V[static_cast<std::size_t>(c) * cols + k];
        const double m = M[static_cast<std::size_t>(r) * cols + c];
        err += (rec - m) * (rec - m);
        norm += m * m;
      }
    CHECK(std::sqrt(err) / std::sqrt(norm) < 1e-5);
    // V columns are orthonormal
    for (int i = 0; i < cols; ++i)
      for (int j = i; j < cols; ++j) {
        double dot = 0;
        for (int r = 0; r < cols; ++r)
          dot += V[static_cast<std::size_t>(r) * cols + i] * V[static_cast<std::size_t>(r) * cols + j];
        CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-8));
      }
  }
}

TEST_CASE("gram_svd top component matches power iteration") {
  std::mt19937_64 rng(3);
  auto M = random_matrix(40, 8, rng);
  std::vector<double> U, S, V;
  gram_svd(M, 40, 8, U, S, V);
  auto ref = top_right_singular(M, 40, 8);
  // compare up to sign
  double dot = 0;
  for (int c = 0; c < 8; ++c) dot += V[static_cast<std::size_t>(c) * 8 + 0] * ref[static_cast<std::size_t>(c)];
  CHECK(std::fabs(dot) > 0.999999);
}

TEST_CASE("eigen_cam output contract: range, max, shape") {
  std::mt19937_64 rng(5);
  std::vector<float> act(static_cast<std::size_t>(6) * 8 * 8);
  for (auto& v : act) v = static_cast<float>(oracles::uni(rng, -1.0, 1.0));
  Tensor a = Tensor::from_data({6, 8, 8}, act);
  Heatmap h = eigen_cam(a);
  CHECK(h.width == 8);
  CHECK(h.height == 8);
  float mx = 0;
  for (float v : h.values) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    mx = std::max(mx, v);
  }
  CHECK(mx == doctest::Approx(1.0));
  // batch form gives the same map
  Tensor a4 = Tensor::from_data({1, 6, 8, 8}, a.vec());
  Heatmap h4 = eigen_cam(a4);
  for (std::size_t i = 0; i < h.values.size(); ++i) CHECK(h4.values[i] == h.values[i]);
}

TEST_CASE("eigen_cam is invariant to positive scaling of the activation") {
  std::mt19937_64 rng(7);
  std::vector<float> act(static_cast<std::size_t>(4) * 6 * 6);
  for (auto& v : act) v = static_cast<float>(oracles::uni(rng, -1.0, 1.0));
  Tensor a = Tensor::from_data({4, 6, 6}, act);
  std::vector<float> scaled = act;
  for (auto& v : scaled) v *= 37.5f;
  Tensor b = Tensor::from_data({4, 6, 6}, scaled);
  Heatmap ha = eigen_cam(a), hb = eigen_cam(b);
  for (std::size_t i = 0; i < ha.values.size(); ++i)
    CHECK(std::fabs(ha.values[i] - hb.values[i]) < 1e-6);
}

TEST_CASE("rank-1 activation recovers its spatial pattern") {
  // activation c(x) = channel_weight[c] * pattern(x), pattern nonnegative
  const int C = 5, H = 7, W = 7;
  std::mt19937_64 rng(9);
  std::vector<double> pattern(static_cast<std::size_t>(H) * W), cw(C);
  for (auto& v : pattern) v = oracles::uni(rng, 0.0, 1.0);
  for (auto& v : cw) v = oracles::uni(rng, 0.5, 2.0);
  std::vector<float> act(static_cast<std::size_t>(C) * H * W);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H * W; ++i)
      act[static_cast<std::size_t>(c) * H * W + i] = static_cast<float>(cw[static_cast<std::size_t>(c)] * pattern[static_cast<std::size_t>(i)]);
  Heatmap h = eigen_cam(Tensor::from_data({C, H, W}, act));
  std::vector<double> got(h.values.begin(), h.values.end());
  CHECK(pearson(got, pattern) > 0.999);
}

TEST_CASE("cam_stats: argmax location and top-5% mass") {
  Heatmap h;
  h.width = 10;
  h.height = 10;
  h.values.assign(100, 0.01f);
  h.values[4 * 10 + 7] = 1.0f;  // single bright pixel at (7,4)
  std::vector<std::uint8_t> mask(100, 0);
  mask[4 * 10 + 7] = 1;
  auto st = cam_stats(h, mask);
  CHECK(st.argmax_x == 7);
  CHECK(st.argmax_y == 4);
  CHECK(st.argmax_in_region);
  CHECK(st.top5_mass_in_region > 0.5);

  mask.assign(100, 0);
  mask[0] = 1;
  auto st2 = cam_stats(h, mask);
  CHECK(!st2.argmax_in_region);
  CHECK(st2.top5_mass_in_region < 0.5);
}

TEST_CASE("multilayer_cam equals the capture/eigen_cam/upsample composition") {
  DetectorConfig cfg;
  cfg.input_size = 64;
  cfg.width_base = 8;
  auto w = build(cfg, 17);
  std::mt19937_64 rng(19);
  std::vector<float> px(static_cast<std::size_t>(cfg.input_size) * cfg.input_size);
  for (auto& v : px) v = static_cast<float>(oracles::uni(rng, 0.0, 1.0));
  Tensor img = Tensor::from_data({1, 1, cfg.input_size, cfg.input_size}, px);

  const auto taps = neck_output_layers();
  const std::vector<std::string> layers{taps.begin(), taps.end()};
  Heatmap got = multilayer_cam(w, cfg, img, layers);
  CHECK(got.width == cfg.input_size);
  CHECK(got.height == cfg.input_size);
  CHECK(got.source_layers == layers);

  CapturedActivations caps;
  forward(w, cfg, img, layers, &caps);
  std::vector<float> acc(static_cast<std::size_t>(cfg.input_size) * cfg.input_size, 0.0f);
  for (const auto& name : layers) {
    Heatmap per = eigen_cam(caps.at(name));
    auto up = resize_bilinear(per.values, per.width, per.height, cfg.input_size, cfg.input_size);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += up[i] / static_cast<float>(layers.size());
  }
  float lo = 1e30f, hi = -1e30f;
  for (float v : acc) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  REQUIRE(hi > lo);
  for (std::size_t i = 0; i < acc.size(); ++i)
    CHECK(std::fabs(got.values[i] - (acc[i] - lo) / (hi - lo)) < 1e-5);
}

TEST_CASE("multilayer_cam validates layers") {
  DetectorConfig cfg;
  cfg.input_size = 64;
  cfg.width_base = 8;
  auto w = build(cfg, 21);
  Tensor img = Tensor::zeros({1, 1, 64, 64});
  CHECK_THROWS_AS(multilayer_cam(w, cfg, img, {"bogus"}), std::invalid_argument);
  CHECK_THROWS_AS(multilayer_cam(w, cfg, img, {}), std::invalid_argument);
}

TEST_CASE("average_cam aggregates over a small synthetic subset") {
  DetectorConfig cfg;
  cfg.input_size = 64;
  cfg.width_base = 8;
  auto w = build(cfg, 23);
  auto data = generate_synthetic(2, 2, 64, 31);
  std::vector<const AnnotatedImage*> subset;
  for (const auto& img : data) subset.push_back(&img);

  CamRunConfig cam;
  cam.conf_threshold = 1e-4f;  // untrained net: keep almost everything
  auto stats = average_cam(subset, w, cfg, cam);
  CHECK(stats.n_images == static_cast<int>(subset.size()));
  CHECK(stats.n_abstained >= 0);
  CHECK(stats.n_abstained <= stats.n_images);
  CHECK(stats.average.width == 64);
  CHECK(stats.average.height == 32);
  CHECK(stats.brightest_in_region_rate >= 0.0);
  CHECK(stats.brightest_in_region_rate <= 1.0);
  CHECK(stats.mean_top5_mass_in_region >= 0.0);
  CHECK(stats.mean_top5_mass_in_region <= 1.0);
  if (stats.n_abstained < stats.n_images) {
    float mx = 0;
    for (float v : stats.average.values) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      mx = std::max(mx, v);
    }
    CHECK(mx == doctest::Approx(1.0));
  }
}
