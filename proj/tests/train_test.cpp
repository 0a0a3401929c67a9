#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ccyd/train.hpp"
#include "ccyd/weightfile.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace ccyd;

namespace {

DetectorConfig small_detector() {
  DetectorConfig cfg;
  cfg.input_size = 64;
  cfg.width_base = 8;
  // rescale the default anchors to the shrunken input
  for (auto& scale : cfg.anchors)
    for (auto& a : scale) {
      a[0] *= 0.5f;
      a[1] *= 0.5f;
    }
  return cfg;
}

TrainConfig small_train(std::uint64_t seed = 0) {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 2;
  t.seed = seed;
  return t;
}

bool same_weights(const DetectorWeights& a, const DetectorWeights& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second.size() != t.size()) return false;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t.data()[i] != it->second.data()[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("TrainConfig validation names the bad field") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.epochs = 0;
  CHECK_THROWS_WITH_AS(t.validate(), doctest::Contains("epochs"), std::invalid_argument);
  t = TrainConfig{};
  t.lr = 0.0f;
  CHECK_THROWS_WITH_AS(t.validate(), doctest::Contains("lr"), std::invalid_argument);
  t = TrainConfig{};
  t.momentum = 1.5f;
  CHECK_THROWS_WITH_AS(t.validate(), doctest::Contains("momentum"), std::invalid_argument);
  t = TrainConfig{};
  t.batch_size = -1;
  CHECK_THROWS_WITH_AS(t.validate(), doctest::Contains("batch_size"), std::invalid_argument);
}

TEST_CASE("SGD update follows the momentum/decay recurrence; biases skip decay") {
  DetectorWeights w;
  w["layer.weight"] = Tensor::from_data({2}, {1.0f, -2.0f}, true);
  w["layer.bias"] = Tensor::from_data({2}, {0.5f, 0.25f}, true);
  w["layer.weight"].grad()[0] = 0.1f;
  w["layer.weight"].grad()[1] = -0.3f;
  w["layer.bias"].grad()[0] = 0.2f;
  w["layer.bias"].grad()[1] = 0.0f;

  const float lr = 0.1f, mom = 0.9f, wd = 0.01f;
  SgdOptimizer opt(lr, mom, wd);
  opt.step(w);
  // first step: v = g + wd*w (weights), v = g (bias)
  const float v0 = 0.1f + wd * 1.0f;
  const float v1 = -0.3f + wd * -2.0f;
  CHECK(w["layer.weight"].data()[0] == doctest::Approx(1.0f - lr * v0));
  CHECK(w["layer.weight"].data()[1] == doctest::Approx(-2.0f - lr * v1));
  CHECK(w["layer.bias"].data()[0] == doctest::Approx(0.5f - lr * 0.2f));
  CHECK(w["layer.bias"].data()[1] == doctest::Approx(0.25f));

  // second step with fresh grads folds the velocity in
  const float w0 = w["layer.weight"].data()[0];
  w["layer.weight"].zero_grad();
  w["layer.bias"].zero_grad();
  w["layer.weight"].grad()[0] = 0.05f;
  opt.step(w);
  const float v0b = mom * v0 + 0.05f + wd * w0;
  CHECK(w["layer.weight"].data()[0] == doctest::Approx(w0 - lr * v0b));
}

TEST_CASE("train_round runs, logs every epoch and improves the loss") {
  auto data = generate_synthetic(4, 3, 64, 41);
  auto plans = split(data, 0.75, 1, 41);
  DetectorConfig dcfg = small_detector();
  TrainConfig tcfg = small_train(7);
  tcfg.epochs = 6;
  auto [weights, log] = train_round(data, plans[0], dcfg, tcfg);
  REQUIRE(static_cast<int>(log.epochs.size()) == tcfg.epochs);
  CHECK(log.steps > 0);
  for (const auto& e : log.epochs) {
    CHECK(std::isfinite(e.mean_loss.total));
    CHECK(e.seconds >= 0.0);
  }
  CHECK(log.epochs.back().mean_loss.total < log.epochs.front().mean_loss.total);
  CHECK(weights.size() == 2 * layer_specs(dcfg).size());
}

TEST_CASE("train_round is bit-deterministic in its seed") {
  auto data = generate_synthetic(3, 2, 64, 43);
  auto plans = split(data, 0.7, 1, 43);
  DetectorConfig dcfg = small_detector();
  TrainConfig tcfg = small_train(11);
  auto [w1, l1] = train_round(data, plans[0], dcfg, tcfg);
  auto [w2, l2] = train_round(data, plans[0], dcfg, tcfg);
  CHECK(same_weights(w1, w2));
  REQUIRE(l1.epochs.size() == l2.epochs.size());
  for (std::size_t i = 0; i < l1.epochs.size(); ++i)
    CHECK(l1.epochs[i].mean_loss.total == l2.epochs[i].mean_loss.total);

  TrainConfig other = small_train(12);
  auto [w3, l3] = train_round(data, plans[0], dcfg, other);
  CHECK(!same_weights(w1, w3));
}

TEST_CASE("a corrupted split plan trips the leakage guard") {
  auto data = generate_synthetic(3, 2, 64, 47);
  auto plans = split(data, 0.7, 1, 47);
  SplitPlan bad = plans[0];
  // claim a training subject is also a test subject
  bad.test_subjects.push_back(bad.train_subjects.front());
  DetectorConfig dcfg = small_detector();
  CHECK_THROWS_AS(train_round(data, bad, dcfg, small_train()), std::logic_error);
}

TEST_CASE("an absurd learning rate raises TrainingDiverged") {
  auto data = generate_synthetic(2, 2, 64, 53);
  auto plans = split(data, 0.5, 1, 53);
  DetectorConfig dcfg = small_detector();
  TrainConfig tcfg = small_train();
  tcfg.lr = 1e18f;
  tcfg.epochs = 5;
  try {
    train_round(data, plans[0], dcfg, tcfg);
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    CHECK(e.epoch >= 1);
    CHECK(e.step >= 1);
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  }
}

TEST_CASE("evaluate produces a structurally complete report") {
  auto data = generate_synthetic(3, 2, 64, 59);
  DetectorConfig dcfg = small_detector();
  auto w = build(dcfg, 61);
  std::vector<const AnnotatedImage*> subset;
  for (const auto& img : data) subset.push_back(&img);
  EvalReport rep = evaluate(subset, w, dcfg, 0.001f, 0.45f);
  int total = rep.confusion[0][0] + rep.confusion[0][1] + rep.confusion[1][0] +
              rep.confusion[1][1] + rep.abstains[0] + rep.abstains[1];
  CHECK(total == static_cast<int>(subset.size()));
  CHECK(rep.accuracy >= 0.0);
  CHECK(rep.accuracy <= 1.0);
  CHECK(rep.detection_iou.mean >= 0.0);
  if (rep.roc_defined) {
    CHECK(rep.auc >= 0.0);
    CHECK(rep.auc <= 1.0);
    CHECK(!rep.roc.empty());
  }
}

TEST_CASE("holdout runs the requested rounds with distinct splits") {
  auto data = generate_synthetic(4, 2, 64, 67);
  DetectorConfig dcfg = small_detector();
  TrainConfig tcfg = small_train(3);
  auto rounds = holdout(data, 2, 0.75, dcfg, tcfg);
  REQUIRE(rounds.size() == 2);
  CHECK(rounds[0].split.round_id == 0);
  CHECK(rounds[1].split.round_id == 1);
  CHECK(rounds[0].split.test_subjects != rounds[1].split.test_subjects);
  for (const auto& r : rounds) {
    CHECK(!r.weights.empty());
    CHECK(!r.log.epochs.empty());
    int total = r.report.confusion[0][0] + r.report.confusion[0][1] + r.report.confusion[1][0] +
                r.report.confusion[1][1] + r.report.abstains[0] + r.report.abstains[1];
    CHECK(total == static_cast<int>(r.split.test_subjects.size()) * 2);
  }
}

TEST_CASE("write_train_log_csv layout") {
  TrainLog log;
  log.epochs.push_back({1, {0.5f, 0.4f, 0.3f, 1.2f, {}}, 2.5});
  log.epochs.push_back({2, {0.4f, 0.3f, 0.2f, 0.9f, {}}, 2.4});
  auto path = std::filesystem::temp_directory_path() / "ccyd_trainlog_test.csv";
  write_train_log_csv(path.string(), log);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,box_loss,obj_loss,cls_loss,total,seconds");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
  std::filesystem::remove(path);
}
