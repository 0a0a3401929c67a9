#include "ccyd/train.hpp"

#include "ccyd/postprocess.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

namespace ccyd {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig.epochs: must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig.batch_size: must be >= 1");
  if (!(lr > 0.0f)) throw std::invalid_argument("TrainConfig.lr: must be > 0");
  if (weight_decay < 0.0f) throw std::invalid_argument("TrainConfig.weight_decay: must be >= 0");
  if (momentum < 0.0f || momentum >= 1.0f)
    throw std::invalid_argument("TrainConfig.momentum: must be in [0,1)");
  if (!(ratio_threshold > 1.0f))
    throw std::invalid_argument("TrainConfig.ratio_threshold: must be > 1");
  if (conf_threshold < 0.0f || conf_threshold > 1.0f)
    throw std::invalid_argument("TrainConfig.conf_threshold: must be in [0,1]");
  if (!(iou_threshold > 0.0f && iou_threshold < 1.0f))
    throw std::invalid_argument("TrainConfig.iou_threshold: must be in (0,1)");
  augment.validate();
}

void SgdOptimizer::step(DetectorWeights& weights) {
  for (auto& [name, w] : weights) {
    if (!w.requires_grad()) continue;
    auto& v = velocity_[name];
    if (v.size() != w.size()) v.assign(w.size(), 0.0f);
    const bool is_bias = name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
    const float wd = is_bias ? 0.0f : weight_decay_;
    float* wd_ptr = w.data();
    const float* g = w.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i] + wd * wd_ptr[i];
      wd_ptr[i] -= lr_ * v[i];
    }
  }
}

namespace {

AnnotatedImage augment_sample(const std::vector<AnnotatedImage>& pool, std::size_t idx,
                              const AugmentConfig& acfg, int out_size, std::mt19937_64& rng,
                              MosaicStats* mstats) {
  AnnotatedImage s;
  if (uniform_double(rng, 0.0, 1.0) < acfg.mosaic_prob && pool.size() >= 4) {
    std::array<const AnnotatedImage*, 4> four{};
    four[0] = &pool[idx];
    for (int i = 1; i < 4; ++i) four[static_cast<std::size_t>(i)] = &pool[rng() % pool.size()];
    s = mosaic(four, out_size, acfg, rng, mstats);
  } else {
    s = pool[idx];
  }
  s = hflip(s, acfg, rng);
  s = gamma_correct(s, acfg, rng);
  return s;
}

bool has_nan(const LossBreakdown& bd) {
  return !(std::isfinite(bd.total) && std::isfinite(bd.box_loss) && std::isfinite(bd.obj_loss) &&
           std::isfinite(bd.cls_loss));
}

}  // namespace

std::pair<DetectorWeights, TrainLog> train_round(const std::vector<AnnotatedImage>& corpus,
                                                 const SplitPlan& split, const DetectorConfig& dcfg,
                                                 const TrainConfig& tcfg) {
  dcfg.validate();
  tcfg.validate();
  const std::set<std::string> train_set(split.train_subjects.begin(), split.train_subjects.end());
  for (const auto& s : split.test_subjects)
    if (train_set.count(s))
      throw std::logic_error("train_round: subject " + s + " appears on both sides of the split");
  std::vector<AnnotatedImage> train;
  for (const auto& img : corpus)
    if (train_set.count(img.subject_id)) train.push_back(img);
  if (train.empty()) throw std::invalid_argument("train_round: empty train split");

  DetectorWeights weights =
      build(dcfg, tcfg.seed + 1000003ULL * static_cast<std::uint64_t>(split.round_id));
  SgdOptimizer opt(tcfg.lr, tcfg.momentum, tcfg.weight_decay);
  TrainLog log;

  std::mt19937_64 shuffle_rng(tcfg.seed ^ (0xa076bc9735f1dcb1ULL +
                                           static_cast<std::uint64_t>(split.round_id)));
  std::mt19937_64 aug_rng(tcfg.augment.seed ^ (0x94d049bb133111ebULL +
                                               static_cast<std::uint64_t>(split.round_id)));

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng() % i]);

    LossBreakdown acc;
    int steps_this_epoch = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t n = std::min(static_cast<std::size_t>(tcfg.batch_size),
                                     order.size() - start);
      std::vector<float> batch(n * static_cast<std::size_t>(dcfg.input_size) * dcfg.input_size);
      std::vector<std::vector<GroundTruth>> gts(n);
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t idx = order[start + b];
        // leakage guard: the iterator only ever draws from train subjects
        if (!train_set.count(train[idx].subject_id))
          throw std::logic_error("train_round: non-train subject reached the batch iterator");
        AnnotatedImage s = augment_sample(train, idx, tcfg.augment, dcfg.input_size, aug_rng, nullptr);
        std::copy(s.pixels.begin(), s.pixels.end(),
                  batch.begin() + static_cast<std::ptrdiff_t>(b * s.pixels.size()));
        gts[b] = s.boxes;
      }
      Tensor images = Tensor::from_data(
          {static_cast<int>(n), 1, dcfg.input_size, dcfg.input_size}, std::move(batch));
      RawPrediction raw = forward(weights, dcfg, images);
      TargetAssignment ta = assign_targets(gts, dcfg, tcfg.ratio_threshold);
      auto [loss, bd] = total_loss(raw, ta, dcfg, tcfg.loss_weights);
      if (has_nan(bd)) throw TrainingDiverged(epoch + 1, steps_this_epoch + 1);
      backward(loss);
      opt.step(weights);
      for (auto& [name, w] : weights) w.zero_grad();
      acc.box_loss += bd.box_loss;
      acc.obj_loss += bd.obj_loss;
      acc.cls_loss += bd.cls_loss;
      acc.total += bd.total;
      ++steps_this_epoch;
      ++log.steps;
    }
    EpochLog el;
    el.epoch = epoch + 1;
    el.mean_loss.box_loss = acc.box_loss / steps_this_epoch;
    el.mean_loss.obj_loss = acc.obj_loss / steps_this_epoch;
    el.mean_loss.cls_loss = acc.cls_loss / steps_this_epoch;
    el.mean_loss.total = acc.total / steps_this_epoch;
    el.mean_loss.weights = tcfg.loss_weights;
    el.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(el);

    // soft check: trailing 10-epoch window should not trend upward
    if (log.epochs.size() >= 10) {
      const auto& e = log.epochs;
      const std::size_t k = e.size();
      double first = e[k - 10].mean_loss.total, last = e[k - 1].mean_loss.total;
      if (last > first * 1.25)
        log.warnings.push_back("epoch " + std::to_string(el.epoch) +
                               ": total loss rose over the trailing 10-epoch window");
    }
  }
  return {std::move(weights), std::move(log)};
}

EvalReport evaluate(const std::vector<const AnnotatedImage*>& subset, const DetectorWeights& w,
                    const DetectorConfig& dcfg, float conf_threshold, float iou_threshold) {
  if (subset.empty()) throw std::invalid_argument("evaluate: empty image subset");
  NoGradGuard ng;
  std::vector<std::pair<ImageVerdict, int>> verdicts;
  std::vector<std::pair<double, int>> scores;
  std::vector<std::pair<std::optional<Box>, Box>> iou_pairs;
  for (const AnnotatedImage* img : subset) {
    Tensor t = Tensor::from_data({1, 1, img->height, img->width}, img->pixels);
    RawPrediction raw = forward(w, dcfg, t);
    ImageVerdict v = classify_image(nms(decode(raw, dcfg, conf_threshold), iou_threshold));
    const int truth = img->boxes[0].class_id;
    verdicts.emplace_back(v, truth);
    // APD-class confidence of the winner; abstains contribute score 0
    double apd_score = 0.0;
    if (!v.abstained()) apd_score = v.predicted_class == kClassAPD ? v.confidence : 1.0 - v.confidence;
    scores.emplace_back(apd_score, truth);
    iou_pairs.emplace_back(
        v.abstained() ? std::nullopt : std::optional<Box>(v.winner->box), img->boxes[0].box);
  }
  EvalReport r = confusion_and_scores(verdicts);
  bool both = false;
  {
    bool has0 = false, has1 = false;
    for (const auto& [s, c] : scores) (c ? has1 : has0) = true;
    both = has0 && has1;
  }
  if (both) {
    auto [roc, auc] = roc_auc(scores);
    r.roc = std::move(roc);
    r.auc = auc;
    r.pr = pr_curve(scores);
    r.roc_defined = true;
  }
  r.detection_iou = detection_iou_stats(iou_pairs);
  return r;
}

std::vector<RoundResult> holdout(const std::vector<AnnotatedImage>& corpus, int rounds,
                                 double fraction, const DetectorConfig& dcfg,
                                 const TrainConfig& tcfg) {
  auto plans = split(corpus, fraction, rounds, tcfg.seed);
  std::vector<RoundResult> results;
  for (const SplitPlan& plan : plans) {
    RoundResult rr;
    rr.split = plan;
    auto [w, log] = train_round(corpus, plan, dcfg, tcfg);
    rr.log = std::move(log);
    const std::set<std::string> test_set(plan.test_subjects.begin(), plan.test_subjects.end());
    std::vector<const AnnotatedImage*> test;
    for (const auto& img : corpus)
      if (test_set.count(img.subject_id)) test.push_back(&img);
    rr.report = evaluate(test, w, dcfg, tcfg.conf_threshold, tcfg.iou_threshold);
    rr.weights = std::move(w);
    results.push_back(std::move(rr));
  }
  return results;
}

void write_train_log_csv(const std::string& path, const TrainLog& log) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_train_log_csv: cannot write " + path);
  f << "epoch,box_loss,obj_loss,cls_loss,total,seconds\n";
  for (const auto& e : log.epochs)
    f << e.epoch << "," << e.mean_loss.box_loss << "," << e.mean_loss.obj_loss << ","
      << e.mean_loss.cls_loss << "," << e.mean_loss.total << "," << e.seconds << "\n";
}

}  // namespace ccyd
