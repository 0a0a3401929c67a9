#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ccyd/augment.hpp"
#include "ccyd/dataset.hpp"
#include "ccyd/detector.hpp"
#include "ccyd/evalmetrics.hpp"
#include "ccyd/losses.hpp"

namespace ccyd {

struct TrainConfig {
  int epochs = 60;
  int batch_size = 2;
  float lr = 0.01f;
  float weight_decay = 5e-5f;
  float momentum = 0.937f;
  std::uint64_t seed = 0;
  AugmentConfig augment;
  LossWeights loss_weights;
  float ratio_threshold = 4.0f;
  float conf_threshold = 0.25f;
  float iou_threshold = 0.45f;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  LossBreakdown mean_loss;
  double seconds = 0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int steps = 0;
  std::vector<std::string> warnings;
};

struct TrainingDiverged : std::runtime_error {
  int epoch, step;
  TrainingDiverged(int e, int s)
      : std::runtime_error("training diverged (NaN loss) at epoch " + std::to_string(e) +
                           ", step " + std::to_string(s)),
        epoch(e),
        step(s) {}
};

// v ← momentum·v + g + wd·w; w ← w − lr·v. Biases are exempt from decay.
class SgdOptimizer {
 public:
  SgdOptimizer(float lr, float momentum, float weight_decay)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void step(DetectorWeights& weights);
  void set_lr(float lr) { lr_ = lr; }
  float lr() const { return lr_; }

 private:
  float lr_, momentum_, weight_decay_;
  std::map<std::string, std::vector<float>> velocity_;
};

std::pair<DetectorWeights, TrainLog> train_round(const std::vector<AnnotatedImage>& corpus,
                                                 const SplitPlan& split,
                                                 const DetectorConfig& dcfg,
                                                 const TrainConfig& tcfg);

// Image-level inference and metrics over a subset (no augmentation).
EvalReport evaluate(const std::vector<const AnnotatedImage*>& subset, const DetectorWeights& w,
                    const DetectorConfig& dcfg, float conf_threshold, float iou_threshold);

struct RoundResult {
  SplitPlan split;
  TrainLog log;
  DetectorWeights weights;
  EvalReport report;
};

std::vector<RoundResult> holdout(const std::vector<AnnotatedImage>& corpus, int rounds,
                                 double fraction, const DetectorConfig& dcfg,
                                 const TrainConfig& tcfg);

void write_train_log_csv(const std::string& path, const TrainLog& log);

}  // namespace ccyd
