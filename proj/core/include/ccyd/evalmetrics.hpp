#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ccyd/box.hpp"
#include "ccyd/postprocess.hpp"

namespace ccyd {

struct ClassScores {
  // NaN-free: `defined` flags mark division-by-zero cells instead
  double precision = 0, recall = 0, f1 = 0;
  bool precision_defined = false, recall_defined = false, f1_defined = false;
};

struct IouStats {
  double mean = 0, median = 0, frac_ge_half = 0;
};

struct EvalReport {
  std::array<std::array<int, 2>, 2> confusion{};  // [true][predicted], HC=0 APD=1
  std::array<int, 2> abstains{};                  // per true class; counted as errors
  std::array<ClassScores, 2> per_class;
  double accuracy = 0;
  std::vector<std::pair<double, double>> roc;  // (fpr, tpr)
  std::vector<std::pair<double, double>> pr;   // (recall, precision)
  double auc = 0;
  bool roc_defined = false;
  IouStats detection_iou;

  std::string to_json() const;   // stable key order, fixed float formatting
  static EvalReport from_json(const std::string& text);
};

// Confusion matrix, per-class precision/recall/F1 and accuracy from
// image-level verdicts paired with true classes.
EvalReport confusion_and_scores(const std::vector<std::pair<ImageVerdict, int>>& verdicts);

// Threshold sweep over distinct score values, positive class = 1 (APD);
// trapezoidal AUC. Rejects single-class inputs.
std::pair<std::vector<std::pair<double, double>>, double> roc_auc(
    const std::vector<std::pair<double, int>>& scores);

std::vector<std::pair<double, double>> pr_curve(const std::vector<std::pair<double, int>>& scores);

// Winning detection vs ground truth per image; abstains score IoU 0.
IouStats detection_iou_stats(const std::vector<std::pair<std::optional<Box>, Box>>& pairs);

void write_curve_csv(const std::string& path, const std::vector<std::pair<double, double>>& pts,
                     const std::string& xlabel, const std::string& ylabel);

}  // namespace ccyd
