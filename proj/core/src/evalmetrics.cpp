#include "ccyd/evalmetrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

using json = nlohmann::json;

namespace ccyd {

EvalReport confusion_and_scores(const std::vector<std::pair<ImageVerdict, int>>& verdicts) {
  if (verdicts.empty()) throw std::invalid_argument("confusion_and_scores: empty input");
  EvalReport r;
  int correct = 0;
  for (const auto& [v, truth] : verdicts) {
    if (truth != 0 && truth != 1)
      throw std::invalid_argument("confusion_and_scores: true class must be 0 or 1");
    if (v.abstained()) {
      ++r.abstains[static_cast<std::size_t>(truth)];
    } else {
      ++r.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(v.predicted_class)];
      if (v.predicted_class == truth) ++correct;
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(verdicts.size());
  for (int c = 0; c < 2; ++c) {
    const std::size_t cc = static_cast<std::size_t>(c);
    const int tp = r.confusion[cc][cc];
    const int fp = r.confusion[1 - cc][cc];
    // abstains are errors against the true class: false negatives, and
    // predicted-positives for neither class
    const int fn = r.confusion[cc][1 - cc] + r.abstains[cc];
    ClassScores& s = r.per_class[cc];
    if (tp + fp > 0) {
      s.precision = static_cast<double>(tp) / (tp + fp);
      s.precision_defined = true;
    }
    if (tp + fn > 0) {
      s.recall = static_cast<double>(tp) / (tp + fn);
      s.recall_defined = true;
    }
    if (s.precision_defined && s.recall_defined && s.precision + s.recall > 0) {
      s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
      s.f1_defined = true;
    }
  }
  return r;
}

namespace {

// score groups sorted descending; ties collapse into one threshold step
std::vector<std::pair<double, std::pair<int, int>>> score_groups(
    const std::vector<std::pair<double, int>>& scores, int& P, int& N) {
  P = N = 0;
  std::vector<std::pair<double, int>> sorted = scores;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::pair<double, std::pair<int, int>>> groups;
  for (const auto& [s, cls] : sorted) {
    if (cls != 0 && cls != 1) throw std::invalid_argument("roc: class must be 0 or 1");
    if (groups.empty() || groups.back().first != s) groups.push_back({s, {0, 0}});
    if (cls == 1) {
      ++groups.back().second.first;
      ++P;
    } else {
      ++groups.back().second.second;
      ++N;
    }
  }
  if (P == 0 || N == 0)
    throw std::invalid_argument("roc: both classes must be present in the score set");
  return groups;
}

}  // namespace

std::pair<std::vector<std::pair<double, double>>, double> roc_auc(
    const std::vector<std::pair<double, int>>& scores) {
  int P, N;
  auto groups = score_groups(scores, P, N);
  std::vector<std::pair<double, double>> roc{{0.0, 0.0}};
  double auc = 0.0;
  int tp = 0, fp = 0;
  for (const auto& g : groups) {
    const double f0 = static_cast<double>(fp) / N, t0 = static_cast<double>(tp) / P;
    tp += g.second.first;
    fp += g.second.second;
    const double f1 = static_cast<double>(fp) / N, t1 = static_cast<double>(tp) / P;
    auc += (f1 - f0) * 0.5 * (t0 + t1);
    roc.push_back({f1, t1});
  }
  if (roc.back() != std::make_pair(1.0, 1.0)) roc.push_back({1.0, 1.0});
  return {roc, auc};
}

std::vector<std::pair<double, double>> pr_curve(const std::vector<std::pair<double, int>>& scores) {
  int P, N;
  auto groups = score_groups(scores, P, N);
  std::vector<std::pair<double, double>> pr;
  int tp = 0, fp = 0;
  for (const auto& g : groups) {
    tp += g.second.first;
    fp += g.second.second;
    if (tp + fp == 0) continue;  // precision undefined, point skipped
    pr.push_back({static_cast<double>(tp) / P, static_cast<double>(tp) / (tp + fp)});
  }
  return pr;
}

IouStats detection_iou_stats(const std::vector<std::pair<std::optional<Box>, Box>>& pairs) {
  IouStats s;
  if (pairs.empty()) return s;
  std::vector<double> ious;
  ious.reserve(pairs.size());
  for (const auto& [det, gt] : pairs) ious.push_back(det ? iou(*det, gt) : 0.0);
  double sum = 0;
  int ge = 0;
  for (double v : ious) {
    sum += v;
    if (v >= 0.5) ++ge;
  }
  s.mean = sum / static_cast<double>(ious.size());
  s.frac_ge_half = static_cast<double>(ge) / static_cast<double>(ious.size());
  std::sort(ious.begin(), ious.end());
  const std::size_t n = ious.size();
  s.median = n % 2 ? ious[n / 2] : 0.5 * (ious[n / 2 - 1] + ious[n / 2]);
  return s;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

json class_to_json(const ClassScores& s) {
  json j;
  j["precision"] = s.precision_defined ? json(s.precision) : json(nullptr);
  j["recall"] = s.recall_defined ? json(s.recall) : json(nullptr);
  j["f1"] = s.f1_defined ? json(s.f1) : json(nullptr);
  return j;
}

ClassScores class_from_json(const json& j) {
  ClassScores s;
  if (!j.at("precision").is_null()) {
    s.precision = j["precision"].get<double>();
    s.precision_defined = true;
  }
  if (!j.at("recall").is_null()) {
    s.recall = j["recall"].get<double>();
    s.recall_defined = true;
  }
  if (!j.at("f1").is_null()) {
    s.f1 = j["f1"].get<double>();
    s.f1_defined = true;
  }
  return s;
}

}  // namespace

std::string EvalReport::to_json() const {
  json j;
  j["confusion"] = {{confusion[0][0], confusion[0][1]}, {confusion[1][0], confusion[1][1]}};
  j["abstains"] = {abstains[0], abstains[1]};
  j["accuracy"] = accuracy;
  j["classes"] = {{"HC", class_to_json(per_class[0])}, {"APD", class_to_json(per_class[1])}};
  j["roc_defined"] = roc_defined;
  if (roc_defined) {
    j["auc"] = auc;
    j["roc"] = roc;
    j["pr"] = pr;
  }
  j["detection_iou"] = {{"mean", detection_iou.mean},
                        {"median", detection_iou.median},
                        {"frac_ge_0.5", detection_iou.frac_ge_half}};
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        r.confusion[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
            j.at("confusion").at(a).at(b).get<int>();
    r.abstains = {j.at("abstains").at(0).get<int>(), j.at("abstains").at(1).get<int>()};
    r.accuracy = j.at("accuracy").get<double>();
    r.per_class[0] = class_from_json(j.at("classes").at("HC"));
    r.per_class[1] = class_from_json(j.at("classes").at("APD"));
    r.roc_defined = j.at("roc_defined").get<bool>();
    if (r.roc_defined) {
      r.auc = j.at("auc").get<double>();
      r.roc = j.at("roc").get<std::vector<std::pair<double, double>>>();
      r.pr = j.at("pr").get<std::vector<std::pair<double, double>>>();
    }
    r.detection_iou.mean = j.at("detection_iou").at("mean").get<double>();
    r.detection_iou.median = j.at("detection_iou").at("median").get<double>();
    r.detection_iou.frac_ge_half = j.at("detection_iou").at("frac_ge_0.5").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("EvalReport::from_json: ") + e.what());
  }
}

void write_curve_csv(const std::string& path, const std::vector<std::pair<double, double>>& pts,
                     const std::string& xlabel, const std::string& ylabel) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_curve_csv: cannot write " + path);
  f << xlabel << "," << ylabel << "\n";
  for (const auto& [x, y] : pts) f << fmt(x) << "," << fmt(y) << "\n";
}

}  // namespace ccyd
