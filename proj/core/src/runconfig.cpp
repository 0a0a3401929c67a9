#include "ccyd/runconfig.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <stdexcept>

using json = nlohmann::json;

namespace ccyd {

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument(std::string("config field '") + key + "' has the wrong type");
    }
  }
}

}  // namespace

std::string RunConfig::to_json() const {
  json j;
  j["detector"] = {{"input_size", detector.input_size},
                   {"width_base", detector.width_base},
                   {"num_classes", detector.num_classes},
                   {"in_channels", detector.in_channels},
                   {"strides", detector.strides},
                   {"leaky_slope", detector.leaky_slope}};
  json anchors = json::array();
  for (const auto& scale : detector.anchors) {
    json s = json::array();
    for (const auto& a : scale) s.push_back({a[0], a[1]});
    anchors.push_back(s);
  }
  j["detector"]["anchors"] = anchors;
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"lr", train.lr},
                {"weight_decay", train.weight_decay},
                {"momentum", train.momentum},
                {"seed", train.seed},
                {"ratio_threshold", train.ratio_threshold},
                {"conf_threshold", train.conf_threshold},
                {"iou_threshold", train.iou_threshold}};
  j["loss_weights"] = {{"box", train.loss_weights.box},
                       {"obj", train.loss_weights.obj},
                       {"cls", train.loss_weights.cls}};
  j["augment"] = {{"mosaic_prob", train.augment.mosaic_prob},
                  {"flip_prob", train.augment.flip_prob},
                  {"gamma_lo", train.augment.gamma_lo},
                  {"gamma_hi", train.augment.gamma_hi},
                  {"min_box_area_px", train.augment.min_box_area_px},
                  {"max_clip_fraction", train.augment.max_clip_fraction},
                  {"seed", train.augment.seed}};
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig cfg;
  if (j.contains("detector")) {
    const json& d = j["detector"];
    maybe(d, "input_size", cfg.detector.input_size);
    maybe(d, "width_base", cfg.detector.width_base);
    maybe(d, "num_classes", cfg.detector.num_classes);
    maybe(d, "in_channels", cfg.detector.in_channels);
    maybe(d, "leaky_slope", cfg.detector.leaky_slope);
    if (d.contains("anchors")) {
      const json& a = d["anchors"];
      if (!a.is_array() || a.size() != 3)
        throw std::invalid_argument("config field 'detector.anchors' must be 3 scales");
      for (int s = 0; s < 3; ++s) {
        if (!a[s].is_array() || a[s].size() != 3)
          throw std::invalid_argument("config field 'detector.anchors' must have 3 pairs per scale");
        for (int k = 0; k < 3; ++k) {
          cfg.detector.anchors[s][k][0] = a[s][k].at(0).get<float>();
          cfg.detector.anchors[s][k][1] = a[s][k].at(1).get<float>();
        }
      }
    }
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    maybe(t, "epochs", cfg.train.epochs);
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "lr", cfg.train.lr);
    maybe(t, "weight_decay", cfg.train.weight_decay);
    maybe(t, "momentum", cfg.train.momentum);
    maybe(t, "seed", cfg.train.seed);
    maybe(t, "ratio_threshold", cfg.train.ratio_threshold);
    maybe(t, "conf_threshold", cfg.train.conf_threshold);
    maybe(t, "iou_threshold", cfg.train.iou_threshold);
  }
  if (j.contains("loss_weights")) {
    const json& l = j["loss_weights"];
    maybe(l, "box", cfg.train.loss_weights.box);
    maybe(l, "obj", cfg.train.loss_weights.obj);
    maybe(l, "cls", cfg.train.loss_weights.cls);
  }
  if (j.contains("augment")) {
    const json& a = j["augment"];
    maybe(a, "mosaic_prob", cfg.train.augment.mosaic_prob);
    maybe(a, "flip_prob", cfg.train.augment.flip_prob);
    maybe(a, "gamma_lo", cfg.train.augment.gamma_lo);
    maybe(a, "gamma_hi", cfg.train.augment.gamma_hi);
    maybe(a, "min_box_area_px", cfg.train.augment.min_box_area_px);
    maybe(a, "max_clip_fraction", cfg.train.augment.max_clip_fraction);
    maybe(a, "seed", cfg.train.augment.seed);
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config: cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json(text);
}

void RunConfig::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("config: cannot write " + path);
  f << to_json() << "\n";
}

}  // namespace ccyd
