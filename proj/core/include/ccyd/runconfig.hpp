#pragma once

#include <string>

#include "ccyd/detector.hpp"
#include "ccyd/train.hpp"

namespace ccyd {

// Single merged run configuration: detector, training recipe, augmentation
// and postprocess thresholds; serialized as one JSON document.
struct RunConfig {
  DetectorConfig detector;
  TrainConfig train;

  void validate() const {
    detector.validate();
    train.validate();
  }

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  static RunConfig from_file(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace ccyd
