#pragma once

#include <string>

#include "ccyd/detector.hpp"

namespace ccyd {

// Binary weight container: magic "CCYD", u32 LE version, u32 entry count;
// per entry u32 name length, UTF-8 name, u32 rank, u32 dims, f32 LE data.
// Round trips bit-exactly; unknown versions are rejected.
inline constexpr std::uint32_t kWeightFileVersion = 1;

void save_weights(const std::string& path, const DetectorWeights& w);
DetectorWeights load_weights(const std::string& path);

}  // namespace ccyd
