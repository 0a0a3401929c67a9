#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ccyd/weightfile.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

using namespace ccyd;

namespace {

std::filesystem::path temp_file(const char* tag) {
  return std::filesystem::temp_directory_path() / (std::string("ccyd_wf_") + tag + ".ccyd");
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("save/load round-trips a full model bit-exactly") {
  DetectorConfig cfg;
  auto w = build(cfg, 123);
  auto path = temp_file("roundtrip");
  save_weights(path.string(), w);
  auto back = load_weights(path.string());
  REQUIRE(back.size() == w.size());
  for (const auto& [name, t] : w) {
    REQUIRE(back.count(name) == 1);
    const Tensor& u = back.at(name);
    CHECK(u.shape() == t.shape());
    REQUIRE(u.size() == t.size());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(u.data()[i] == t.data()[i]);
  }
  std::filesystem::remove(path);
}

TEST_CASE("file header carries the magic and version") {
  DetectorConfig cfg;
  cfg.width_base = 8;
  auto w = build(cfg, 5);
  auto path = temp_file("header");
  save_weights(path.string(), w);
  auto bytes = slurp(path);
  REQUIRE(bytes.size() > 12);
  CHECK(bytes[0] == 'C');
  CHECK(bytes[1] == 'C');
  CHECK(bytes[2] == 'Y');
  CHECK(bytes[3] == 'D');
  const std::uint32_t version = static_cast<std::uint8_t>(bytes[4]) |
                                (static_cast<std::uint8_t>(bytes[5]) << 8) |
                                (static_cast<std::uint8_t>(bytes[6]) << 16) |
                                (static_cast<std::uint8_t>(bytes[7]) << 24);
  CHECK(version == kWeightFileVersion);
  std::filesystem::remove(path);
}

TEST_CASE("saving twice produces byte-identical files") {
  DetectorConfig cfg;
  auto w = build(cfg, 7);
  auto p1 = temp_file("dup1"), p2 = temp_file("dup2");
  save_weights(p1.string(), w);
  save_weights(p2.string(), w);
  CHECK(slurp(p1) == slurp(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("bad magic, bad version, truncation and missing file are rejected") {
  DetectorConfig cfg;
  cfg.width_base = 8;
  auto w = build(cfg, 11);
  auto path = temp_file("bad");
  save_weights(path.string(), w);
  auto bytes = slurp(path);

  auto corrupted = bytes;
  corrupted[0] = 'X';
  dump(path, corrupted);
  CHECK_THROWS_AS(load_weights(path.string()), std::runtime_error);

  corrupted = bytes;
  corrupted[4] = 99;
  dump(path, corrupted);
  CHECK_THROWS_AS(load_weights(path.string()), std::runtime_error);

  corrupted = bytes;
  corrupted.resize(corrupted.size() / 2);
  dump(path, corrupted);
  CHECK_THROWS_AS(load_weights(path.string()), std::runtime_error);

  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_weights(path.string()), std::runtime_error);
}
