#include "ccyd/weightfile.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ccyd {

namespace {

constexpr char kMagic[4] = {'C', 'C', 'Y', 'D'};

void put_u32(std::ostream& os, std::uint32_t v) {
  // little-endian on disk
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error(std::string("weight file: truncated reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_weights(const std::string& path, const DetectorWeights& w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_weights: cannot write " + path);
  f.write(kMagic, 4);
  put_u32(f, kWeightFileVersion);
  put_u32(f, static_cast<std::uint32_t>(w.size()));
  for (const auto& [name, t] : w) {
    put_u32(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(f, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) put_u32(f, static_cast<std::uint32_t>(d));
    static_assert(sizeof(float) == 4);
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
  }
  if (!f) throw std::runtime_error("save_weights: write failed for " + path);
}

DetectorWeights load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_weights: cannot read " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("load_weights: " + path + " is not a CCYD weight file");
  const std::uint32_t version = get_u32(f, "version");
  if (version != kWeightFileVersion)
    throw std::runtime_error("load_weights: unsupported version " + std::to_string(version));
  const std::uint32_t count = get_u32(f, "entry count");
  DetectorWeights w;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(f, "name length");
    std::string name(name_len, '\0');
    if (!f.read(name.data(), name_len)) throw std::runtime_error("load_weights: truncated name");
    const std::uint32_t rank = get_u32(f, "rank");
    std::vector<int> shape;
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = get_u32(f, "dimension");
      if (dim == 0) throw std::runtime_error("load_weights: zero dimension in " + name);
      shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    std::vector<float> data(n);
    if (!f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * 4)))
      throw std::runtime_error("load_weights: truncated data for " + name);
    w.emplace(name, Tensor::from_data(std::move(shape), std::move(data), true));
  }
  return w;
}

}  // namespace ccyd
