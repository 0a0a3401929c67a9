#include "ccyd/dataset.hpp"

#include "ccyd/image_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace ccyd {

namespace {

double uni(std::mt19937_64& rng, double lo, double hi) {
  // raw 53-bit draw; std::uniform_real_distribution is not portable
  const double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
  return lo + u * (hi - lo);
}

double wrap_angle(double a) {
  while (a < 0) a += 2.0 * std::numbers::pi;
  while (a >= 2.0 * std::numbers::pi) a -= 2.0 * std::numbers::pi;
  return a;
}

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

struct SubjectParams {
  double cx, cy, radius, span, theta0, thickness, intensity;
  double thin_factor = 1.0;   // APD mid-body thickness multiplier
  double attenuation = 1.0;   // APD mid-body intensity multiplier
};

AnnotatedImage render_slice(const SubjectParams& sp, int size, int cls, const std::string& subject,
                            int slice, std::mt19937_64& rng) {
  AnnotatedImage img;
  img.width = img.height = size;
  img.subject_id = subject;
  img.slice_index = slice;
  img.pixels.assign(static_cast<std::size_t>(size) * size, 0.0f);
  img.region_mask.assign(img.pixels.size(), 0);

  // per-slice jitter simulates adjacent slices of one subject
  SubjectParams p = sp;
  p.cx += uni(rng, -1.5, 1.5);
  p.cy += uni(rng, -1.5, 1.5);
  p.radius *= uni(rng, 0.98, 1.02);
  p.thickness *= uni(rng, 0.97, 1.03);

  // low-frequency background + grain
  const double f1x = uni(rng, 0.02, 0.06), f1y = uni(rng, 0.02, 0.06);
  const double ph1 = uni(rng, 0, 6.28), ph2 = uni(rng, 0, 6.28);
  const double f2x = uni(rng, 0.05, 0.12), f2y = uni(rng, 0.05, 0.12);
  std::vector<float> grain(img.pixels.size());
  for (auto& g : grain) g = static_cast<float>(uni(rng, -0.015, 0.015));

  float minx = static_cast<float>(size), miny = static_cast<float>(size), maxx = -1, maxy = -1;
  const double third0 = 1.0 / 3.0, third1 = 2.0 / 3.0, blend = 0.01;
  const double mask_margin = 0.03 * size;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * size + x;
      double bg = 0.14 + 0.02 * std::sin(f1x * x + ph1) * std::sin(f1y * y + ph2) +
                  0.015 * std::sin(f2x * x + ph2) * std::cos(f2y * y + ph1) + grain[i];
      bg = std::clamp(bg, 0.0, 0.35);

      const double dx = x + 0.5 - p.cx, dy = y + 0.5 - p.cy;
      const double d = std::hypot(dx, dy);
      const double phi = wrap_angle(std::atan2(dy, dx) - p.theta0);
      double v = bg;
      if (phi <= p.span) {
        const double u = phi / p.span;  // position along the arc, [0,1]
        // mid-body factor eases in/out over `blend` of arc length
        const double mid = smoothstep(third0 - blend, third0 + blend, u) *
                           (1.0 - smoothstep(third1 - blend, third1 + blend, u));
        // the band tapers to a point and fades out at both ends of the arc,
        // and is thickest/brightest over the mid-body plateau
        const double taper = smoothstep(0.0, 0.18, u) * (1.0 - smoothstep(0.82, 1.0, u));
        const double emph = smoothstep(third0 - 0.03, third0 + 0.03, u) *
                            (1.0 - smoothstep(third1 - 0.03, third1 + 0.03, u));
        const double t_here = p.thickness * taper * (0.85 + 0.15 * emph) *
                              (1.0 - mid * (1.0 - p.thin_factor));
        const double cover = std::clamp(t_here / 2.0 - std::fabs(d - p.radius) + 0.5, 0.0, 1.0);
        if (cover > 0.0) {
          const double inten = p.intensity * (0.35 + 0.65 * taper) * (0.8 + 0.2 * emph) *
                               (1.0 - mid * (1.0 - p.attenuation));
          v = std::max(bg, cover * inten);
          if (cover >= 0.5) {
            minx = std::min(minx, static_cast<float>(x));
            maxx = std::max(maxx, static_cast<float>(x));
            miny = std::min(miny, static_cast<float>(y));
            maxy = std::max(maxy, static_cast<float>(y));
          }
        }
        // mask marks the mid third of the unthinned band plus a small
        // margin (3% of image size) so localization checks against it
        // tolerate coarse-grid quantization in upsampled heatmaps
        double seg;
        if (u >= third0 && u <= third1) {
          seg = std::fabs(d - p.radius);
        } else {
          const double a = p.theta0 + (u < third0 ? third0 : third1) * p.span;
          seg = std::hypot(x + 0.5 - (p.cx + p.radius * std::cos(a)),
                           y + 0.5 - (p.cy + p.radius * std::sin(a)));
        }
        if (seg <= p.thickness / 2.0 + mask_margin) img.region_mask[i] = 1;
      }
      // quantize to the 8-bit grid so PNG round trips are exact
      img.pixels[i] = static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0);
    }
  }
  img.boxes.push_back({Box{minx, miny, maxx + 1.0f, maxy + 1.0f}, cls});
  return img;
}

}  // namespace

std::vector<AnnotatedImage> generate_synthetic(int n_subjects_per_class, int slices_per_subject,
                                               int size, std::uint64_t seed) {
  if (size <= 0 || size % 32 != 0)
    throw std::invalid_argument("generate_synthetic: size must be a positive multiple of 32");
  if (n_subjects_per_class < 1 || slices_per_subject < 1)
    throw std::invalid_argument("generate_synthetic: counts must be positive");
  std::vector<AnnotatedImage> out;
  const double pi = std::numbers::pi;
  for (int cls = 0; cls < 2; ++cls) {
    for (int s = 0; s < n_subjects_per_class; ++s) {
      // one RNG stream per subject keeps corpora stable under count changes
      std::mt19937_64 rng(seed ^ (0x5851f42d4c957f2dULL * (static_cast<std::uint64_t>(cls) * 100003 + s + 1)));
      SubjectParams p;
      p.cx = size * uni(rng, 0.44, 0.56);
      p.cy = size * uni(rng, 0.44, 0.56);
      p.radius = size * uni(rng, 0.22, 0.28);
      p.span = uni(rng, pi, 1.5 * pi);
      // consistent orientation: the band's angular midpoint points down, so
      // the mid-body forms the lowest extremity of the structure and the
      // faded ends curl upward (small per-subject tilt)
      p.theta0 = 0.5 * pi - p.span / 2.0 + uni(rng, -0.25, 0.25);
      p.thickness = size * uni(rng, 0.055, 0.075);
      p.intensity = uni(rng, 0.75, 0.9);
      if (cls == kClassAPD) {
        p.thin_factor = uni(rng, 0.35, 0.6);
        p.attenuation = uni(rng, 0.6, 0.85);
      }
      char id[32];
      std::snprintf(id, sizeof(id), "%s%03d", cls == kClassHC ? "HC" : "APD", s);
      for (int k = 0; k < slices_per_subject; ++k)
        out.push_back(render_slice(p, size, cls, id, k, rng));
    }
  }
  return out;
}

std::vector<std::string> subject_ids(const std::vector<AnnotatedImage>& dataset) {
  std::set<std::string> ids;
  for (const auto& img : dataset) ids.insert(img.subject_id);
  return {ids.begin(), ids.end()};
}

std::vector<SplitPlan> split(const std::vector<AnnotatedImage>& dataset, double fraction,
                             int rounds, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split: fraction must be in (0,1)");
  if (rounds < 1) throw std::invalid_argument("split: rounds must be >= 1");

  // class of each subject (consistent across slices by construction)
  std::map<std::string, int> cls_of;
  for (const auto& img : dataset)
    if (!img.boxes.empty()) cls_of[img.subject_id] = img.boxes[0].class_id;
  std::vector<std::string> by_class[2];
  for (const auto& [id, c] : cls_of) by_class[c == kClassAPD ? 1 : 0].push_back(id);
  for (auto& v : by_class)
    if (v.size() < 2) throw std::invalid_argument("split: need at least 2 subjects per class");

  std::vector<SplitPlan> plans;
  for (int r = 0; r < rounds; ++r) {
    SplitPlan plan;
    plan.round_id = r;
    plan.fraction = fraction;
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(r) * 0x9e3779b97f4a7c15ULL);
    for (auto& subjects : by_class) {
      std::vector<std::string> shuffled = subjects;
      // Fisher-Yates with raw draws for portability
      for (std::size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng() % i]);
      const std::size_t ntrain = static_cast<std::size_t>(
          std::lround(fraction * static_cast<double>(shuffled.size())));
      for (std::size_t i = 0; i < shuffled.size(); ++i)
        (i < ntrain ? plan.train_subjects : plan.test_subjects).push_back(shuffled[i]);
    }
    std::sort(plan.train_subjects.begin(), plan.train_subjects.end());
    std::sort(plan.test_subjects.begin(), plan.test_subjects.end());
    plans.push_back(std::move(plan));
  }
  return plans;
}

void save_corpus(const std::vector<AnnotatedImage>& dataset, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  bool any_mask = false;
  for (const auto& img : dataset) any_mask |= img.has_mask();
  if (any_mask) fs::create_directories(fs::path(dir) / "masks");

  std::ofstream ann(fs::path(dir) / "annotations.jsonl");
  if (!ann) throw std::runtime_error("save_corpus: cannot write annotations in " + dir);
  for (const auto& img : dataset) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%02d.png", img.subject_id.c_str(), img.slice_index);
    write_gray_png((fs::path(dir) / "images" / name).string(), img.pixels, img.width, img.height);
    if (img.has_mask())
      write_mask_png((fs::path(dir) / "masks" / name).string(), img.region_mask, img.width,
                     img.height);
    if (img.boxes.size() != 1)
      throw std::runtime_error("save_corpus: expected exactly one box for " + img.subject_id +
                               " slice " + std::to_string(img.slice_index));
    const auto& gt = img.boxes[0];
    json rec{{"image", std::string("images/") + name},
             {"subject", img.subject_id},
             {"slice", img.slice_index},
             {"class", gt.class_id},
             {"box", {gt.box.x1, gt.box.y1, gt.box.x2, gt.box.y2}}};
    if (img.has_mask()) rec["mask"] = std::string("masks/") + name;
    ann << rec.dump() << "\n";
  }
}

std::vector<AnnotatedImage> load_corpus(const std::string& dir) {
  std::ifstream ann(fs::path(dir) / "annotations.jsonl");
  if (!ann) throw std::runtime_error("load_corpus: missing " + dir + "/annotations.jsonl");
  std::vector<AnnotatedImage> out;
  std::string line;
  int lineno = 0;
  while (std::getline(ann, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = dir + "/annotations.jsonl:" + std::to_string(lineno);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("load_corpus: malformed record at " + where + ": " + e.what());
    }
    AnnotatedImage img;
    try {
      img.subject_id = rec.at("subject").get<std::string>();
      img.slice_index = rec.at("slice").get<int>();
      const int cls = rec.at("class").get<int>();
      const auto bx = rec.at("box");
      GroundTruth gt{Box{bx.at(0).get<float>(), bx.at(1).get<float>(), bx.at(2).get<float>(),
                         bx.at(3).get<float>()},
                     cls};
      const std::string img_path = (fs::path(dir) / rec.at("image").get<std::string>()).string();
      img.pixels = read_gray_png(img_path, img.width, img.height);
      if (cls != 0 && cls != 1)
        throw std::runtime_error("class must be 0 or 1, got " + std::to_string(cls));
      if (!(gt.box.x1 < gt.box.x2) || !(gt.box.y1 < gt.box.y2))
        throw std::runtime_error("box is degenerate");
      if (gt.box.x1 < 0 || gt.box.y1 < 0 || gt.box.x2 > static_cast<float>(img.width) ||
          gt.box.y2 > static_cast<float>(img.height))
        throw std::runtime_error("box out of image bounds");
      img.boxes.push_back(gt);
      if (rec.contains("mask")) {
        int mw = 0, mh = 0;
        img.region_mask =
            read_mask_png((fs::path(dir) / rec["mask"].get<std::string>()).string(), mw, mh);
        if (mw != img.width || mh != img.height)
          throw std::runtime_error("mask size differs from image size");
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("load_corpus: bad record at " + where + ": " + e.what());
    }
    out.push_back(std::move(img));
  }
  if (out.empty()) throw std::runtime_error("load_corpus: no records in " + dir);
  return out;
}

}  // namespace ccyd
