#include "ccyd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ccyd {

namespace {

void check_box(const Box& b, const char* who) {
  if (!(b.w() > 0.0f) || !(b.h() > 0.0f))
    throw std::invalid_argument(std::string(who) + ": degenerate box (w=" + std::to_string(b.w()) +
                                ", h=" + std::to_string(b.h()) + ")");
}

}  // namespace

double ciou(const Box& a, const Box& b) {
  check_box(a, "ciou");
  check_box(b, "ciou");
  const double i = iou(a, b);
  const double ex1 = std::min(a.x1, b.x1), ey1 = std::min(a.y1, b.y1);
  const double ex2 = std::max(a.x2, b.x2), ey2 = std::max(a.y2, b.y2);
  const double c2 = (ex2 - ex1) * (ex2 - ex1) + (ey2 - ey1) * (ey2 - ey1);
  const double dx = a.cx() - b.cx(), dy = a.cy() - b.cy();
  const double rho2 = dx * dx + dy * dy;
  const double pi2 = std::numbers::pi * std::numbers::pi;
  const double dat = std::atan(static_cast<double>(b.w()) / b.h()) -
                     std::atan(static_cast<double>(a.w()) / a.h());
  const double v = 4.0 / pi2 * dat * dat;
  const double alpha = v / ((1.0 - i) + v + 1e-12);
  return i - (c2 > 0.0 ? rho2 / c2 : 0.0) - alpha * v;
}

Tensor ciou_graph(const Tensor& cx, const Tensor& cy, const Tensor& w, const Tensor& h,
                  const Box& target) {
  check_box(target, "ciou_graph");
  auto c = [](float v) { return Tensor::scalar(v); };

  // a collapsed prediction (sigmoid underflow during a bad update) must still
  // yield a defined loss, so sizes are floored rather than rejected
  Tensor wc = clamp_min(w, 1e-6f);
  Tensor hc = clamp_min(h, 1e-6f);
  Tensor hw = mul_scalar(wc, 0.5f), hh = mul_scalar(hc, 0.5f);
  Tensor x1 = sub(cx, hw), x2 = add(cx, hw);
  Tensor y1 = sub(cy, hh), y2 = add(cy, hh);

  Tensor iw = clamp_min(sub(minimum(x2, c(target.x2)), maximum(x1, c(target.x1))), 0.0f);
  Tensor ih = clamp_min(sub(minimum(y2, c(target.y2)), maximum(y1, c(target.y1))), 0.0f);
  Tensor inter = mul(iw, ih);
  Tensor uni = sub(add_scalar(mul(wc, hc), target.area()), inter);
  Tensor iou_t = divide(inter, clamp_min(uni, 1e-9f));

  Tensor ew = sub(maximum(x2, c(target.x2)), minimum(x1, c(target.x1)));
  Tensor eh = sub(maximum(y2, c(target.y2)), minimum(y1, c(target.y1)));
  Tensor c2 = clamp_min(add(mul(ew, ew), mul(eh, eh)), 1e-9f);
  Tensor dx = add_scalar(cx, -target.cx());
  Tensor dy = add_scalar(cy, -target.cy());
  Tensor rho2 = add(mul(dx, dx), mul(dy, dy));

  const float pi2 = static_cast<float>(std::numbers::pi * std::numbers::pi);
  Tensor dat = add_scalar(mul_scalar(atan_op(divide(wc, hc)), -1.0f),
                          std::atan(target.w() / target.h()));
  Tensor v = mul_scalar(mul(dat, dat), 4.0f / pi2);
  Tensor alpha = divide(v, add(add_scalar(mul_scalar(iou_t, -1.0f), 1.0f + 1e-12f), v));

  return sub(sub(iou_t, divide(rho2, c2)), mul(alpha, v));
}

Tensor bce(const Tensor& logits, const Tensor& targets) { return bce_with_logits(logits, targets); }

TargetAssignment assign_targets(const std::vector<std::vector<GroundTruth>>& gt_per_image,
                                const DetectorConfig& cfg, float ratio_threshold) {
  cfg.validate();
  TargetAssignment out;
  for (int b = 0; b < static_cast<int>(gt_per_image.size()); ++b) {
    for (const GroundTruth& gt : gt_per_image[static_cast<std::size_t>(b)]) {
      check_box(gt.box, "assign_targets");
      bool assigned = false;
      for (int si = 0; si < 3; ++si) {
        const float stride = static_cast<float>(cfg.strides[static_cast<std::size_t>(si)]);
        const int G = cfg.input_size / cfg.strides[static_cast<std::size_t>(si)];
        for (int a = 0; a < cfg.anchors_per_scale; ++a) {
          const float aw = cfg.anchors[static_cast<std::size_t>(si)][static_cast<std::size_t>(a)][0];
          const float ah = cfg.anchors[static_cast<std::size_t>(si)][static_cast<std::size_t>(a)][1];
          const float r = std::max(std::max(gt.box.w() / aw, aw / gt.box.w()),
                                   std::max(gt.box.h() / ah, ah / gt.box.h()));
          if (r >= ratio_threshold) continue;
          const float fx = gt.box.cx() / stride;
          const float fy = gt.box.cy() / stride;
          const int gx = std::clamp(static_cast<int>(fx), 0, G - 1);
          const int gy = std::clamp(static_cast<int>(fy), 0, G - 1);
          out.entries.push_back({b, si, a, gy, gx, gt});
          assigned = true;
          // two nearest neighbor cells, one horizontal one vertical
          const int nx = gx + ((fx - gx) >= 0.5f ? 1 : -1);
          const int ny = gy + ((fy - gy) >= 0.5f ? 1 : -1);
          if (nx >= 0 && nx < G) out.entries.push_back({b, si, a, gy, nx, gt});
          if (ny >= 0 && ny < G) out.entries.push_back({b, si, a, ny, gx, gt});
        }
      }
      if (!assigned) out.unassigned.emplace_back(b, gt);
    }
  }
  return out;
}

std::pair<Tensor, LossBreakdown> total_loss(const RawPrediction& raw,
                                            const TargetAssignment& assignment,
                                            const DetectorConfig& cfg,
                                            const LossWeights& weights) {
  const int nc = cfg.num_classes;
  const int attrs = 5 + nc;
  const int A = cfg.anchors_per_scale;

  // obj/cls target + mask arrays per scale
  struct ScaleTargets {
    std::vector<float> obj_t, cls_t;
    std::vector<std::uint8_t> obj_m, cls_m;
    std::size_t obj_count = 0, cls_count = 0;
  };
  std::array<ScaleTargets, 3> st;
  for (int si = 0; si < 3; ++si) {
    const Tensor& t = raw.scales[static_cast<std::size_t>(si)];
    if (t.dim(1) != A * attrs)
      throw std::invalid_argument("total_loss: raw scale " + std::to_string(si) +
                                  " has wrong channel count " + std::to_string(t.dim(1)));
    auto& s = st[static_cast<std::size_t>(si)];
    s.obj_t.assign(t.size(), 0.0f);
    s.cls_t.assign(t.size(), 0.0f);
    s.obj_m.assign(t.size(), 0);
    s.cls_m.assign(t.size(), 0);
    const int G = t.dim(2);
    const std::size_t plane = static_cast<std::size_t>(G) * G;
    const int N = t.dim(0);
    for (int n = 0; n < N; ++n)
      for (int a = 0; a < A; ++a) {
        const std::size_t base =
            (static_cast<std::size_t>(n) * A * attrs + static_cast<std::size_t>(a) * attrs + 4) *
            plane;
        std::fill(s.obj_m.begin() + static_cast<std::ptrdiff_t>(base),
                  s.obj_m.begin() + static_cast<std::ptrdiff_t>(base + plane), 1);
      }
    s.obj_count = static_cast<std::size_t>(N) * A * plane;
  }

  Tensor box_sum = Tensor::scalar(0.0f);
  std::size_t box_count = 0;
  for (const AssignmentEntry& e : assignment.entries) {
    const Tensor& t = raw.scales[static_cast<std::size_t>(e.scale)];
    auto& s = st[static_cast<std::size_t>(e.scale)];
    const int G = t.dim(2);
    const std::size_t plane = static_cast<std::size_t>(G) * G;
    const std::size_t cell = static_cast<std::size_t>(e.cell_y) * G + e.cell_x;
    const std::size_t abase =
        (static_cast<std::size_t>(e.batch) * A * attrs + static_cast<std::size_t>(e.anchor) * attrs) *
        plane;
    s.obj_t[abase + 4 * plane + cell] = 1.0f;
    for (int c = 0; c < nc; ++c) {
      const std::size_t idx = abase + static_cast<std::size_t>(5 + c) * plane + cell;
      if (!s.cls_m[idx]) {
        s.cls_m[idx] = 1;
        ++s.cls_count;
      }
      s.cls_t[idx] = (c == e.gt.class_id) ? 1.0f : 0.0f;
    }

    const float stride = static_cast<float>(cfg.strides[static_cast<std::size_t>(e.scale)]);
    const float aw =
        cfg.anchors[static_cast<std::size_t>(e.scale)][static_cast<std::size_t>(e.anchor)][0];
    const float ah =
        cfg.anchors[static_cast<std::size_t>(e.scale)][static_cast<std::size_t>(e.anchor)][1];
    const auto fi = [&](int attr) {
      return static_cast<std::int64_t>(abase + static_cast<std::size_t>(attr) * plane + cell);
    };
    Tensor tx = gather(t, {fi(0)}), ty = gather(t, {fi(1)});
    Tensor tw = gather(t, {fi(2)}), th = gather(t, {fi(3)});
    Tensor bx = mul_scalar(add_scalar(mul_scalar(sigmoid(tx), 2.0f), -0.5f + e.cell_x), stride);
    Tensor by = mul_scalar(add_scalar(mul_scalar(sigmoid(ty), 2.0f), -0.5f + e.cell_y), stride);
    Tensor sw = mul_scalar(sigmoid(tw), 2.0f);
    Tensor sh = mul_scalar(sigmoid(th), 2.0f);
    Tensor bw = mul_scalar(mul(sw, sw), aw);
    Tensor bh = mul_scalar(mul(sh, sh), ah);
    Tensor one_minus = add_scalar(mul_scalar(ciou_graph(bx, by, bw, bh, e.gt.box), -1.0f), 1.0f);
    box_sum = add(box_sum, one_minus);
    ++box_count;
  }

  auto combine_means = [](const std::array<Tensor, 3>& means,
                          const std::array<std::size_t, 3>& counts) {
    std::size_t total = counts[0] + counts[1] + counts[2];
    Tensor acc = Tensor::scalar(0.0f);
    if (!total) return acc;
    for (int i = 0; i < 3; ++i)
      if (counts[static_cast<std::size_t>(i)])
        acc = add(acc, mul_scalar(means[static_cast<std::size_t>(i)],
                                  static_cast<float>(counts[static_cast<std::size_t>(i)]) /
                                      static_cast<float>(total)));
    return acc;
  };

  std::array<Tensor, 3> obj_means, cls_means;
  std::array<std::size_t, 3> obj_counts{}, cls_counts{};
  for (int si = 0; si < 3; ++si) {
    auto& s = st[static_cast<std::size_t>(si)];
    const Tensor& t = raw.scales[static_cast<std::size_t>(si)];
    obj_means[static_cast<std::size_t>(si)] = bce_with_logits_masked(t, s.obj_t, s.obj_m);
    obj_counts[static_cast<std::size_t>(si)] = s.obj_count;
    cls_means[static_cast<std::size_t>(si)] =
        s.cls_count ? bce_with_logits_masked(t, s.cls_t, s.cls_m) : Tensor::scalar(0.0f);
    cls_counts[static_cast<std::size_t>(si)] = s.cls_count;
  }

  Tensor obj_loss = combine_means(obj_means, obj_counts);
  Tensor cls_loss = combine_means(cls_means, cls_counts);
  Tensor box_loss =
      box_count ? mul_scalar(box_sum, 1.0f / static_cast<float>(box_count)) : Tensor::scalar(0.0f);

  Tensor total = add(add(mul_scalar(box_loss, weights.box), mul_scalar(obj_loss, weights.obj)),
                     mul_scalar(cls_loss, weights.cls));

  LossBreakdown bd;
  bd.box_loss = box_loss.item();
  bd.obj_loss = obj_loss.item();
  bd.cls_loss = cls_loss.item();
  bd.total = total.item();
  bd.weights = weights;
  return {total, bd};
}

}  // namespace ccyd
