#include "embforge/geom3d.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "embforge/errors.hpp"

namespace embforge::geom3d {

namespace {

void check_same_size(int w, int h, const CameraModel& cam, const char* what) {
  if (w != cam.width || h != cam.height)
    throw InvalidInput(std::string(what) + " is " + std::to_string(w) + "x" + std::to_string(h) + " but camera is " +
                       std::to_string(cam.width) + "x" + std::to_string(cam.height));
}

Eigen::Vector3f pixel_color(const RgbImage& rgb, std::size_t idx) {
  const std::uint8_t* px = rgb.data.data() + idx * 3;
  return {px[0] / 255.f, px[1] / 255.f, px[2] / 255.f};
}

// Shared body of unproject() and lift_mask(); `mask` may be null.
PointCloud lift(const DepthMap& depth, const RgbImage* rgb, const CameraModel& cam, const PixelMask* mask) {
  check_same_size(depth.width, depth.height, cam, "depth map");
  if (rgb) check_same_size(rgb->width, rgb->height, cam, "rgb image");
  if (mask) check_same_size(mask->width, mask->height, cam, "mask");

  PointCloud pc;
  pc.points.reserve(mask ? mask->count() : depth.pixel_count());
  if (rgb) pc.colors.reserve(pc.points.capacity());

  for (int v = 0; v < depth.height; ++v) {
    const double yc = v + 0.5 - cam.cy;
    for (int u = 0; u < depth.width; ++u) {
      const std::size_t i = depth.index(u, v);
      if (!depth.valid[i] || (mask && !mask->bits[i])) continue;
      const double d = depth.values[i];
      const Vec3 p_cam((u + 0.5 - cam.cx) * d / cam.fx, yc * d / cam.fy, d);
      pc.points.push_back(cam.pose.apply(p_cam));
      if (rgb) pc.colors.push_back(pixel_color(*rgb, i));
    }
  }
  return pc;
}

}  // namespace

std::size_t BackgroundMask::count() const {
  return static_cast<std::size_t>(std::count(is_background.begin(), is_background.end(), std::uint8_t{1}));
}

Vec3 unproject_pixel(double u, double v, double d, const CameraModel& cam) {
  return {(u + 0.5 - cam.cx) * d / cam.fx, (v + 0.5 - cam.cy) * d / cam.fy, d};
}

Vec3 project_camera(const Vec3& p_cam, const CameraModel& cam) {
  const double d = p_cam.z();
  return {p_cam.x() * cam.fx / d + cam.cx, p_cam.y() * cam.fy / d + cam.cy, d};
}

PointCloud unproject(const DepthMap& depth, const RgbImage* rgb, const CameraModel& cam) {
  return lift(depth, rgb, cam, nullptr);
}

BackgroundMask background_mask(std::span<const FlowField* const> flows, double tau_flow) {
  if (flows.empty()) throw InvalidInput("background_mask: empty flow list");
  if (!(tau_flow > 0)) throw InvalidInput("background_mask: tau_flow must be > 0");
  const int w = flows.front()->width, h = flows.front()->height;
  for (const FlowField* f : flows)
    if (f->width != w || f->height != h) throw InvalidInput("background_mask: flow fields differ in size");

  BackgroundMask bg{w, h, std::vector<std::uint8_t>(std::size_t(w) * h, 1)};
  const double tau2 = tau_flow * tau_flow;
  for (const FlowField* f : flows) {
    for (std::size_t i = 0; i < bg.is_background.size(); ++i) {
      const double dx = f->vectors[i][0], dy = f->vectors[i][1];
      if (!(dx * dx + dy * dy < tau2)) bg.is_background[i] = 0;
    }
  }
  return bg;
}

BackgroundMask background_mask(std::span<const FlowField> flows, double tau_flow) {
  std::vector<const FlowField*> ptrs;
  for (const auto& f : flows) ptrs.push_back(&f);
  return background_mask(std::span<const FlowField* const>(ptrs), tau_flow);
}

ScaleCoefficients align_depth_scales(std::span<const DepthMap* const> depths, const BackgroundMask& bg) {
  if (depths.size() < 2) throw InvalidInput("align_depth_scales: need at least 2 depth maps");
  const DepthMap& ref = *depths.front();
  for (const DepthMap* d : depths)
    if (d->width != ref.width || d->height != ref.height) throw InvalidInput("align_depth_scales: depth maps differ in size");
  if (bg.width != ref.width || bg.height != ref.height)
    throw InvalidInput("align_depth_scales: background mask differs in size from depth maps");

  std::size_t usable = 0;
  for (std::size_t i = 0; i < ref.pixel_count(); ++i) {
    if (!bg.is_background[i]) continue;
    bool all_valid = true;
    for (const DepthMap* d : depths) all_valid = all_valid && d->valid[i];
    usable += all_valid;
  }
  if (usable < kMinAlignmentPixels)
    throw AlignmentUnreliable("only " + std::to_string(usable) + " background pixels valid in every frame (need " +
                              std::to_string(kMinAlignmentPixels) + ")");

  ScaleCoefficients out;
  out.coefficients.assign(depths.size(), 1.0);
  for (std::size_t t = 1; t < depths.size(); ++t) {
    const DepthMap& cur = *depths[t];
    long double num = 0, den = 0;
    for (std::size_t i = 0; i < ref.pixel_count(); ++i) {
      if (!bg.is_background[i] || !ref.valid[i] || !cur.valid[i]) continue;
      num += static_cast<long double>(ref.values[i]) * cur.values[i];
      den += static_cast<long double>(cur.values[i]) * cur.values[i];
    }
    out.coefficients[t] = static_cast<double>(num / den);
  }
  return out;
}

ScaleCoefficients align_depth_scales(std::span<const DepthMap> depths, const BackgroundMask& bg) {
  std::vector<const DepthMap*> ptrs;
  for (const auto& d : depths) ptrs.push_back(&d);
  return align_depth_scales(std::span<const DepthMap* const>(ptrs), bg);
}

DepthMap scale_depth(const DepthMap& depth, double coefficient) {
  DepthMap out = depth;
  for (auto& v : out.values) v *= coefficient;
  return out;
}

PointCloud lift_mask(const DepthMap& depth, const CameraModel& cam, const PixelMask& mask, const RgbImage* rgb) {
  PointCloud pc = lift(depth, rgb, cam, &mask);
  if (pc.empty()) throw EmptyLift("mask selects no pixel with valid depth");
  return pc;
}

Aabb3 aabb_from_points(const PointCloud& pc, double trim_q) {
  if (pc.empty()) throw InvalidInput("aabb_from_points: empty point cloud");
  if (!(trim_q >= 0 && trim_q < 0.5)) throw InvalidInput("aabb_from_points: trim_q must lie in [0, 0.5)");

  Aabb3 box;
  std::vector<double> axis(pc.size());
  const double last = static_cast<double>(pc.size() - 1);
  auto quantile = [&](double q) {
    const double h = q * last;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, axis.size() - 1);
    return axis[lo] + (h - lo) * (axis[hi] - axis[lo]);
  };
  for (int a = 0; a < 3; ++a) {
    for (std::size_t i = 0; i < pc.size(); ++i) axis[i] = pc.points[i][a];
    std::sort(axis.begin(), axis.end());
    if (trim_q == 0) {
      box.min[a] = axis.front();
      box.max[a] = axis.back();
    } else {
      box.min[a] = quantile(trim_q);
      box.max[a] = quantile(1.0 - trim_q);
    }
  }
  return box;
}

double mean_flow_magnitude(const FlowField& flow, const PixelMask& mask) {
  if (flow.width != mask.width || flow.height != mask.height)
    throw InvalidInput("mean_flow_magnitude: flow and mask differ in size");
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (!mask.bits[i]) continue;
    sum += std::hypot(double(flow.vectors[i][0]), double(flow.vectors[i][1]));
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::optional<std::size_t> select_manipulated(std::span<const MaskDetection> detections, const FlowField& flow,
                                              double tau_flow) {
  std::optional<std::size_t> best;
  std::size_t best_area = 0;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const MaskDetection& d = detections[i];
    const std::size_t area = d.mask.count();
    if (area == 0 || mean_flow_magnitude(flow, d.mask) < tau_flow) continue;
    if (!best) {
      best = i;
      best_area = area;
      continue;
    }
    const double bc = detections[*best].confidence;
    if (d.confidence > bc || (d.confidence == bc && area > best_area)) {
      best = i;
      best_area = area;
    }
  }
  return best;
}

double iou3d(const Aabb3& a, const Aabb3& b) {
  const double va = a.volume(), vb = b.volume();
  if (!(va > 0) || !(vb > 0)) return 0.0;
  const Vec3 lo = a.min.cwiseMax(b.min);
  const Vec3 hi = a.max.cwiseMin(b.max);
  const Vec3 ext = (hi - lo).cwiseMax(0.0);
  const double inter = ext.prod();
  const double uni = va + vb - inter;
  if (!(uni > 0)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

LocalizationMetrics localization_metrics(std::span<const Aabb3> pred, std::span<const Aabb3> gt) {
  if (pred.size() != gt.size()) throw InvalidInput("localization_metrics: prediction and ground-truth counts differ");
  if (pred.empty()) throw InvalidInput("localization_metrics: need at least one pair");
  LocalizationMetrics m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double iou = iou3d(pred[i], gt[i]);
    m.mean_iou += iou;
    m.acc_at_25 += iou >= 0.25 ? 1.0 : 0.0;
    m.acc_at_50 += iou >= 0.50 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(pred.size());
  m.mean_iou /= n;
  m.acc_at_25 /= n;
  m.acc_at_50 /= n;
  return m;
}

}  // namespace embforge::geom3d
