#pragma once

#include <optional>
#include <span>
#include <vector>

#include "embforge/core.hpp"

namespace embforge::geom3d {

/// Pixels whose flow stayed below the threshold in every flow field.
struct BackgroundMask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> is_background;

  std::size_t count() const;
};

/// Multiplicative per-frame depth coefficients; coefficients[0] == 1.
struct ScaleCoefficients {
  std::vector<double> coefficients;
};

inline constexpr double kDefaultTauFlow = 1.0;
inline constexpr double kDefaultTrimQuantile = 0.01;
inline constexpr std::size_t kMinAlignmentPixels = 16;

/// Lifts every valid depth pixel to a world-frame point. Pixel (u, v) is
/// sampled at its center (u + 0.5, v + 0.5). Output is in row-major scan order.
PointCloud unproject(const DepthMap& depth, const RgbImage* rgb, const CameraModel& cam);
inline PointCloud unproject(const DepthMap& depth, const CameraModel& cam) { return unproject(depth, nullptr, cam); }

/// Camera-frame point of pixel (u, v) at depth d.
Vec3 unproject_pixel(double u, double v, double d, const CameraModel& cam);

/// Inverse of the pinhole lift for a camera-frame point: returns
/// (u + 0.5, v + 0.5, depth).
Vec3 project_camera(const Vec3& p_cam, const CameraModel& cam);

BackgroundMask background_mask(std::span<const FlowField> flows, double tau_flow);
BackgroundMask background_mask(std::span<const FlowField* const> flows, double tau_flow);

/// Least-squares scale of every depth map onto the first one over static
/// background pixels. Throws AlignmentUnreliable when fewer than 16 background
/// pixels are valid in every map.
ScaleCoefficients align_depth_scales(std::span<const DepthMap* const> depths, const BackgroundMask& bg);
ScaleCoefficients align_depth_scales(std::span<const DepthMap> depths, const BackgroundMask& bg);

/// Returns a copy of `depth` with every value multiplied by `coefficient`.
DepthMap scale_depth(const DepthMap& depth, double coefficient);

/// unproject() restricted to pixels set in `mask`. Throws EmptyLift when
/// no masked pixel has valid depth.
PointCloud lift_mask(const DepthMap& depth, const CameraModel& cam, const PixelMask& mask, const RgbImage* rgb = nullptr);

/// Per-axis [trim_q, 1 - trim_q] quantile box (linear interpolation on the
/// sorted coordinates). trim_q == 0 gives the exact extent.
Aabb3 aabb_from_points(const PointCloud& pc, double trim_q);

/// Mean flow magnitude over the pixels of `mask`.
double mean_flow_magnitude(const FlowField& flow, const PixelMask& mask);

/// Highest-confidence detection whose mean in-mask flow magnitude reaches
/// tau_flow. Ties go to the larger mask, then to the lower index.
std::optional<std::size_t> select_manipulated(std::span<const MaskDetection> detections, const FlowField& flow,
                                              double tau_flow);

/// Intersection over union of two boxes. Zero-volume boxes always give 0,
/// including two identical point boxes.
double iou3d(const Aabb3& a, const Aabb3& b);

struct LocalizationMetrics {
  double mean_iou = 0;
  double acc_at_25 = 0;
  double acc_at_50 = 0;
};

LocalizationMetrics localization_metrics(std::span<const Aabb3> pred, std::span<const Aabb3> gt);

}  // namespace embforge::geom3d
