#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace embforge {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

/// 64-bit FNV-1a. Stable across platforms; used for seeds and content keys.
std::uint64_t fnv1a64(std::string_view s);

/// Wraps an angle into [-pi, pi).
double wrap_angle(double radians);

/// Rigid camera-to-world transform.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.transpose() * (p - translation); }
  /// this ∘ other
  Pose compose(const Pose& other) const;
  bool is_rotation(double tol = 1e-9) const;
};

struct CameraModel {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;
  Pose pose;

  std::vector<std::string> violations() const;
};

/// Per-pixel metric depth, row-major. Pixels with valid == 0 carry no depth.
struct DepthMap {
  int width = 0, height = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), values(std::size_t(w) * h, 0.0), valid(std::size_t(w) * h, 0) {}

  std::size_t index(int u, int v) const { return std::size_t(v) * width + u; }
  void set(int u, int v, double d) {
    values[index(u, v)] = d;
    valid[index(u, v)] = 1;
  }
  std::size_t pixel_count() const { return std::size_t(width) * height; }
  std::vector<std::string> violations() const;
};

/// Per-pixel 2D displacement from one frame to the next, row-major.
struct FlowField {
  int width = 0, height = 0;
  std::vector<std::array<float, 2>> vectors;

  FlowField() = default;
  FlowField(int w, int h) : width(w), height(h), vectors(std::size_t(w) * h, {0.f, 0.f}) {}
  std::size_t pixel_count() const { return std::size_t(width) * height; }
};

/// 8-bit interleaved RGB image, row-major.
struct RgbImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(std::size_t(w) * h * 3, 0) {}
};

/// Row-major boolean pixel mask.
struct PixelMask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> bits;

  PixelMask() = default;
  PixelMask(int w, int h, bool fill = false) : width(w), height(h), bits(std::size_t(w) * h, fill ? 1 : 0) {}
  std::size_t count() const;
};

struct MaskDetection {
  std::string label;
  PixelMask mask;
  double confidence = 0;
};

struct PointCloud {
  std::vector<Vec3> points;
  /// Empty, or one (r, g, b) in [0, 1] per point.
  std::vector<Eigen::Vector3f> colors;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct Aabb3 {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool valid() const { return (min.array() <= max.array()).all() && min.allFinite() && max.allFinite(); }
  double volume() const { return (max - min).prod(); }
  bool contains(const Vec3& p) const { return (p.array() >= min.array()).all() && (p.array() <= max.array()).all(); }
  bool operator==(const Aabb3& o) const { return min == o.min && max == o.max; }
};

/// 7-DoF end-effector command: position (m), roll/pitch/yaw (rad), gripper.
struct ActionStep {
  Vec3 position = Vec3::Zero();
  Vec3 rotation = Vec3::Zero();
  int gripper = 0;
};

struct AxisRange {
  double lo = 0, hi = 1;
  double width() const { return hi - lo; }
};

/// Quantization ranges: `position` for action locations, `location` for
/// object boxes.
struct WorkspaceBounds {
  std::array<AxisRange, 3> position{};
  std::array<AxisRange, 3> location{};

  static WorkspaceBounds unit();
  static WorkspaceBounds uniform(const std::array<AxisRange, 3>& ranges);
  std::vector<std::string> violations() const;
};

enum class DepthUnit { meters_f32, millimeters_u16 };

struct Frame {
  std::string rgb_path;
  std::string depth_path;
  DepthUnit depth_unit = DepthUnit::meters_f32;
  std::string flow_path;
  CameraModel camera;
  double timestamp = 0;

  std::shared_ptr<const DepthMap> depth;
  /// Forward flow from this frame to the next one, when available.
  std::shared_ptr<const FlowField> flow;
  std::shared_ptr<const RgbImage> rgb;
};

/// A pre-existing question/answer pair attached to an episode.
struct QaRecord {
  std::string question;
  std::string answer;
  std::optional<int> frame_index;
};

struct Episode {
  std::string id;
  std::string dataset = "unknown";
  std::vector<Frame> frames;
  /// actions[t] is the command issued at frame t.
  std::vector<ActionStep> actions;
  std::string instruction;
  /// detections[t] are the masks found on frame t; may be shorter than frames.
  std::vector<std::vector<MaskDetection>> detections;
  WorkspaceBounds bounds;
  std::vector<QaRecord> qa;
};

/// Checks every Episode invariant. Returns an empty list iff all hold.
std::vector<std::string> validate_episode(const Episode& e);

}  // namespace embforge
