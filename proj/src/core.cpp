#include "embforge/core.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/LU>

namespace embforge {

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

double wrap_angle(double radians) {
  constexpr double two_pi = 2.0 * kPi;
  double w = radians - two_pi * std::floor((radians + kPi) / two_pi);
  // floor() can land exactly on +pi after rounding.
  if (w >= kPi) w -= two_pi;
  if (w < -kPi) w = -kPi;
  return w;
}

Pose Pose::compose(const Pose& other) const {
  Pose out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

bool Pose::is_rotation(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Mat3 err = rotation.transpose() * rotation - Mat3::Identity();
  return err.cwiseAbs().maxCoeff() < tol && std::abs(rotation.determinant() - 1.0) < tol;
}

std::vector<std::string> CameraModel::violations() const {
  std::vector<std::string> out;
  if (!(fx > 0) || !(fy > 0)) out.emplace_back("focal: fx and fy must be > 0");
  if (width <= 0 || height <= 0) out.emplace_back("size: width and height must be > 0");
  if (!(cx > 0 && cx < width)) out.emplace_back("cx: must lie in (0, width)");
  if (!(cy > 0 && cy < height)) out.emplace_back("cy: must lie in (0, height)");
  if (!pose.is_rotation()) out.emplace_back("pose: rotation not orthonormal with det +1");
  return out;
}

std::vector<std::string> DepthMap::violations() const {
  std::vector<std::string> out;
  if (values.size() != pixel_count() || valid.size() != pixel_count()) {
    out.emplace_back("buffer size does not match width*height");
    return out;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (valid[i] && !(std::isfinite(values[i]) && values[i] > 0)) {
      out.emplace_back("valid pixel " + std::to_string(i) + " has non-positive or non-finite depth");
      break;
    }
  }
  return out;
}

std::size_t PixelMask::count() const {
  std::size_t n = 0;
  for (auto b : bits) n += b != 0;
  return n;
}

WorkspaceBounds WorkspaceBounds::unit() { return uniform({AxisRange{0, 1}, AxisRange{0, 1}, AxisRange{0, 1}}); }

WorkspaceBounds WorkspaceBounds::uniform(const std::array<AxisRange, 3>& ranges) {
  WorkspaceBounds b;
  b.position = ranges;
  b.location = ranges;
  return b;
}

std::vector<std::string> WorkspaceBounds::violations() const {
  std::vector<std::string> out;
  for (int a = 0; a < 3; ++a) {
    if (!(position[a].lo < position[a].hi))
      out.push_back("bounds.position[" + std::to_string(a) + "]: need lo < hi");
    if (!(location[a].lo < location[a].hi))
      out.push_back("bounds.location[" + std::to_string(a) + "]: need lo < hi");
  }
  return out;
}

namespace {

void prefixed(std::vector<std::string>& out, const std::string& prefix, const std::vector<std::string>& items) {
  for (const auto& s : items) out.push_back(prefix + s);
}

}  // namespace

std::vector<std::string> validate_episode(const Episode& e) {
  std::vector<std::string> out;
  const std::size_t n = e.frames.size();
  if (n < 2) out.emplace_back("frames: need ≥ 2");
  if (!e.actions.empty() || n > 0) {
    const bool ok = e.actions.size() == n || (n > 0 && e.actions.size() == n - 1);
    if (!ok)
      out.push_back("actions: length " + std::to_string(e.actions.size()) + " ∉ {" + std::to_string(n) + ", " +
                    std::to_string(n == 0 ? 0 : n - 1) + "}");
  }

  for (std::size_t t = 0; t < n; ++t) {
    const Frame& f = e.frames[t];
    const std::string p = "frames[" + std::to_string(t) + "].";
    if (t > 0 && !(f.timestamp > e.frames[t - 1].timestamp)) out.push_back(p + "timestamp: not strictly increasing");
    prefixed(out, p + "camera.", f.camera.violations());
    if (!f.depth) {
      out.push_back(p + "depth: missing");
    } else {
      if (f.depth->width != f.camera.width || f.depth->height != f.camera.height)
        out.push_back(p + "depth: dimensions differ from camera");
      prefixed(out, p + "depth: ", f.depth->violations());
    }
    if (f.flow) {
      if (f.flow->width != f.camera.width || f.flow->height != f.camera.height)
        out.push_back(p + "flow: dimensions differ from camera");
      for (const auto& v : f.flow->vectors) {
        if (!std::isfinite(v[0]) || !std::isfinite(v[1])) {
          out.push_back(p + "flow: non-finite component");
          break;
        }
      }
    }
    if (f.rgb && (f.rgb->width != f.camera.width || f.rgb->height != f.camera.height))
      out.push_back(p + "rgb: dimensions differ from camera");
  }

  for (std::size_t i = 0; i < e.actions.size(); ++i) {
    const ActionStep& a = e.actions[i];
    const std::string p = "actions[" + std::to_string(i) + "].";
    if (!a.position.allFinite()) out.push_back(p + "position: non-finite");
    for (int k = 0; k < 3; ++k) {
      const double r = a.rotation[k];
      if (!(r >= -kPi && r < kPi)) {
        out.push_back(p + "rotation ∉ [−π, π)");
        break;
      }
    }
    if (a.gripper != 0 && a.gripper != 1) out.push_back(p + "gripper ∉ {0,1}");
  }

  if (e.detections.size() > n) out.emplace_back("detections: more frames than the episode has");
  for (std::size_t t = 0; t < e.detections.size() && t < n; ++t) {
    const auto& cam = e.frames[t].camera;
    for (std::size_t j = 0; j < e.detections[t].size(); ++j) {
      const MaskDetection& d = e.detections[t][j];
      const std::string p = "detections[" + std::to_string(t) + "][" + std::to_string(j) + "].";
      if (d.mask.width != cam.width || d.mask.height != cam.height) out.push_back(p + "mask: dimensions differ from camera");
      if (d.mask.count() == 0) out.push_back(p + "mask: empty");
      if (!(d.confidence >= 0 && d.confidence <= 1)) out.push_back(p + "confidence ∉ [0,1]");
      if (d.label.empty()) out.push_back(p + "label: empty");
    }
  }

  for (auto& v : e.bounds.violations()) out.push_back(std::move(v));
  return out;
}

}  // namespace embforge
