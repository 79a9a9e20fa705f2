#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "embforge/core.hpp"

namespace embforge::fixture {

namespace fs = std::filesystem;

/// Camera-to-world pose of a camera at `eye` looking at `target`, world z up.
Pose look_at(const Vec3& eye, const Vec3& target);

struct Cuboid {
  Aabb3 box;
  std::array<std::uint8_t, 3> color{200, 40, 40};
  std::string label;
};

/// Ray-cast render of cuboids resting on the z = 0 plane.
struct Render {
  DepthMap depth;
  RgbImage rgb;
  /// Per pixel: index of the cuboid hit, -1 for the plane, -2 for nothing.
  std::vector<int> hit;

  PixelMask mask_of(int cuboid) const;
};

/// `with_plane` false leaves plane pixels without depth.
Render render(const CameraModel& cam, const std::vector<Cuboid>& cuboids, bool with_plane = true);

/// Faces of the cuboid that face the camera centre, as the AABB of their
/// corners. For a lone convex box fully in view this bounds its visible surface.
Aabb3 visible_surface_bound(const Aabb3& box, const Vec3& camera_centre);

struct Options {
  std::size_t episodes = 10;
  std::size_t frames = 10;
  int width = 160;
  int height = 120;
  std::uint64_t seed = 7;
};

/// Writes `episode_NN/` directories (manifest, depth, flow, rgb, detections)
/// plus `manifests.txt`. Returns the manifest paths in order.
std::vector<fs::path> write_fixture(const fs::path& dir, const Options& opts = {});

}  // namespace embforge::fixture
