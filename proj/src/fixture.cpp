#include "embforge/fixture.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include <Eigen/Geometry>

#include "embforge/errors.hpp"
#include "embforge/io.hpp"
#include "json.hpp"

namespace embforge::fixture {

Pose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(Vec3::UnitZ()).normalized();
  const Vec3 down = forward.cross(right);
  Pose p;
  p.rotation.col(0) = right;
  p.rotation.col(1) = down;
  p.rotation.col(2) = forward;
  p.translation = eye;
  return p;
}

PixelMask Render::mask_of(int cuboid) const {
  PixelMask m(depth.width, depth.height);
  for (std::size_t i = 0; i < hit.size(); ++i) m.bits[i] = hit[i] == cuboid ? 1 : 0;
  return m;
}

Render render(const CameraModel& cam, const std::vector<Cuboid>& cuboids, bool with_plane) {
  Render out{DepthMap(cam.width, cam.height), RgbImage(cam.width, cam.height),
             std::vector<int>(std::size_t(cam.width) * cam.height, -2)};
  const Mat3& R = cam.pose.rotation;
  const Vec3& o = cam.pose.translation;
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const Vec3 dc((u + 0.5 - cam.cx) / cam.fx, (v + 0.5 - cam.cy) / cam.fy, 1.0);
      const Vec3 dw = R * dc;
      double best = std::numeric_limits<double>::infinity();
      int hit = -2, face_axis = 2;
      if (with_plane && dw.z() < 0) {
        const double t = -o.z() / dw.z();
        if (t > 0) {
          best = t;
          hit = -1;
        }
      }
      for (std::size_t k = 0; k < cuboids.size(); ++k) {
        const Aabb3& b = cuboids[k].box;
        double tmin = -std::numeric_limits<double>::infinity(), tmax = std::numeric_limits<double>::infinity();
        int axis = 0;
        bool miss = false;
        for (int a = 0; a < 3 && !miss; ++a) {
          if (dw[a] == 0) {
            miss = o[a] < b.min[a] || o[a] > b.max[a];
            continue;
          }
          double t0 = (b.min[a] - o[a]) / dw[a], t1 = (b.max[a] - o[a]) / dw[a];
          if (t0 > t1) std::swap(t0, t1);
          if (t0 > tmin) {
            tmin = t0;
            axis = a;
          }
          tmax = std::min(tmax, t1);
        }
        if (!miss && tmin <= tmax && tmin > 0 && tmin < best) {
          best = tmin;
          hit = static_cast<int>(k);
          face_axis = axis;
        }
      }
      const std::size_t i = out.depth.index(u, v);
      out.hit[i] = hit;
      std::array<std::uint8_t, 3> color{0, 0, 0};
      if (hit == -1) {
        const Vec3 p = o + best * dw;
        const bool dark = (static_cast<long>(std::floor(p.x() / 0.05)) + static_cast<long>(std::floor(p.y() / 0.05))) & 1;
        color = dark ? std::array<std::uint8_t, 3>{110, 110, 110} : std::array<std::uint8_t, 3>{170, 170, 170};
      } else if (hit >= 0) {
        // Side faces a little darker than the top so edges stay visible.
        const double shade = face_axis == 2 ? 1.0 : face_axis == 0 ? 0.8 : 0.65;
        for (int c = 0; c < 3; ++c) color[c] = static_cast<std::uint8_t>(cuboids[hit].color[c] * shade);
      }
      if (hit != -2) out.depth.set(u, v, best);
      for (int c = 0; c < 3; ++c) out.rgb.data[3 * i + c] = color[c];
    }
  }
  return out;
}

Aabb3 visible_surface_bound(const Aabb3& box, const Vec3& c) {
  Aabb3 out;
  out.min = Vec3::Constant(std::numeric_limits<double>::infinity());
  out.max = Vec3::Constant(-std::numeric_limits<double>::infinity());
  for (int a = 0; a < 3; ++a) {
    for (int side = 0; side < 2; ++side) {
      const bool visible = side == 0 ? c[a] < box.min[a] : c[a] > box.max[a];
      if (!visible) continue;
      Vec3 lo = box.min, hi = box.max;
      if (side == 0) hi[a] = box.min[a];
      else lo[a] = box.max[a];
      out.min = out.min.cwiseMin(lo);
      out.max = out.max.cwiseMax(hi);
    }
  }
  return out;
}

namespace {

using nlohmann::ordered_json;

struct Rng {
  std::mt19937_64 engine;
  double uniform(double lo, double hi) { return lo + (hi - lo) * static_cast<double>(engine() >> 11) * 0x1.0p-53; }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine() % n); }
};

struct Prop {
  const char* label;
  std::array<std::uint8_t, 3> color;
};

constexpr Prop kMovable[] = {
    {"red block", {200, 40, 40}},  {"green cup", {40, 170, 60}}, {"yellow sponge", {220, 200, 40}},
    {"apple", {180, 30, 50}},      {"white mug", {235, 235, 235}}, {"orange", {240, 140, 30}},
};
constexpr Prop kTargets[] = {
    {"blue bowl", {40, 60, 200}}, {"plate", {225, 225, 210}}, {"wooden box", {150, 100, 60}},
    {"black tray", {30, 30, 30}}, {"pot", {120, 120, 140}},
};
constexpr const char* kInstructions[] = {
    "pick up the %s and place it next to the %s",
    "move the %s near the %s.",
    "push the %s towards the %s",
};
constexpr const char* kDatasets[] = {"bridge", "fractal", "taco_play", "jaco_play", "rh20t"};

std::string format2(const char* pattern, const char* a, const char* b) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

std::string frame_file(const char* stem, std::size_t t, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02zu.%s", stem, t, ext);
  return buf;
}

std::array<double, 2> project(const CameraModel& cam, const Vec3& world) {
  const Vec3 p = cam.pose.apply_inverse(world);
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy};
}

ordered_json pose_json(const Pose& p) {
  ordered_json a = ordered_json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a.push_back(p.rotation(r, c));
    a.push_back(p.translation[r]);
  }
  return a;
}

Aabb3 box_at(const Vec3& center_bottom, const Vec3& size) {
  Aabb3 b;
  b.min = Vec3(center_bottom.x() - size.x() / 2, center_bottom.y() - size.y() / 2, 0.0);
  b.max = Vec3(center_bottom.x() + size.x() / 2, center_bottom.y() + size.y() / 2, size.z());
  return b;
}

fs::path write_episode(const fs::path& root, std::size_t index, const Options& o, Rng& rng) {
  const std::size_t n = o.frames;
  const Prop& a = kMovable[rng.index(std::size(kMovable))];
  const Prop& b = kTargets[rng.index(std::size(kTargets))];
  const bool millimeters = index % 2 == 1;
  const bool moving_camera = o.episodes > 1 && index + 1 == o.episodes;

  char name[32];
  std::snprintf(name, sizeof name, "episode_%02zu", index);
  const fs::path dir = root / name;
  fs::create_directories(dir);

  CameraModel base;
  base.width = o.width;
  base.height = o.height;
  base.fx = base.fy = 0.9 * o.width;
  base.cx = o.width / 2.0;
  base.cy = o.height / 2.0;
  const Vec3 eye(rng.uniform(-0.05, 0.05), -0.8 + rng.uniform(-0.05, 0.05), 0.7 + rng.uniform(-0.05, 0.05));
  const Vec3 target(0, 0.05, 0);
  base.pose = look_at(eye, target);

  const Vec3 a_size(rng.uniform(0.06, 0.1), rng.uniform(0.06, 0.1), rng.uniform(0.05, 0.09));
  const Vec3 a_start(rng.uniform(-0.3, -0.15), rng.uniform(-0.1, 0.1), 0);
  const Vec3 b_size(rng.uniform(0.12, 0.18), rng.uniform(0.12, 0.18), rng.uniform(0.03, 0.06));
  const Vec3 b_pos(rng.uniform(0.15, 0.3), rng.uniform(0.0, 0.2), 0);
  const Vec3 a_end(b_pos.x() - b_size.x() / 2 - a_size.x() / 2 - 0.03, b_pos.y(), 0);

  // Grasp at frame g, carry until r, release on the last frame.
  const std::size_t g = n / 3, r = n - 2;
  auto object_at = [&](std::size_t t) -> Vec3 {
    if (t <= g) return a_start;
    if (t >= r) return a_end;
    const double s = double(t - g) / double(r - g);
    return a_start + s * (a_end - a_start);
  };
  const Vec3 lift(0, 0, a_size.z() + 0.02);
  const Vec3 home(0, -0.25, 0.45);

  std::vector<double> scale(n, 1.0);
  for (std::size_t t = 1; t < n; ++t) scale[t] = rng.uniform(0.8, 1.25);

  std::vector<CameraModel> cams(n, base);
  std::vector<Render> renders;
  std::vector<Vec3> centers;
  for (std::size_t t = 0; t < n; ++t) {
    if (moving_camera) cams[t].pose.translation += Vec3(0.01 * double(t), 0, 0);
    const Aabb3 abox = box_at(object_at(t), a_size);
    centers.push_back((abox.min + abox.max) / 2);
    renders.push_back(render(cams[t], {{abox, a.color, a.label}, {box_at(b_pos, b_size), b.color, b.label}}));
  }

  ordered_json frames = ordered_json::array();
  std::vector<io::DetectionRecord> detections;
  for (std::size_t t = 0; t < n; ++t) {
    const Render& rd = renders[t];
    DepthMap stored = rd.depth;
    for (auto& d : stored.values) d *= scale[t];
    ordered_json f;
    const std::string depth_name = frame_file("depth", t, millimeters ? "png" : "f32");
    if (millimeters) io::write_depth_png_mm(dir / depth_name, stored);
    else io::write_depth_f32(dir / depth_name, stored);
    const std::string rgb_name = frame_file("rgb", t, "png");
    io::write_rgb_png(dir / rgb_name, rd.rgb);
    f["rgb_path"] = rgb_name;
    f["depth_path"] = depth_name;
    f["depth_unit"] = millimeters ? "millimeters_u16" : "meters_f32";
    if (t + 1 < n) {
      // The carried object moves rigidly; everything else is still.
      const auto p0 = project(cams[t], centers[t]), p1 = project(cams[t], centers[t + 1]);
      const std::array<float, 2> motion{static_cast<float>(p1[0] - p0[0]), static_cast<float>(p1[1] - p0[1])};
      FlowField flow(o.width, o.height);
      for (std::size_t i = 0; i < flow.pixel_count(); ++i)
        if (rd.hit[i] == 0 || renders[t + 1].hit[i] == 0) flow.vectors[i] = motion;
      const std::string flow_name = frame_file("flow", t, "f32");
      io::write_flow_f32(dir / flow_name, flow);
      f["flow_path"] = flow_name;
    }
    f["intrinsics"] = {{"fx", cams[t].fx}, {"fy", cams[t].fy}, {"cx", cams[t].cx},
                       {"cy", cams[t].cy}, {"width", o.width}, {"height", o.height}};
    f["pose"] = pose_json(cams[t].pose);
    f["timestamp"] = 0.1 * double(t);
    frames.push_back(std::move(f));

    const PixelMask ma = rd.mask_of(0), mb = rd.mask_of(1);
    if (mb.count() > 0) detections.push_back({static_cast<int>(t), {b.label, mb, 0.95}});
    if (ma.count() > 0) detections.push_back({static_cast<int>(t), {a.label, ma, 0.9}});
  }
  io::write_detections(dir / "detections.json", detections);

  ordered_json actions = ordered_json::array();
  for (std::size_t t = 0; t < n; ++t) {
    Vec3 p;
    if (t + 1 < g) p = home + (double(t) / double(g - 1)) * (a_start + lift - home);
    else if (t <= g) p = a_start + lift;
    else p = object_at(std::min(t, r)) + lift;
    const int gripper = t < g || t + 1 == n ? 1 : 0;
    actions.push_back({p.x(), p.y(), p.z(), 0.0, 0.0, wrap_angle(0.3 + 0.05 * double(t)), gripper});
  }

  ordered_json m;
  m["schema_version"] = 1;
  m["id"] = std::string("synthetic-") + std::to_string(index);
  m["dataset"] = kDatasets[index % std::size(kDatasets)];
  m["instruction"] = format2(kInstructions[index % std::size(kInstructions)], a.label, b.label);
  const ordered_json ranges = {{-0.6, 0.6}, {-0.6, 0.6}, {-0.1, 0.9}};
  m["bounds"] = {{"position", ranges}, {"location", ranges}};
  m["frames"] = std::move(frames);
  m["actions"] = std::move(actions);
  m["detections_path"] = "detections.json";
  m["qa"] = ordered_json::array(
      {{{"question", std::string("Which object does the robot move?")},
        {"answer", std::string("The robot moves the ") + a.label + "."}},
       {{"question", std::string("What is next to the ") + b.label + "?"},
        {"answer", std::string("The ") + a.label + " is next to the " + b.label + "."},
        {"frame_index", n - 1}}});
  const fs::path manifest = dir / "manifest.json";
  io::write_text(manifest, m.dump(2) + "\n");
  return manifest;
}

}  // namespace

std::vector<fs::path> write_fixture(const fs::path& dir, const Options& opts) {
  if (opts.frames < 6) throw InvalidInput("fixture episodes need at least 6 frames");
  if (opts.width < 32 || opts.height < 24) throw InvalidInput("fixture images are too small");
  std::vector<fs::path> manifests;
  std::string list;
  for (std::size_t i = 0; i < opts.episodes; ++i) {
    Rng rng{std::mt19937_64(opts.seed * 1000003ull + i)};
    manifests.push_back(write_episode(dir, i, opts, rng));
    list += fs::relative(manifests.back(), dir).generic_string() + "\n";
  }
  io::write_text(dir / "manifests.txt", list);
  return manifests;
}

}  // namespace embforge::fixture
