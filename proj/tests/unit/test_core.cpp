#include <cmath>
#include <random>

#include <Eigen/Geometry>

#include "doctest.h"
#include "embforge/core.hpp"
#include "episodes.hpp"

using namespace embforge;

TEST_CASE("fnv1a64 matches published vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("wrap_angle lands in [-pi, pi) and preserves the angle") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> any(-50.0, 50.0);
  for (int i = 0; i < 2000; ++i) {
    const double x = any(rng);
    const double w = wrap_angle(x);
    CHECK(w >= -kPi);
    CHECK(w < kPi);
    CHECK(std::abs(std::sin(w) - std::sin(x)) < 1e-9);
    CHECK(std::abs(std::cos(w) - std::cos(x)) < 1e-9);
  }
  CHECK(wrap_angle(kPi) == doctest::Approx(-kPi));
  CHECK(wrap_angle(-kPi) == doctest::Approx(-kPi));
  CHECK(wrap_angle(0.0) == 0.0);
}

TEST_CASE("pose apply and apply_inverse are inverse; compose chains") {
  Pose a;
  a.rotation = Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  a.translation = Vec3(0.1, -0.2, 0.3);
  Pose b;
  b.rotation = Eigen::AngleAxisd(-1.1, Vec3(0, 1, 0)).toRotationMatrix();
  b.translation = Vec3(1, 0, 0);
  const Vec3 p(0.4, 0.5, -0.6);
  CHECK((a.apply_inverse(a.apply(p)) - p).norm() < 1e-12);
  CHECK((a.compose(b).apply(p) - a.apply(b.apply(p))).norm() < 1e-12);
  CHECK(a.is_rotation());
  Pose mirror;
  mirror.rotation(0, 0) = -1;
  CHECK_FALSE(mirror.is_rotation());
}

TEST_CASE("camera violations name the bad field") {
  CameraModel cam = testep::small_camera();
  CHECK(cam.violations().empty());
  cam.fx = 0;
  REQUIRE(cam.violations().size() == 1);
  CHECK(cam.violations()[0].rfind("focal", 0) == 0);
  cam = testep::small_camera();
  cam.cx = 100;
  CHECK(cam.violations()[0].rfind("cx", 0) == 0);
}

TEST_CASE("validate_episode accepts a well-formed episode") {
  CHECK(validate_episode(testep::flat_episode()).empty());
  // One action fewer than frames is also allowed.
  auto e = testep::flat_episode();
  e.actions.pop_back();
  CHECK(validate_episode(e).empty());
}

TEST_CASE("validate_episode reports each broken invariant") {
  auto has = [](const std::vector<std::string>& v, const std::string& prefix) {
    for (const auto& s : v)
      if (s.rfind(prefix, 0) == 0) return true;
    return false;
  };
  auto e = testep::flat_episode();
  e.frames.resize(1);
  e.actions.resize(1);
  CHECK(has(validate_episode(e), "frames: need"));

  e = testep::flat_episode();
  e.actions.resize(1);
  CHECK(has(validate_episode(e), "actions: length"));

  e = testep::flat_episode();
  e.frames[2].timestamp = e.frames[1].timestamp;
  CHECK(has(validate_episode(e), "frames[2].timestamp"));

  e = testep::flat_episode();
  e.actions[1].rotation.z() = kPi;
  CHECK(has(validate_episode(e), "actions[1].rotation"));

  e = testep::flat_episode();
  e.actions[0].gripper = 2;
  CHECK(has(validate_episode(e), "actions[0].gripper"));

  e = testep::flat_episode();
  e.frames[0].depth = nullptr;
  CHECK(has(validate_episode(e), "frames[0].depth: missing"));

  e = testep::flat_episode();
  e.detections = {{MaskDetection{"block", PixelMask(8, 6), 0.5}}};
  CHECK(has(validate_episode(e), "detections[0][0].mask: empty"));

  e = testep::flat_episode();
  e.bounds.location[1] = {1, 1};
  CHECK(has(validate_episode(e), "bounds.location[1]"));
}

TEST_CASE("depth violations catch valid pixels with bad depth") {
  DepthMap d(2, 2);
  d.set(0, 0, 1.0);
  CHECK(d.violations().empty());
  d.values[0] = -1;
  CHECK(d.violations().size() == 1);
  d.values[0] = NAN;
  CHECK(d.violations().size() == 1);
}
