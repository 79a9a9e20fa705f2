#include <fstream>

#include "doctest.h"
#include "embforge/errors.hpp"
#include "embforge/io.hpp"
#include "oracles.hpp"

using namespace embforge;
using namespace embforge::io;

TEST_CASE("float depth roundtrip keeps values and validity") {
  oracle::TempDir dir("io");
  DepthMap d(3, 2);
  d.set(0, 0, 1.25);
  d.set(2, 1, 0.5);
  write_depth_f32(dir / "d.f32", d);
  CHECK(std::filesystem::file_size(dir / "d.f32") == 12 + 6 * 4);
  const DepthMap r = read_depth(dir / "d.f32", DepthUnit::meters_f32);
  CHECK(r.width == 3);
  CHECK(r.height == 2);
  CHECK(r.valid == d.valid);
  CHECK(r.values[0] == 1.25);
  CHECK(r.values[5] == 0.5);
}

TEST_CASE("millimetre PNG depth: 1500 reads as 1.5 m and 0 as missing") {
  oracle::TempDir dir("io");
  DepthMap d(2, 2);
  d.set(0, 0, 1.5);
  d.set(1, 1, 0.0004);  // rounds to 0 mm
  write_depth_png_mm(dir / "d.png", d);
  const DepthMap r = read_depth_png_mm(dir / "d.png");
  CHECK(r.values[0] == 1.5);
  CHECK(r.valid == std::vector<std::uint8_t>{1, 0, 0, 0});
}

TEST_CASE("flow and rgb roundtrip") {
  oracle::TempDir dir("io");
  FlowField f(2, 1);
  f.vectors = {{1.5f, -2.f}, {0.f, 0.25f}};
  write_flow_f32(dir / "f.flow", f);
  const FlowField rf = read_flow_f32(dir / "f.flow");
  CHECK(rf.vectors == f.vectors);

  RgbImage img(2, 2);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<std::uint8_t>(i * 20);
  write_rgb_png(dir / "c.png", img);
  const RgbImage ri = read_rgb_png(dir / "c.png");
  CHECK(ri.width == 2);
  CHECK(ri.data == img.data);
}

TEST_CASE("corrupt or missing files raise IoError") {
  oracle::TempDir dir("io");
  CHECK_THROWS_AS(read_depth_f32(dir / "missing.f32"), IoError);
  std::ofstream(dir / "bad.f32") << "DPTH\x01";
  CHECK_THROWS_AS(read_depth_f32(dir / "bad.f32"), IoError);
  std::ofstream(dir / "bad.png") << "not a png";
  CHECK_THROWS_AS(read_rgb_png(dir / "bad.png"), IoError);
  CHECK_THROWS_AS(read_depth_png_mm(dir / "bad.png"), IoError);
  std::ofstream(dir / "bad.pc3d") << "PC3Dxxxx";
  CHECK_THROWS_AS(read_pointcloud_bin(dir / "bad.pc3d"), IoError);
}

TEST_CASE("point cloud formats") {
  oracle::TempDir dir("io");
  PointCloud one;
  one.points.emplace_back(1, 2, 3);
  one.colors.emplace_back(1.f, 0.5f, 0.f);
  write_pointcloud(one, dir / "one.pc3d", CloudFormat::bin_xyzrgb);
  CHECK(std::filesystem::file_size(dir / "one.pc3d") == 40);
  const auto b = read_pointcloud_bin(dir / "one.pc3d");
  REQUIRE(b.size() == 1);
  CHECK(b.points[0] == Vec3(1, 2, 3));
  CHECK(b.colors[0].y() == 0.5f);

  write_pointcloud(one, dir / "one.ply", CloudFormat::ply);
  const auto p = read_pointcloud_ply(dir / "one.ply");
  REQUIRE(p.size() == 1);
  CHECK(p.points[0] == Vec3(1, 2, 3));
  CHECK(std::abs(p.colors[0].y() - 0.5f) <= 0.5f / 255.f + 1e-6f);

  PointCloud plain;
  plain.points.emplace_back(0.1, 0.2, 0.3);
  write_pointcloud(plain, dir / "plain.pc3d", CloudFormat::bin_xyzrgb);
  CHECK(read_pointcloud_bin(dir / "plain.pc3d").colors.empty());

  CHECK_THROWS_AS(write_pointcloud(PointCloud{}, dir / "e.pc3d", CloudFormat::bin_xyzrgb), InvalidInput);
  CHECK(cloud_extension(CloudFormat::ply) == "ply");
  CHECK(cloud_extension(CloudFormat::bin_xyzrgb) == "pc3d");
}

TEST_CASE("rle masks start with zeros and roundtrip") {
  PixelMask m(3, 2);
  m.bits = {1, 1, 0, 0, 1, 1};
  const RleMask r = rle_encode(m);
  CHECK(r.counts == std::vector<std::uint32_t>{0, 2, 2, 2});
  const PixelMask back = rle_decode(r);
  CHECK(back.bits == m.bits);
  CHECK(rle_decode(rle_encode(PixelMask(4, 4))).count() == 0);
  CHECK_THROWS_AS(rle_decode(RleMask{2, 2, {1, 5}}), InvalidInput);
  CHECK_THROWS_AS(rle_decode(RleMask{2, 2, {1, 1}}), InvalidInput);
}

TEST_CASE("detections file roundtrip") {
  oracle::TempDir dir("io");
  PixelMask m(4, 2);
  m.bits[5] = 1;
  const std::vector<DetectionRecord> recs = {{0, {"cup", m, 0.75}}, {2, {"bowl", PixelMask(4, 2, true), 0.5}}};
  write_detections(dir / "det.json", recs);
  const auto back = read_detections(dir / "det.json");
  REQUIRE(back.size() == 2);
  CHECK(back[0].frame_index == 0);
  CHECK(back[0].detection.label == "cup");
  CHECK(back[0].detection.mask.bits == m.bits);
  CHECK(back[1].detection.confidence == 0.5);
  std::ofstream(dir / "bad.json") << R"([{"frame_index": 0}])";
  CHECK_THROWS_AS(read_detections(dir / "bad.json"), IoError);
}

TEST_CASE("text helpers create directories") {
  oracle::TempDir dir("io");
  write_text(dir / "a/b/c.txt", "hello");
  CHECK(read_text(dir / "a/b/c.txt") == "hello");
}
