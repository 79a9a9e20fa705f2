#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "embforge/core.hpp"

namespace embforge::io {

namespace fs = std::filesystem;

// Depth: 16-bit grayscale PNG in millimeters (0 = no depth), or raw
// "DPTH" | u32 width | u32 height | float32 meters row-major, little-endian.
DepthMap read_depth_png_mm(const fs::path& path);
void write_depth_png_mm(const fs::path& path, const DepthMap& depth);
DepthMap read_depth_f32(const fs::path& path);
void write_depth_f32(const fs::path& path, const DepthMap& depth);
DepthMap read_depth(const fs::path& path, DepthUnit unit);

// Flow: "FLOW" | u32 width | u32 height | (dx, dy) float32 per pixel.
FlowField read_flow_f32(const fs::path& path);
void write_flow_f32(const fs::path& path, const FlowField& flow);

RgbImage read_rgb_png(const fs::path& path);
void write_rgb_png(const fs::path& path, const RgbImage& image);

enum class CloudFormat { bin_xyzrgb, ply };

/// File extension used for a cloud format ("pc3d" or "ply").
std::string cloud_extension(CloudFormat f);

/// bin_xyzrgb: "PC3D" | u32 count | u32 flags (bit 0: has colors) | count x 6
/// float32 (x, y, z, r, g, b). ply: binary little-endian, float xyz + uchar rgb.
void write_pointcloud(const PointCloud& pc, const fs::path& path, CloudFormat format);
PointCloud read_pointcloud_bin(const fs::path& path);
PointCloud read_pointcloud_ply(const fs::path& path);

/// Run-length mask: alternating run lengths over the row-major pixels,
/// starting with a (possibly empty) run of zeros.
struct RleMask {
  int width = 0, height = 0;
  std::vector<std::uint32_t> counts;
};

RleMask rle_encode(const PixelMask& mask);
PixelMask rle_decode(const RleMask& rle);

struct DetectionRecord {
  int frame_index = 0;
  MaskDetection detection;
};

/// JSON array of {frame_index, label, confidence, rle_mask: {size: [h, w], counts: [...]}}.
std::vector<DetectionRecord> read_detections(const fs::path& path);
void write_detections(const fs::path& path, const std::vector<DetectionRecord>& records);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace embforge::io
