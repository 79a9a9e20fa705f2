#include "embforge/io.hpp"

#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <png.h>

#include "embforge/errors.hpp"
#include "json.hpp"

namespace embforge::io {

namespace {

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  char b[4];
  std::memcpy(b, &bits, 4);
  out.append(b, 4);
}

template <typename T>
T get_le(const std::string& in, std::size_t at) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, in.data() + at, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  T v;
  std::memcpy(&v, &bits, 4);
  return v;
}

std::string read_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_binary(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

// Parses the 12-byte magic/width/height header shared by the raw formats.
std::pair<int, int> raw_header(const std::string& bytes, const char* magic, std::size_t per_pixel,
                               const fs::path& path) {
  if (bytes.size() < 12 || bytes.compare(0, 4, magic) != 0)
    throw IoError(path.string(), std::string("missing ") + magic + " header");
  const auto w = get_le<std::uint32_t>(bytes, 4), h = get_le<std::uint32_t>(bytes, 8);
  if (w == 0 || h == 0 || w > 1u << 15 || h > 1u << 15) throw IoError(path.string(), "implausible image size");
  if (bytes.size() != 12 + std::size_t(w) * h * per_pixel) throw IoError(path.string(), "size does not match header");
  return {static_cast<int>(w), static_cast<int>(h)};
}

struct PngRead {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rows;  // tightly packed
};

// libpng reports through these instead of printing to stderr.
struct PngMessage {
  char text[160] = "";
};

[[noreturn]] void png_on_error(png_structp png, png_const_charp msg) {
  auto* m = static_cast<PngMessage*>(png_get_error_ptr(png));
  std::snprintf(m->text, sizeof m->text, "%s", msg);
  png_longjmp(png, 1);
}

void png_on_warning(png_structp, png_const_charp) {}

// Reads an 8-bit RGB or 16-bit gray PNG into host-order samples.
PngRead png_read(const fs::path& path, bool want_gray16) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError(path.string(), "cannot open for reading");
  PngMessage message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_on_error, png_on_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  PngRead out;
  std::vector<png_bytep> row_ptrs;
  const char* error = nullptr;
  if (!png || !info) {
    error = "libpng init failed";
  } else if (setjmp(png_jmpbuf(png))) {
    error = "corrupt PNG";
  } else {
    png_init_io(png, fp);
    png_read_info(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (want_gray16) {
      if (color != PNG_COLOR_TYPE_GRAY || depth != 16) {
        error = "expected a 16-bit grayscale PNG";
      } else if constexpr (std::endian::native == std::endian::little) {
        png_set_swap(png);
      }
    } else {
      if (depth == 16) png_set_strip_16(png);
      if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
      if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
      if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
      if (depth < 8) png_set_packing(png);
    }
    if (!error) {
      png_read_update_info(png, info);
      out.width = static_cast<int>(png_get_image_width(png, info));
      out.height = static_cast<int>(png_get_image_height(png, info));
      const std::size_t stride = png_get_rowbytes(png, info);
      out.rows.resize(stride * out.height);
      row_ptrs.resize(out.height);
      for (int y = 0; y < out.height; ++y) row_ptrs[y] = out.rows.data() + y * stride;
      png_read_image(png, row_ptrs.data());
      png_read_end(png, nullptr);
    }
  }
  png_destroy_read_struct(png ? &png : nullptr, info ? &info : nullptr, nullptr);
  std::fclose(fp);
  if (error) throw IoError(path.string(), message.text[0] ? std::string(error) + ": " + message.text : error);
  return out;
}

void png_write(const fs::path& path, int width, int height, bool gray16, const std::vector<std::uint8_t>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError(path.string(), "cannot open for writing");
  PngMessage message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_on_error, png_on_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  std::vector<png_bytep> row_ptrs(height);
  const std::size_t stride = std::size_t(width) * (gray16 ? 2 : 3);
  for (int y = 0; y < height; ++y) row_ptrs[y] = const_cast<png_bytep>(rows.data() + y * stride);
  const char* error = nullptr;
  if (!png || !info) {
    error = "libpng init failed";
  } else if (setjmp(png_jmpbuf(png))) {
    error = "PNG encoding failed";
  } else {
    png_init_io(png, fp);
    png_set_IHDR(png, info, width, height, gray16 ? 16 : 8, gray16 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (gray16 && std::endian::native == std::endian::little) png_set_swap(png);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(png ? &png : nullptr, info ? &info : nullptr);
  std::fclose(fp);
  if (error) throw IoError(path.string(), error);
}

}  // namespace

DepthMap read_depth_png_mm(const fs::path& path) {
  const PngRead img = png_read(path, true);
  DepthMap d(img.width, img.height);
  for (std::size_t i = 0; i < d.pixel_count(); ++i) {
    std::uint16_t mm;
    std::memcpy(&mm, img.rows.data() + 2 * i, 2);
    if (mm > 0) {
      d.values[i] = mm / 1000.0;
      d.valid[i] = 1;
    }
  }
  return d;
}

void write_depth_png_mm(const fs::path& path, const DepthMap& depth) {
  std::vector<std::uint8_t> rows(depth.pixel_count() * 2);
  for (std::size_t i = 0; i < depth.pixel_count(); ++i) {
    double mm = depth.valid[i] ? std::round(depth.values[i] * 1000.0) : 0.0;
    const auto v = static_cast<std::uint16_t>(std::clamp(mm, 0.0, 65535.0));
    std::memcpy(rows.data() + 2 * i, &v, 2);
  }
  png_write(path, depth.width, depth.height, true, rows);
}

DepthMap read_depth_f32(const fs::path& path) {
  const std::string bytes = read_binary(path);
  const auto [w, h] = raw_header(bytes, "DPTH", 4, path);
  DepthMap d(w, h);
  for (std::size_t i = 0; i < d.pixel_count(); ++i) {
    const float v = get_le<float>(bytes, 12 + 4 * i);
    if (std::isfinite(v) && v > 0) {
      d.values[i] = v;
      d.valid[i] = 1;
    }
  }
  return d;
}

void write_depth_f32(const fs::path& path, const DepthMap& depth) {
  std::string out = "DPTH";
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(depth.width));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(depth.height));
  out.reserve(12 + depth.pixel_count() * 4);
  for (std::size_t i = 0; i < depth.pixel_count(); ++i)
    put_le<float>(out, depth.valid[i] ? static_cast<float>(depth.values[i]) : 0.f);
  write_binary(path, out);
}

DepthMap read_depth(const fs::path& path, DepthUnit unit) {
  return unit == DepthUnit::millimeters_u16 ? read_depth_png_mm(path) : read_depth_f32(path);
}

FlowField read_flow_f32(const fs::path& path) {
  const std::string bytes = read_binary(path);
  const auto [w, h] = raw_header(bytes, "FLOW", 8, path);
  FlowField f(w, h);
  for (std::size_t i = 0; i < f.pixel_count(); ++i) {
    f.vectors[i] = {get_le<float>(bytes, 12 + 8 * i), get_le<float>(bytes, 16 + 8 * i)};
  }
  return f;
}

void write_flow_f32(const fs::path& path, const FlowField& flow) {
  std::string out = "FLOW";
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(flow.width));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(flow.height));
  for (const auto& v : flow.vectors) {
    put_le<float>(out, v[0]);
    put_le<float>(out, v[1]);
  }
  write_binary(path, out);
}

RgbImage read_rgb_png(const fs::path& path) {
  PngRead img = png_read(path, false);
  RgbImage out;
  out.width = img.width;
  out.height = img.height;
  out.data = std::move(img.rows);
  return out;
}

void write_rgb_png(const fs::path& path, const RgbImage& image) {
  png_write(path, image.width, image.height, false, image.data);
}

std::string cloud_extension(CloudFormat f) { return f == CloudFormat::ply ? "ply" : "pc3d"; }

void write_pointcloud(const PointCloud& pc, const fs::path& path, CloudFormat format) {
  if (pc.empty()) throw InvalidInput("write_pointcloud: empty cloud");
  const bool colored = !pc.colors.empty();
  if (colored && pc.colors.size() != pc.points.size())
    throw InvalidInput("write_pointcloud: color count differs from point count");
  std::string out;
  if (format == CloudFormat::bin_xyzrgb) {
    out.reserve(16 + pc.size() * 24);
    out += "PC3D";
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(pc.size()));
    put_le<std::uint32_t>(out, colored ? 1u : 0u);
    put_le<std::uint32_t>(out, 0u);  // reserved, pads the header to 16 bytes
    for (std::size_t i = 0; i < pc.size(); ++i) {
      for (int a = 0; a < 3; ++a) put_le<float>(out, static_cast<float>(pc.points[i][a]));
      for (int a = 0; a < 3; ++a) put_le<float>(out, colored ? pc.colors[i][a] : 0.f);
    }
  } else {
    out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(pc.size()) +
          "\nproperty float x\nproperty float y\nproperty float z\n"
          "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    for (std::size_t i = 0; i < pc.size(); ++i) {
      for (int a = 0; a < 3; ++a) put_le<float>(out, static_cast<float>(pc.points[i][a]));
      for (int a = 0; a < 3; ++a) {
        const float c = colored ? pc.colors[i][a] : 0.f;
        out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.f, 1.f) * 255.f))));
      }
    }
  }
  write_binary(path, out);
}

PointCloud read_pointcloud_bin(const fs::path& path) {
  const std::string bytes = read_binary(path);
  if (bytes.size() < 16 || bytes.compare(0, 4, "PC3D") != 0) throw IoError(path.string(), "missing PC3D header");
  const auto count = get_le<std::uint32_t>(bytes, 4);
  const auto flags = get_le<std::uint32_t>(bytes, 8);
  if (bytes.size() != 16 + std::size_t(count) * 24) throw IoError(path.string(), "size does not match header");
  PointCloud pc;
  pc.points.resize(count);
  if (flags & 1u) pc.colors.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = 16 + i * 24;
    for (int a = 0; a < 3; ++a) pc.points[i][a] = get_le<float>(bytes, at + 4 * a);
    if (flags & 1u)
      for (int a = 0; a < 3; ++a) pc.colors[i][a] = get_le<float>(bytes, at + 12 + 4 * a);
  }
  return pc;
}

PointCloud read_pointcloud_ply(const fs::path& path) {
  const std::string bytes = read_binary(path);
  const std::string end_tag = "end_header\n";
  const auto header_end = bytes.find(end_tag);
  if (bytes.rfind("ply\n", 0) != 0 || header_end == std::string::npos) throw IoError(path.string(), "not a PLY file");
  std::istringstream header(bytes.substr(0, header_end));
  std::string line;
  std::size_t count = 0;
  while (std::getline(header, line)) {
    if (line.rfind("format", 0) == 0 && line != "format binary_little_endian 1.0")
      throw IoError(path.string(), "only binary_little_endian PLY is supported");
    if (line.rfind("element vertex ", 0) == 0) count = std::stoul(line.substr(15));
  }
  const std::size_t body = header_end + end_tag.size();
  if (bytes.size() != body + count * 15) throw IoError(path.string(), "vertex data does not match header");
  PointCloud pc;
  pc.points.resize(count);
  pc.colors.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = body + i * 15;
    for (int a = 0; a < 3; ++a) pc.points[i][a] = get_le<float>(bytes, at + 4 * a);
    for (int a = 0; a < 3; ++a) pc.colors[i][a] = static_cast<std::uint8_t>(bytes[at + 12 + a]) / 255.f;
  }
  return pc;
}

RleMask rle_encode(const PixelMask& mask) {
  RleMask rle{mask.width, mask.height, {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (auto b : mask.bits) {
    const std::uint8_t bit = b ? 1 : 0;
    if (bit != current) {
      rle.counts.push_back(run);
      run = 0;
      current = bit;
    }
    ++run;
  }
  rle.counts.push_back(run);
  return rle;
}

PixelMask rle_decode(const RleMask& rle) {
  PixelMask m(rle.width, rle.height);
  std::size_t at = 0;
  std::uint8_t bit = 0;
  for (auto run : rle.counts) {
    if (at + run > m.bits.size()) throw InvalidInput("rle counts exceed mask size");
    std::fill_n(m.bits.begin() + static_cast<std::ptrdiff_t>(at), run, bit);
    at += run;
    bit ^= 1;
  }
  if (at != m.bits.size()) throw InvalidInput("rle counts do not cover the mask");
  return m;
}

std::vector<DetectionRecord> read_detections(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string(), e.what());
  }
  if (!j.is_array()) throw IoError(path.string(), "detections must be a JSON array");
  std::vector<DetectionRecord> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& r = j[i];
    try {
      DetectionRecord d;
      d.frame_index = r.at("frame_index").get<int>();
      d.detection.label = r.at("label").get<std::string>();
      d.detection.confidence = r.at("confidence").get<double>();
      const auto& rle = r.at("rle_mask");
      RleMask m;
      m.height = rle.at("size").at(0).get<int>();
      m.width = rle.at("size").at(1).get<int>();
      m.counts = rle.at("counts").get<std::vector<std::uint32_t>>();
      d.detection.mask = rle_decode(m);
      out.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw IoError(path.string(), "record " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

void write_detections(const fs::path& path, const std::vector<DetectionRecord>& records) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    const RleMask rle = rle_encode(r.detection.mask);
    arr.push_back({{"frame_index", r.frame_index},
                   {"label", r.detection.label},
                   {"confidence", r.detection.confidence},
                   {"rle_mask", {{"size", {rle.height, rle.width}}, {"counts", rle.counts}}}});
  }
  write_text(path, arr.dump() + "\n");
}

std::string read_text(const fs::path& path) { return read_binary(path); }

void write_text(const fs::path& path, const std::string& text) { write_binary(path, text); }

}  // namespace embforge::io
