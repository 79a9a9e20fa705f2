#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "embforge/io.hpp"
#include "embforge/sample.hpp"

namespace embforge {

enum class DiversifierMode { off, offline, replay, http };

std::string_view diversifier_mode_name(DiversifierMode m);

/// Per-dataset enablement columns. Goal generation splits into image, depth
/// and point-cloud columns; the other columns are task names.
inline constexpr std::array<std::string_view, 10> kMatrixColumns = {
    "embodied_qa", "whatif_qa",  "task_caption", "dense_caption", "verification",
    "localization", "goal_image", "goal_depth",  "goal_pcd",      "action_prediction"};

/// Kind of value a configuration key takes.
enum class KeyKind { boolean, integer, real, text };

struct ConfigKey {
  std::string_view name;
  KeyKind kind;
  std::string_view help;
};

/// Every settable key. Each is accepted in the config file and as a
/// `--<name>` flag.
std::span<const ConfigKey> config_keys();

struct Config {
  std::map<TaskType, bool> tasks;
  /// dataset -> column -> enabled. Datasets not listed use `tasks` alone.
  std::map<std::string, std::map<std::string, bool>> matrix;

  double tau_flow = 1.0;
  double trim_q = 0.01;
  std::size_t verification_k = 1;
  std::size_t verification_negatives = 2;
  double keyframe_speed_eps = 1e-3;
  bool goal_image = true;
  bool goal_depth = true;
  bool goal_pcd = true;

  std::size_t shard_size = 1000;
  io::CloudFormat pointcloud_format = io::CloudFormat::bin_xyzrgb;
  std::uint64_t seed = 0;
  int workers = 1;

  DiversifierMode diversifier = DiversifierMode::off;
  std::string endpoint;
  std::string replay_dir;
  std::string model = "gpt-3.5-turbo-0125";
  int timeout_ms = 30000;
  int max_in_flight = 4;

  Config();

  /// Sets one flat dotted key from a JSON value. Accepts every key of
  /// config_keys() plus "matrix.<dataset>.<column>". Throws InvalidInput.
  void set(std::string_view key, const nlohmann::json& value);
  /// Same, parsing the value from flag text according to the key's kind.
  void set_text(std::string_view key, const std::string& text);

  /// Flat JSON object {"key": value}. Unknown keys are an error.
  static Config from_json(const nlohmann::json& j);
  static Config load(const std::filesystem::path& path);
  /// Reads {"datasets": {name: {column: bool}}} into `matrix`.
  void load_matrix(const std::filesystem::path& path);

  /// Whether a column applies to an episode of `dataset`.
  bool enabled(std::string_view dataset, std::string_view column) const;
  bool any_task_enabled(std::string_view dataset) const;

  std::vector<std::string> violations() const;
  nlohmann::ordered_json to_json() const;
};

}  // namespace embforge
