#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "embforge/sequence.hpp"

namespace embforge {

enum class TaskType {
  embodied_qa,
  task_caption,
  whatif_qa,
  dense_caption,
  localization,
  verification,
  goal_generation,
  action_prediction,
};

inline constexpr std::array<TaskType, 8> kAllTaskTypes = {
    TaskType::embodied_qa,  TaskType::task_caption, TaskType::whatif_qa,       TaskType::dense_caption,
    TaskType::localization, TaskType::verification, TaskType::goal_generation, TaskType::action_prediction};

std::string_view task_name(TaskType t);
std::optional<TaskType> task_from_name(std::string_view name);

struct AssetRef {
  std::string role;
  /// Relative to the dataset root once exported.
  std::string path;
  bool operator==(const AssetRef&) const = default;
};

struct Provenance {
  /// Template id, "diversified", or the untemplated source ("external_qa", "whatif_offline", ...).
  std::string template_id;
  std::uint64_t seed = 0;
  std::string dataset;
  bool operator==(const Provenance&) const = default;
};

struct SampleRecord {
  TaskType task_type = TaskType::task_caption;
  tokens::Sequence prompt;
  tokens::Sequence answer;
  std::vector<AssetRef> assets;
  std::string episode_id;
  /// Orders samples within an episode; unique per episode.
  std::string builder_id;
  Provenance provenance;
  /// Non-fatal conditions raised while building ("no-object", "clamped", ...).
  std::vector<std::string> flags;

  std::string key() const { return episode_id + "/" + builder_id; }
};

}  // namespace embforge
