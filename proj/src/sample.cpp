#include "embforge/sample.hpp"

namespace embforge {

std::string_view task_name(TaskType t) {
  switch (t) {
    case TaskType::embodied_qa: return "embodied_qa";
    case TaskType::task_caption: return "task_caption";
    case TaskType::whatif_qa: return "whatif_qa";
    case TaskType::dense_caption: return "dense_caption";
    case TaskType::localization: return "localization";
    case TaskType::verification: return "verification";
    case TaskType::goal_generation: return "goal_generation";
    case TaskType::action_prediction: return "action_prediction";
  }
  return "?";
}

std::optional<TaskType> task_from_name(std::string_view name) {
  for (TaskType t : kAllTaskTypes)
    if (task_name(t) == name) return t;
  return std::nullopt;
}

}  // namespace embforge
