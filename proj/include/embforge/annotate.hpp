#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embforge/core.hpp"
#include "embforge/sample.hpp"

namespace embforge::annotate {

// ---------------------------------------------------------------------------
// Noun chunks

struct NounChunk {
  std::string text;
  /// [start, end) byte offsets into the instruction.
  std::size_t start = 0, end = 0;
  bool operator==(const NounChunk&) const = default;
};

enum class WordTag { determiner, adjective, noun, other };

/// Maps lowercased words to tags. Replaceable by an external tagger.
using Tagger = std::function<std::vector<WordTag>(std::span<const std::string> lowercase_words)>;

/// Tagger backed by the built-in lexicon. Unknown words are `other`; plural
/// nouns are recognized by stripping a trailing "s"/"es".
Tagger lexicon_tagger();

/// Maximal runs of (determiner? adjective* noun+). Throws InvalidInput on an
/// empty instruction.
std::vector<NounChunk> extract_noun_chunks(std::string_view instruction, const Tagger& tagger = lexicon_tagger());

// ---------------------------------------------------------------------------
// Templates

enum class TemplateId { verification, task_caption, localization, dense_caption, goal_generation, action_prediction };

std::string_view template_name(TemplateId id);

/// Question template with INSTRUCTION / OBJECT / LOCATION / ACTION slots.
/// `pattern` is the full template line; prompt and answer are the parts
/// before and after " Answer: ".
struct Template {
  TemplateId id;
  std::string_view pattern;
  std::string_view prompt_pattern() const;
  std::string_view answer_pattern() const;
};

const Template& get_template(TemplateId id);
std::span<const Template> all_templates();

struct SlotValues {
  std::string instruction;
  std::string object;
  std::string location;
  std::string action;
};

/// Which side of each "a/b" alternative in a pattern to keep.
struct TemplateChoice {
  bool finished = false;                                          // [yes/no]
  bool key_actions = false;                                       // {key/dense}
  tokens::GoalModality modality = tokens::GoalModality::image;   // image (or point cloud)
};

/// Resolves alternatives, then substitutes slots in a single left-to-right pass.
std::string fill_template(std::string_view pattern, const SlotValues& slots, const TemplateChoice& choice = {});

/// Instruction text as it goes into INSTRUCTION: trimmed, one trailing period dropped.
std::string normalize_instruction(std::string_view instruction);

// ---------------------------------------------------------------------------
// Sample builders

/// Where exported assets of an episode live, relative to the dataset root.
struct AssetLayout {
  std::string episode_dir;  // "assets/<episode id>"
  std::string cloud_extension = "pc3d";

  static AssetLayout for_episode(std::string_view episode_id, std::string_view cloud_extension = "pc3d");
  std::string scene_cloud(std::size_t frame) const;
  std::string goal_image() const;
  std::string goal_depth() const;
};

/// "<task ordinal>-<task name>-<seq>", zero padded so it sorts by builder.
std::string make_builder_id(TaskType task, std::size_t seq);

struct BuildContext {
  const Episode& episode;
  AssetLayout layout;
  std::uint64_t seed = 0;
};

/// Localization answer boxes and dense-caption prompts come from this.
struct GroundedObject {
  std::string label;
  Aabb3 box;
  std::size_t frame = 0;
};

SampleRecord build_localization_sample(const BuildContext& ctx, const GroundedObject& obj, std::size_t det_index);
SampleRecord build_dense_caption_sample(const BuildContext& ctx, const GroundedObject& obj, std::size_t det_index);
SampleRecord build_task_caption_sample(const BuildContext& ctx);

/// "yes" iff t is one of the last `k` frames.
SampleRecord build_verification_sample(const BuildContext& ctx, std::size_t t, std::size_t k = 1);

/// Negative frames for verification: `count` distinct indices drawn from the
/// first half of the episode, seeded. Returns fewer when the half is small.
std::vector<std::size_t> verification_negatives(std::size_t frame_count, std::size_t k, std::size_t count,
                                                std::uint64_t seed);

/// Instruction with the manipulated object's noun wrapped in an object span.
/// Returns nullopt when no noun chunk matches the label.
std::optional<tokens::Sequence> ground_instruction(std::string_view instruction, const std::string& label,
                                                   const tokens::BoxBins& box, const Tagger& tagger = lexicon_tagger());

SampleRecord build_goal_generation_sample(const BuildContext& ctx, tokens::GoalModality modality,
                                          const std::optional<GroundedObject>& manipulated);

inline constexpr double kDefaultPauseSpeed = 1e-3;

/// Endpoints, gripper toggles, and pauses: t where the step length
/// |p[t] - p[t-1]| is below `pause_speed` and is a local minimum (strictly
/// below the previous step, not above the next).
std::vector<std::size_t> keyframe_select(std::span<const ActionStep> actions, double pause_speed = kDefaultPauseSpeed);

enum class ActionMode { key, dense };

SampleRecord build_action_prediction_sample(const BuildContext& ctx, ActionMode mode,
                                            double pause_speed = kDefaultPauseSpeed);

// ---------------------------------------------------------------------------
// Externally sourced QA

struct ExternalQa {
  std::optional<std::string> question;
  std::optional<std::string> answer;
  std::vector<AssetRef> assets;
  std::string episode_id;
  std::string dataset;
};

struct QaIngestResult {
  std::vector<SampleRecord> samples;
  /// "record <i>: <reason>" per skipped record.
  std::vector<std::string> skipped;
};

QaIngestResult ingest_external_qa(std::span<const ExternalQa> records);

}  // namespace embforge::annotate
