#include "embforge/annotate.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "embforge/errors.hpp"

namespace embforge::annotate {

using tokens::GoalModality;
using tokens::Sequence;

// ---------------------------------------------------------------------------
// Noun chunks

namespace {

struct Lexicon {
  std::unordered_map<std::string, WordTag> tags;
  /// Words that are adjectives before a noun and nouns otherwise ("orange").
  std::unordered_set<std::string> dual;
};

const Lexicon& lexicon() {
  static const Lexicon table = [] {
    Lexicon lx;
    auto& m = lx.tags;
    for (const char* w : {"the", "a", "an", "this", "that", "these", "those", "some", "any", "each", "every", "my",
                          "your", "its", "their", "our", "his", "her", "another", "all", "both"})
      m.emplace(w, WordTag::determiner);
    for (const char* w :
         {"red",    "green",  "blue",   "yellow", "orange", "purple", "pink",    "black",  "white",  "gray",
          "grey",   "brown",  "silver", "golden", "gold",   "big",    "small",   "large",  "little", "tiny",
          "tall",   "short",  "long",   "left",   "right",  "top",    "bottom",  "middle", "upper",  "lower",
          "front",  "back",   "rear",   "near",   "far",    "empty",  "full",    "clean",  "dirty",  "wooden",
          "metal",  "plastic", "glass", "paper",  "round",  "square", "rectangular", "striped", "dark", "light",
          "new",    "old",    "hot",    "cold",   "first",  "second", "third",   "last",   "other",  "same",
          "closed", "opened", "folded", "soft",   "hard",   "heavy",  "colorful", "central", "nearest", "farthest"})
      m.emplace(w, WordTag::adjective);
    for (const char* w :
         {"apple",   "banana",  "orange",  "lemon",   "grape",   "carrot",  "potato",  "tomato",  "corn",
          "eggplant", "pepper", "fruit",   "vegetable", "food",  "bread",   "chip",    "chocolate", "bar",
          "candy",   "can",     "coke",    "soda",    "bottle",  "cup",     "mug",     "glass",   "bowl",
          "plate",   "dish",    "pot",     "pan",     "lid",     "spoon",   "fork",    "knife",   "spatula",
          "sponge",  "towel",   "cloth",   "rag",     "napkin",  "block",   "cube",    "brick",   "ball",
          "toy",     "doll",    "box",     "bin",     "basket",  "tray",    "container", "jar",   "drawer",
          "cabinet", "cupboard", "door",   "handle",  "knob",    "switch",  "button",  "lever",   "light",
          "lamp",    "microwave", "oven",  "stove",   "fridge",  "refrigerator", "sink", "faucet", "tap",
          "table",   "counter", "countertop", "shelf", "desk",   "chair",   "floor",   "wall",    "window",
          "book",    "pen",     "pencil",  "marker",  "paper",   "notebook", "phone",  "remote",  "keyboard",
          "mouse",   "laptop",  "shoe",    "sock",    "shirt",   "hat",     "bag",     "cable",   "wire",
          "rope",    "stick",   "tool",    "hammer",  "screwdriver", "wrench", "scissors", "tape", "gripper",
          "robot",   "arm",     "hand",    "object",  "item",    "thing",   "stack",   "pile",    "tower",
          "side",    "edge",    "corner",  "center",  "top",     "bottom",  "slider",  "plug",    "socket",
          "kettle",  "teapot",  "bucket",  "cushion", "pillow",  "blanket", "cap",     "tissue",
          "star",    "triangle", "circle", "cylinder", "sphere", "pyramid", "shape",   "piece",   "coffee",
          "water",   "tea",     "milk",    "juice",   "egg",     "cucumber", "strawberry", "pear", "peach",
          "sauce",   "salt",    "sugar",   "cereal",  "noodle",  "pasta",   "rice",    "soup",    "cookie"})
      if (!m.emplace(w, WordTag::noun).second) lx.dual.emplace(w);
    return lx;
  }();
  return table;
}

struct Word {
  std::string lower;
  std::size_t start, end;
};

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '-'; }

std::vector<Word> split_words(std::string_view s) {
  std::vector<Word> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!word_char(s[i])) {
      ++i;
      continue;
    }
    const std::size_t b = i;
    while (i < s.size() && word_char(s[i])) ++i;
    std::string lower(s.substr(b, i - b));
    for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.push_back({std::move(lower), b, i});
  }
  return out;
}

}  // namespace

Tagger lexicon_tagger() {
  return [](std::span<const std::string> words) {
    const Lexicon& lex = lexicon();
    auto lookup = [&](const std::string& w) {
      if (auto it = lex.tags.find(w); it != lex.tags.end()) return it->second;
      for (std::size_t cut : {std::size_t{2}, std::size_t{1}}) {
        if (w.size() > cut + 1 && w.back() == 's') {
          auto base = lex.tags.find(w.substr(0, w.size() - cut));
          if (base != lex.tags.end() && (base->second == WordTag::noun || lex.dual.count(base->first)))
            return WordTag::noun;
        }
      }
      return WordTag::other;
    };
    std::vector<WordTag> tags;
    tags.reserve(words.size());
    for (const auto& w : words) tags.push_back(lookup(w));
    // A dual word heads the phrase unless a modifier or noun follows it.
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (!lex.dual.count(words[i])) continue;
      const bool followed = i + 1 < words.size() && (tags[i + 1] == WordTag::noun || tags[i + 1] == WordTag::adjective);
      tags[i] = followed ? WordTag::adjective : WordTag::noun;
    }
    return tags;
  };
}

std::vector<NounChunk> extract_noun_chunks(std::string_view instruction, const Tagger& tagger) {
  if (instruction.empty()) throw InvalidInput("extract_noun_chunks: empty instruction");
  const auto words = split_words(instruction);
  std::vector<std::string> lowered;
  lowered.reserve(words.size());
  for (const auto& w : words) lowered.push_back(w.lower);
  const auto tags = tagger(lowered);
  if (tags.size() != words.size()) throw InvalidInput("tagger returned a tag count different from the word count");

  std::vector<NounChunk> chunks;
  std::size_t i = 0;
  while (i < words.size()) {
    std::size_t j = i;
    if (tags[j] == WordTag::determiner) ++j;
    while (j < words.size() && tags[j] == WordTag::adjective) ++j;
    const std::size_t noun_start = j;
    while (j < words.size() && tags[j] == WordTag::noun) ++j;
    if (j == noun_start) {
      ++i;
      continue;
    }
    const std::size_t b = words[i].start, e = words[j - 1].end;
    chunks.push_back({std::string(instruction.substr(b, e - b)), b, e});
    i = j;
  }
  return chunks;
}

// ---------------------------------------------------------------------------
// Templates

namespace {

constexpr std::string_view kAnswerSep = " Answer: ";

// One line per task, as the question-template table lays them out.
constexpr Template kTemplates[] = {
    {TemplateId::verification,
     "The initial scene is <scene></scene> and the current scene is <scene></scene>. Instruction: INSTRUCTION. "
     "Finished? Answer: [yes/no]"},
    {TemplateId::task_caption,
     "The initial scene is <scene></scene> and the final scene is <scene></scene>. Describe the task. Answer: "
     "INSTRUCTION."},
    {TemplateId::localization, "The scene is <scene></scene>. Locate: OBJECT. Answer: LOCATION"},
    {TemplateId::dense_caption, "The scene is <scene></scene>. What is located at LOCATION? Answer: OBJECT"},
    {TemplateId::goal_generation,
     "The initial scene is <scene></scene>. Instruction: INSTRUCTION. Generate the goal image (or point cloud). "
     "Answer: <image> (<pcd>) INSTRUCTION </image> (</pcd>)"},
    {TemplateId::action_prediction,
     "<scene></scene>. INSTRUCTION. Predict {key/dense} actions. Answer: ACTION."},
};

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

}  // namespace

std::string_view template_name(TemplateId id) {
  switch (id) {
    case TemplateId::verification: return "verification";
    case TemplateId::task_caption: return "task_caption";
    case TemplateId::localization: return "localization";
    case TemplateId::dense_caption: return "dense_caption";
    case TemplateId::goal_generation: return "goal_generation";
    case TemplateId::action_prediction: return "action_prediction";
  }
  return "?";
}

std::string_view Template::prompt_pattern() const { return pattern.substr(0, pattern.find(kAnswerSep)); }

std::string_view Template::answer_pattern() const {
  return pattern.substr(pattern.find(kAnswerSep) + kAnswerSep.size());
}

const Template& get_template(TemplateId id) {
  for (const auto& t : kTemplates)
    if (t.id == id) return t;
  throw InvalidInput("unknown template");
}

std::span<const Template> all_templates() { return kTemplates; }

std::string fill_template(std::string_view pattern, const SlotValues& slots, const TemplateChoice& choice) {
  std::string resolved(pattern);
  const bool image = choice.modality == GoalModality::image;
  replace_all(resolved, "[yes/no]", choice.finished ? "yes" : "no");
  replace_all(resolved, "{key/dense}", choice.key_actions ? "key" : "dense");
  replace_all(resolved, "image (or point cloud)", image ? "image" : "point cloud");
  replace_all(resolved, "<image> (<pcd>)", image ? "<image>" : "<pcd>");
  replace_all(resolved, "</image> (</pcd>)", image ? "</image>" : "</pcd>");

  const std::pair<std::string_view, const std::string*> table[] = {{"INSTRUCTION", &slots.instruction},
                                                                   {"OBJECT", &slots.object},
                                                                   {"LOCATION", &slots.location},
                                                                   {"ACTION", &slots.action}};
  std::string out;
  std::size_t i = 0;
  while (i < resolved.size()) {
    bool hit = false;
    for (const auto& [name, value] : table) {
      if (resolved.compare(i, name.size(), name) == 0) {
        out += *value;
        i += name.size();
        hit = true;
        break;
      }
    }
    if (!hit) out.push_back(resolved[i++]);
  }
  return out;
}

std::string normalize_instruction(std::string_view instruction) {
  std::size_t b = 0, e = instruction.size();
  while (b < e && std::isspace(static_cast<unsigned char>(instruction[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(instruction[e - 1]))) --e;
  if (e > b && instruction[e - 1] == '.') --e;
  return std::string(instruction.substr(b, e - b));
}

// ---------------------------------------------------------------------------
// Builders

namespace {

std::string sanitize_id(std::string_view id) {
  std::string out;
  for (char c : id) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '_');
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

std::string instruction_slot(const Episode& e) {
  std::string s = normalize_instruction(e.instruction);
  if (s.empty()) throw InvalidInput("episode has no instruction");
  for (const auto& p : tokens::lex(s))
    if (std::holds_alternative<tokens::TokenId>(p)) throw InvalidInput("instruction contains a reserved token");
  return s;
}

Sequence parse_filled(const std::string& s) {
  try {
    return tokens::parse(s);
  } catch (const ParseError& err) {
    throw InvalidInput(std::string("filled template does not parse: ") + err.what());
  }
}

std::string render_bins(const tokens::BoxBins& bins) { return tokens::render({tokens::LocGroup{bins}}); }

SampleRecord base_record(const BuildContext& ctx, TaskType task, std::size_t seq, std::string template_id) {
  SampleRecord r;
  r.task_type = task;
  r.episode_id = ctx.episode.id;
  r.builder_id = make_builder_id(task, seq);
  r.provenance.template_id = std::move(template_id);
  r.provenance.seed = ctx.seed;
  r.provenance.dataset = ctx.episode.dataset;
  return r;
}

void set_from_template(SampleRecord& r, TemplateId id, const SlotValues& prompt_slots, const SlotValues& answer_slots,
                       const TemplateChoice& choice = {}) {
  const Template& t = get_template(id);
  r.prompt = parse_filled(fill_template(t.prompt_pattern(), prompt_slots, choice));
  r.answer = parse_filled(fill_template(t.answer_pattern(), answer_slots, choice));
}

std::size_t last_frame(const Episode& e) {
  if (e.frames.empty()) throw InvalidInput("episode has no frames");
  return e.frames.size() - 1;
}

}  // namespace

AssetLayout AssetLayout::for_episode(std::string_view episode_id, std::string_view cloud_extension) {
  return AssetLayout{"assets/" + sanitize_id(episode_id), std::string(cloud_extension)};
}

std::string AssetLayout::scene_cloud(std::size_t frame) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "/scene_%04zu.", frame);
  return episode_dir + buf + cloud_extension;
}

std::string AssetLayout::goal_image() const { return episode_dir + "/goal_rgb.png"; }
std::string AssetLayout::goal_depth() const { return episode_dir + "/goal_depth.f32"; }

std::string make_builder_id(TaskType task, std::size_t seq) {
  const auto ordinal = std::find(kAllTaskTypes.begin(), kAllTaskTypes.end(), task) - kAllTaskTypes.begin();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%02d-%s-%04zu", static_cast<int>(ordinal), std::string(task_name(task)).c_str(), seq);
  return buf;
}

SampleRecord build_localization_sample(const BuildContext& ctx, const GroundedObject& obj, std::size_t det_index) {
  SampleRecord r = base_record(ctx, TaskType::localization, det_index, "localization");
  int clamped = 0;
  const auto bins = tokens::bbox_bins(obj.box, ctx.episode.bounds, &clamped);
  if (clamped) r.flags.emplace_back("clamped");
  SlotValues slots;
  slots.object = obj.label;
  slots.location = render_bins(bins);
  set_from_template(r, TemplateId::localization, slots, slots);
  r.assets.push_back({"scene", ctx.layout.scene_cloud(obj.frame)});
  return r;
}

SampleRecord build_dense_caption_sample(const BuildContext& ctx, const GroundedObject& obj, std::size_t det_index) {
  SampleRecord r = base_record(ctx, TaskType::dense_caption, det_index, "dense_caption");
  int clamped = 0;
  const auto bins = tokens::bbox_bins(obj.box, ctx.episode.bounds, &clamped);
  if (clamped) r.flags.emplace_back("clamped");
  SlotValues slots;
  slots.object = obj.label;
  slots.location = render_bins(bins);
  set_from_template(r, TemplateId::dense_caption, slots, slots);
  r.assets.push_back({"scene", ctx.layout.scene_cloud(obj.frame)});
  return r;
}

SampleRecord build_task_caption_sample(const BuildContext& ctx) {
  const Episode& e = ctx.episode;
  if (e.frames.size() < 2) throw InvalidInput("task caption needs at least 2 frames");
  SampleRecord r = base_record(ctx, TaskType::task_caption, 0, "task_caption");
  SlotValues slots;
  slots.instruction = instruction_slot(e);
  set_from_template(r, TemplateId::task_caption, slots, slots);
  r.assets.push_back({"initial_scene", ctx.layout.scene_cloud(0)});
  r.assets.push_back({"final_scene", ctx.layout.scene_cloud(last_frame(e))});
  return r;
}

SampleRecord build_verification_sample(const BuildContext& ctx, std::size_t t, std::size_t k) {
  const Episode& e = ctx.episode;
  if (t >= e.frames.size()) throw InvalidInput("verification frame index out of range");
  SampleRecord r = base_record(ctx, TaskType::verification, t, "verification");
  SlotValues slots;
  slots.instruction = instruction_slot(e);
  TemplateChoice choice;
  choice.finished = t + k >= e.frames.size();
  set_from_template(r, TemplateId::verification, slots, slots, choice);
  r.assets.push_back({"initial_scene", ctx.layout.scene_cloud(0)});
  r.assets.push_back({"current_scene", ctx.layout.scene_cloud(t)});
  return r;
}

std::vector<std::size_t> verification_negatives(std::size_t frame_count, std::size_t k, std::size_t count,
                                                std::uint64_t seed) {
  std::vector<std::size_t> pool;
  const std::size_t first_positive = frame_count > k ? frame_count - k : 0;
  for (std::size_t t = 0; t < frame_count / 2 && t < first_positive; ++t) pool.push_back(t);
  // Partial Fisher-Yates on raw engine output; distributions are not
  // portable across standard libraries.
  std::mt19937_64 rng(seed);
  const std::size_t take = std::min(count, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::optional<Sequence> ground_instruction(std::string_view instruction, const std::string& label,
                                           const tokens::BoxBins& box, const Tagger& tagger) {
  if (instruction.empty() || label.empty()) return std::nullopt;
  std::string lower_label;
  for (char c : label) lower_label.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  const auto label_words = split_words(lower_label);
  if (label_words.empty()) return std::nullopt;

  const auto chunks = extract_noun_chunks(instruction, tagger);
  const auto& lex = lexicon();

  struct Core {
    std::size_t start, end;
    int score;
  };
  std::optional<Core> best;
  for (const auto& c : chunks) {
    auto words = split_words(c.text);
    std::size_t first = 0;
    // Leave a leading determiner outside the object span.
    if (!words.empty()) {
      auto it = lex.tags.find(words[0].lower);
      if (words.size() > 1 && it != lex.tags.end() && it->second == WordTag::determiner) first = 1;
    }
    std::vector<std::string> core_words;
    for (std::size_t i = first; i < words.size(); ++i) core_words.push_back(words[i].lower);
    int score = 0;
    const bool exact = core_words.size() == label_words.size() &&
                       std::equal(core_words.begin(), core_words.end(), label_words.begin(),
                                  [](const std::string& a, const Word& b) { return a == b.lower; });
    if (exact) score = 3;
    else if (core_words.back() == label_words.back().lower) score = 2;
    if (score == 0) continue;
    if (!best || score > best->score) best = Core{c.start + words[first].start, c.start + words.back().end, score};
  }
  if (!best) return std::nullopt;

  Sequence seq;
  if (best->start > 0) seq.emplace_back(tokens::Text{std::string(instruction.substr(0, best->start))});
  seq.emplace_back(tokens::ObjSpan{std::string(instruction.substr(best->start, best->end - best->start)), box});
  if (best->end < instruction.size()) seq.emplace_back(tokens::Text{std::string(instruction.substr(best->end))});
  return seq;
}

SampleRecord build_goal_generation_sample(const BuildContext& ctx, GoalModality modality,
                                          const std::optional<GroundedObject>& manipulated) {
  const Episode& e = ctx.episode;
  const bool image = modality == GoalModality::image;
  SampleRecord r = base_record(ctx, TaskType::goal_generation, image ? 0 : 1, "goal_generation");
  SlotValues prompt_slots;
  prompt_slots.instruction = instruction_slot(e);
  SlotValues answer_slots = prompt_slots;

  std::optional<Sequence> grounded;
  if (manipulated) {
    int clamped = 0;
    const auto bins = tokens::bbox_bins(manipulated->box, e.bounds, &clamped);
    if (clamped) r.flags.emplace_back("clamped");
    grounded = ground_instruction(prompt_slots.instruction, manipulated->label, bins);
  }
  if (grounded) answer_slots.instruction = tokens::render(*grounded);
  else r.flags.emplace_back("no-object");

  TemplateChoice choice;
  choice.modality = modality;
  set_from_template(r, TemplateId::goal_generation, prompt_slots, answer_slots, choice);

  const std::size_t last = last_frame(e);
  r.assets.push_back({"initial_scene", ctx.layout.scene_cloud(0)});
  if (image) {
    r.assets.push_back({"goal_image", ctx.layout.goal_image()});
    r.assets.push_back({"goal_depth", ctx.layout.goal_depth()});
  } else {
    r.assets.push_back({"goal_pcd", ctx.layout.scene_cloud(last)});
  }
  return r;
}

std::vector<std::size_t> keyframe_select(std::span<const ActionStep> actions, double pause_speed) {
  if (actions.empty()) throw InvalidInput("keyframe_select: no actions");
  const std::size_t n = actions.size();
  std::vector<std::size_t> keys{0, n - 1};
  std::vector<double> step(n, 0.0);
  for (std::size_t t = 1; t < n; ++t) {
    step[t] = (actions[t].position - actions[t - 1].position).norm();
    if (actions[t].gripper != actions[t - 1].gripper) keys.push_back(t);
  }
  for (std::size_t t = 2; t + 1 < n; ++t) {
    if (step[t] < pause_speed && step[t] < step[t - 1] && step[t] <= step[t + 1]) keys.push_back(t);
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

SampleRecord build_action_prediction_sample(const BuildContext& ctx, ActionMode mode, double pause_speed) {
  const Episode& e = ctx.episode;
  if (e.actions.empty()) throw InvalidInput("action prediction needs at least one action");
  const bool key = mode == ActionMode::key;
  SampleRecord r = base_record(ctx, TaskType::action_prediction, key ? 1 : 0, "action_prediction");

  std::vector<ActionStep> steps;
  if (key) {
    for (std::size_t t : keyframe_select(e.actions, pause_speed)) steps.push_back(e.actions[t]);
  } else {
    steps = e.actions;
  }
  const auto encoded = tokens::encode_action_seq(steps, e.bounds);
  if (encoded.clamped) r.flags.emplace_back("clamped");

  SlotValues slots;
  slots.instruction = instruction_slot(e);
  std::vector<tokens::Piece> pieces(encoded.tokens.begin(), encoded.tokens.end());
  slots.action = tokens::join(pieces);
  TemplateChoice choice;
  choice.key_actions = key;
  set_from_template(r, TemplateId::action_prediction, slots, slots, choice);
  r.assets.push_back({"scene", ctx.layout.scene_cloud(0)});
  return r;
}

QaIngestResult ingest_external_qa(std::span<const ExternalQa> records) {
  QaIngestResult out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ExternalQa& q = records[i];
    const std::string where = "record " + std::to_string(i) + ": ";
    if (!q.question || q.question->empty()) {
      out.skipped.push_back(where + "missing question");
      continue;
    }
    if (!q.answer || q.answer->empty()) {
      out.skipped.push_back(where + "missing answer");
      continue;
    }
    SampleRecord r;
    r.task_type = TaskType::embodied_qa;
    r.episode_id = q.episode_id;
    r.builder_id = make_builder_id(TaskType::embodied_qa, i);
    r.provenance.template_id = "external_qa";
    r.provenance.dataset = q.dataset;
    r.assets = q.assets;
    try {
      r.prompt = tokens::parse(*q.question);
      r.answer = tokens::parse(*q.answer);
    } catch (const ParseError& err) {
      out.skipped.push_back(where + err.what());
      continue;
    }
    out.samples.push_back(std::move(r));
  }
  return out;
}

}  // namespace embforge::annotate
