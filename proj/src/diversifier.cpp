#include "embforge/diversifier.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "embforge/errors.hpp"
#include "json.hpp"

namespace embforge::diversify {

using nlohmann::ordered_json;
using tokens::Sequence;

namespace {

constexpr const char* kRewriteSystem =
    "You rewrite training samples for an embodied assistant that reasons about 3D scenes and robot actions. "
    "Keep every token written in angle brackets exactly as given: same tokens, same count, same order. "
    "Keep object names and yes/no labels unchanged. Vary the wording of everything else. "
    "Reply with a JSON object with the keys \"prompt\" and \"answer\".";

constexpr const char* kWhatifSystem =
    "You write question-answer pairs for an embodied assistant that reasons about 3D scenes and robot actions. "
    "Given an episode summary and a sequence of action tokens, ask what would happen if the robot executed "
    "exactly those actions, and answer with the resulting state of the scene. Copy the action tokens verbatim "
    "into the question. Reply with a JSON object with the keys \"prompt\" and \"answer\".";

std::string facts_text(const EpisodeFacts& f) {
  std::ostringstream os;
  os << "Instruction: " << f.instruction << "\n";
  os << "Frames: " << f.frame_count << ", duration: " << f.duration_s << " s\n";
  for (const auto& o : f.objects) os << "Object: " << o.label << " at " << o.location << "\n";
  if (!f.action_tokens.empty()) os << "Actions: " << f.action_tokens << "\n";
  return os.str();
}

std::string user_message(const DiversifierRequest& r) {
  std::string msg = "Task: " + std::string(task_name(r.task)) + "\n" + facts_text(r.facts);
  if (!r.prompt.empty()) msg += "Prompt: " + r.prompt + "\nAnswer: " + r.answer + "\n";
  return msg;
}

std::optional<DiversifierReply> reply_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object() || !j.contains("prompt") || !j.contains("answer") || !j["prompt"].is_string() ||
        !j["answer"].is_string())
      return std::nullopt;
    return DiversifierReply{j["prompt"].get<std::string>(), j["answer"].get<std::string>()};
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

std::string demo_reply(const char* prompt, const char* answer) {
  return ordered_json{{"prompt", prompt}, {"answer", answer}}.dump();
}

struct PhraseRule {
  std::string_view phrase;
  std::vector<std::string_view> alternatives;
};

const std::vector<PhraseRule>& phrase_rules() {
  static const std::vector<PhraseRule> rules = {
      {"The initial scene is ", {"Initially the scene is ", "At the start, the scene is ", "The starting scene is "}},
      {" and the current scene is ", {" and now the scene is ", " and the present scene is "}},
      {" and the final scene is ", {" and at the end the scene is ", " and the resulting scene is "}},
      {"The scene is ", {"Here is the scene ", "Consider the scene ", "Given the scene "}},
      {". Locate: ", {". Find: ", ". Point out: ", ". Give the box of: "}},
      {"What is located at ", {"What object is at ", "What can be found at ", "Name the object at "}},
      {"Describe the task.", {"What task was performed?", "Summarize the task.", "What did the robot do?"}},
      {"Finished?", {"Is the task complete?", "Is it done?", "Has the instruction been completed?"}},
      {"Instruction: ", {"Command: ", "Task: ", "Goal: "}},
      {"Generate the goal image.", {"Show the goal image.", "Produce the goal image.", "Imagine the goal image."}},
      {"Generate the goal point cloud.",
       {"Show the goal point cloud.", "Produce the goal point cloud.", "Imagine the goal point cloud."}},
      {"Predict dense actions.", {"Give the dense actions.", "Output every action step."}},
      {"Predict key actions.", {"Give the key actions.", "Output the keyframe actions."}},
  };
  return rules;
}

bool paraphrase_text(std::string& text, std::mt19937_64& rng) {
  bool changed = false;
  for (const auto& rule : phrase_rules()) {
    const auto pos = text.find(rule.phrase);
    if (pos == std::string::npos) continue;
    const auto& alt = rule.alternatives[rng() % rule.alternatives.size()];
    text.replace(pos, rule.phrase.size(), alt);
    changed = true;
  }
  return changed;
}

bool paraphrase_sequence(Sequence& seq, std::mt19937_64& rng) {
  bool changed = false;
  for (auto& node : seq) {
    if (auto* t = std::get_if<tokens::Text>(&node.value)) changed = paraphrase_text(t->text, rng) || changed;
  }
  return changed;
}

std::optional<Sequence> try_parse(const std::string& s) {
  try {
    Sequence seq = tokens::parse(s);
    if (!tokens::sequence_violations(seq).empty()) return std::nullopt;
    return seq;
  } catch (const ParseError&) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<std::string> DiversifierRequest::violations() const {
  std::vector<std::string> out;
  if (demonstrations.size() < 2 || demonstrations.size() > 3) out.emplace_back("demonstrations: need 2 or 3");
  if (system_prompt.empty()) out.emplace_back("system_prompt: empty");
  return out;
}

std::string DiversifierRequest::to_json() const {
  ordered_json demos = ordered_json::array();
  for (const auto& d : demonstrations) demos.push_back({{"user", d.user}, {"assistant", d.assistant}});
  ordered_json objects = ordered_json::array();
  for (const auto& o : facts.objects) objects.push_back({{"label", o.label}, {"location", o.location}});
  ordered_json j = {{"system_prompt", system_prompt},
                    {"demonstrations", demos},
                    {"facts",
                     {{"instruction", facts.instruction},
                      {"objects", objects},
                      {"duration_s", facts.duration_s},
                      {"frame_count", facts.frame_count},
                      {"action_tokens", facts.action_tokens}}},
                    {"task", task_name(task)},
                    {"seed", seed},
                    {"prompt", prompt},
                    {"answer", answer}};
  return j.dump();
}

std::string DiversifierRequest::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json())));
  return buf;
}

std::optional<DiversifierReply> ReplayClient::complete(const DiversifierRequest& request) {
  std::ifstream in(dir_ / (request.hash() + ".json"));
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  return reply_from_json(ss.str());
}

void ReplayClient::record(const DiversifierRequest& request, const DiversifierReply& reply) const {
  std::filesystem::create_directories(dir_);
  const auto path = dir_ / (request.hash() + ".json");
  std::ofstream out(path);
  if (!out) throw IoError(path.string(), "cannot write replay file");
  out << ordered_json{{"prompt", reply.prompt}, {"answer", reply.answer}}.dump(2) << "\n";
}

std::string HttpClient::chat_body(const DiversifierRequest& r, const std::string& model) {
  ordered_json messages = ordered_json::array();
  messages.push_back({{"role", "system"}, {"content", r.system_prompt}});
  for (const auto& d : r.demonstrations) {
    messages.push_back({{"role", "user"}, {"content", d.user}});
    messages.push_back({{"role", "assistant"}, {"content", d.assistant}});
  }
  messages.push_back({{"role", "user"}, {"content", user_message(r)}});
  ordered_json body = {{"model", model},
                       {"messages", messages},
                       {"seed", r.seed},
                       {"response_format", {{"type", "json_object"}}}};
  return body.dump();
}

std::optional<DiversifierReply> HttpClient::parse_chat_response(const std::string& body) {
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) return std::nullopt;
    return reply_from_json(content.get<std::string>());
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

std::vector<Demonstration> default_demonstrations(TaskType task) {
  switch (task) {
    case TaskType::whatif_qa:
      return {
          {"Task: whatif_qa\nInstruction: open the top drawer\nFrames: 40, duration: 4 s\n"
           "Actions: <aloc120><aloc88><aloc40><arot128><arot128><arot64><gripper1><ACT_SEP>"
           "<aloc120><aloc60><aloc40><arot128><arot128><arot64><gripper1>\n",
           demo_reply("What would happen if the robot carried out <aloc120><aloc88><aloc40><arot128><arot128><arot64>"
                      "<gripper1><ACT_SEP><aloc120><aloc60><aloc40><arot128><arot128><arot64><gripper1>?",
                      "The gripper would pull the handle towards the robot and the top drawer would slide open.")},
          {"Task: whatif_qa\nInstruction: put the banana in the bowl\nFrames: 25, duration: 2.5 s\n"
           "Object: banana at <loc40><loc90><loc10><loc70><loc120><loc30>\n"
           "Actions: <aloc55><aloc105><aloc20><arot128><arot128><arot128><gripper0>\n",
           demo_reply("If the robot executes <aloc55><aloc105><aloc20><arot128><arot128><arot128><gripper0>, "
                      "what happens next?",
                      "The gripper closes around the banana and lifts it off the table; it is not in the bowl yet.")},
      };
    case TaskType::localization:
    case TaskType::dense_caption:
      return {
          {"Task: localization\nPrompt: The scene is <scene></scene>. Locate: the red cup.\n"
           "Answer: <loc10><loc20><loc30><loc40><loc50><loc60>\n",
           demo_reply("Here is a scene: <scene></scene>. Where exactly is the red cup?",
                      "<loc10><loc20><loc30><loc40><loc50><loc60>")},
          {"Task: dense_caption\nPrompt: The scene is <scene></scene>. What is located at "
           "<loc100><loc20><loc0><loc140><loc60><loc30>?\nAnswer: sponge\n",
           demo_reply("Looking at <scene></scene>, which object occupies <loc100><loc20><loc0><loc140><loc60><loc30>?",
                      "sponge")},
      };
    default:
      return {
          {"Task: task_caption\nPrompt: The initial scene is <scene></scene> and the final scene is "
           "<scene></scene>. Describe the task.\nAnswer: move the can to the left.\n",
           demo_reply("You see <scene></scene> at the start and <scene></scene> at the end. What was the robot asked "
                      "to do?",
                      "move the can to the left.")},
          {"Task: action_prediction\nPrompt: <scene></scene>. close the microwave. Predict key actions.\n"
           "Answer: <aloc3><aloc4><aloc5><arot128><arot128><arot128><gripper0>.\n",
           demo_reply("Scene: <scene></scene>. The goal is to close the microwave. Which key actions should the "
                      "robot take?",
                      "<aloc3><aloc4><aloc5><arot128><arot128><arot128><gripper0>.")},
      };
  }
}

EpisodeFacts episode_facts(const Episode& e, std::span<const annotate::GroundedObject> objects) {
  EpisodeFacts f;
  f.instruction = annotate::normalize_instruction(e.instruction);
  f.frame_count = e.frames.size();
  if (e.frames.size() >= 2) f.duration_s = e.frames.back().timestamp - e.frames.front().timestamp;
  for (const auto& o : objects) {
    f.objects.push_back({o.label, tokens::render({tokens::LocGroup{tokens::bbox_bins(o.box, e.bounds)}})});
  }
  return f;
}

DiversifierRequest rewrite_request(const SampleRecord& sample, const EpisodeFacts& facts, std::uint64_t seed) {
  DiversifierRequest r;
  r.system_prompt = kRewriteSystem;
  r.demonstrations = default_demonstrations(sample.task_type);
  r.facts = facts;
  r.task = sample.task_type;
  r.seed = seed;
  r.prompt = tokens::render(sample.prompt);
  r.answer = tokens::render(sample.answer);
  return r;
}

DiversifierRequest build_whatif_request(const Episode& e, std::span<const ActionStep> steps,
                                        std::span<const annotate::GroundedObject> objects, std::uint64_t seed) {
  if (steps.empty()) throw InvalidInput("what-if request needs at least one action");
  DiversifierRequest r;
  r.system_prompt = kWhatifSystem;
  r.demonstrations = default_demonstrations(TaskType::whatif_qa);
  r.facts = episode_facts(e, objects);
  const auto encoded = tokens::encode_action_seq(steps, e.bounds);
  r.facts.action_tokens = tokens::join({encoded.tokens.begin(), encoded.tokens.end()});
  r.task = TaskType::whatif_qa;
  r.seed = seed;
  return r;
}

SampleRecord whatif_sample(const annotate::BuildContext& ctx, const DiversifierRequest& request,
                           DiversifierClient* client) {
  SampleRecord r;
  r.task_type = TaskType::whatif_qa;
  r.episode_id = ctx.episode.id;
  r.builder_id = annotate::make_builder_id(TaskType::whatif_qa, 0);
  r.provenance.seed = request.seed;
  r.provenance.dataset = ctx.episode.dataset;
  r.assets.push_back({"initial_scene", ctx.layout.scene_cloud(0)});

  const Sequence actions = tokens::parse(request.facts.action_tokens);
  if (client) {
    if (auto reply = client->complete(request)) {
      auto prompt = try_parse(reply->prompt);
      auto answer = try_parse(reply->answer);
      if (prompt && answer) {
        auto got = tokens::vocab_tokens(*prompt);
        const auto more = tokens::vocab_tokens(*answer);
        got.insert(got.end(), more.begin(), more.end());
        auto want = tokens::vocab_tokens(actions);
        std::sort(got.begin(), got.end());
        std::sort(want.begin(), want.end());
        if (got == want) {
          r.prompt = std::move(*prompt);
          r.answer = std::move(*answer);
          r.provenance.template_id = "diversified";
          return r;
        }
      }
    }
    r.flags.emplace_back("diversifier-fallback");
  }
  r.provenance.template_id = "whatif_offline";
  r.prompt = tokens::parse("What will happen if the robot executes " + request.facts.action_tokens + "?");
  r.answer = tokens::parse("After these actions, the robot will have carried out the task: " +
                           request.facts.instruction + ".");
  return r;
}

SampleRecord offline_paraphrase(const SampleRecord& sample, std::uint64_t seed) {
  SampleRecord out = sample;
  std::mt19937_64 rng(seed ^ fnv1a64(sample.key()));
  const bool changed = paraphrase_sequence(out.prompt, rng);
  if (changed) {
    out.provenance.template_id = "diversified";
    out.provenance.seed = seed;
  }
  return out;
}

SampleRecord diversify(const SampleRecord& sample, DiversifierClient* client, std::uint64_t seed,
                       const EpisodeFacts& facts) {
  if (!client) return offline_paraphrase(sample, seed);
  const auto request = rewrite_request(sample, facts, seed);
  SampleRecord out = sample;
  if (auto reply = client->complete(request)) {
    auto prompt = try_parse(reply->prompt);
    auto answer = try_parse(reply->answer);
    if (prompt && answer && same_token_multiset(*prompt, sample.prompt) &&
        same_token_multiset(*answer, sample.answer)) {
      out.prompt = std::move(*prompt);
      out.answer = std::move(*answer);
      out.provenance.template_id = "diversified";
      out.provenance.seed = seed;
      return out;
    }
  }
  out.flags.emplace_back("undiversified");
  return out;
}

bool same_token_multiset(const Sequence& a, const Sequence& b) {
  auto ta = tokens::vocab_tokens(a);
  auto tb = tokens::vocab_tokens(b);
  std::sort(ta.begin(), ta.end());
  std::sort(tb.begin(), tb.end());
  return ta == tb;
}

}  // namespace embforge::diversify
