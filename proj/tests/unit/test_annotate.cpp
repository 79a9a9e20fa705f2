#include <algorithm>
#include <set>

#include "doctest.h"
#include "embforge/annotate.hpp"
#include "embforge/errors.hpp"
#include "episodes.hpp"

using namespace embforge;
using namespace embforge::annotate;
namespace tk = embforge::tokens;

namespace {

std::vector<std::string> chunk_texts(std::string_view s) {
  std::vector<std::string> out;
  for (const auto& c : extract_noun_chunks(s)) out.push_back(c.text);
  return out;
}

std::string full_text(const SampleRecord& r) { return tk::render(r.prompt) + " Answer: " + tk::render(r.answer); }

}  // namespace

TEST_CASE("noun chunks are determiner? adjective* noun+") {
  CHECK(chunk_texts("pick up the red apple and put it in the bowl") ==
        std::vector<std::string>{"the red apple", "the bowl"});
  CHECK(chunk_texts("move the orange to the left") == std::vector<std::string>{"the orange"});
  CHECK(chunk_texts("put the orange cup on the kitchen table") ==
        std::vector<std::string>{"the orange cup", "table"});
  CHECK(chunk_texts("pick up two blocks") == std::vector<std::string>{"blocks"});
  CHECK(chunk_texts("open it") == std::vector<std::string>{});
  const auto c = extract_noun_chunks("Grab the Mug.");
  REQUIRE(c.size() == 1);
  CHECK(c[0].start == 5);
  CHECK(c[0].end == 12);
  CHECK_THROWS_AS(extract_noun_chunks(""), InvalidInput);
}

TEST_CASE("a custom tagger replaces the lexicon") {
  const Tagger all_nouns = [](std::span<const std::string> w) { return std::vector<WordTag>(w.size(), WordTag::noun); };
  CHECK(extract_noun_chunks("xx yy", all_nouns).size() == 1);
  const Tagger broken = [](std::span<const std::string>) { return std::vector<WordTag>{}; };
  CHECK_THROWS_AS(extract_noun_chunks("xx yy", broken), InvalidInput);
}

TEST_CASE("six templates, each with a prompt and an answer part") {
  CHECK(all_templates().size() == 6);
  const auto& loc = get_template(TemplateId::localization);
  CHECK(loc.prompt_pattern() == "The scene is <scene></scene>. Locate: OBJECT.");
  CHECK(loc.answer_pattern() == "LOCATION");
  CHECK(template_name(TemplateId::goal_generation) == "goal_generation");
}

TEST_CASE("fill_template substitutes in one pass and resolves alternatives") {
  SlotValues s;
  s.object = "LOCATION";  // must not be substituted again
  s.location = "<loc1>";
  CHECK(fill_template("Locate: OBJECT at LOCATION", s) == "Locate: LOCATION at <loc1>");
  TemplateChoice c;
  c.finished = true;
  c.key_actions = true;
  c.modality = tk::GoalModality::pcd;
  CHECK(fill_template("[yes/no] {key/dense} image (or point cloud) <image> (<pcd>) x </image> (</pcd>)", s, c) ==
        "yes key point cloud <pcd> x </pcd>");
}

TEST_CASE("normalize_instruction trims and drops one trailing period") {
  CHECK(normalize_instruction("  open the drawer.  ") == "open the drawer");
  CHECK(normalize_instruction("wait..") == "wait.");
  CHECK(normalize_instruction("go") == "go");
}

TEST_CASE("builder ids sort by task ordinal then sequence") {
  CHECK(make_builder_id(TaskType::embodied_qa, 3) == "00-embodied_qa-0003");
  CHECK(make_builder_id(TaskType::action_prediction, 12) == "07-action_prediction-0012");
  CHECK(make_builder_id(TaskType::task_caption, 0) < make_builder_id(TaskType::whatif_qa, 0));
}

TEST_CASE("verification negatives are seeded, distinct and from the first half") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto neg = verification_negatives(20, 1, 4, seed);
    REQUIRE(neg.size() == 4);
    CHECK(std::is_sorted(neg.begin(), neg.end()));
    CHECK(std::set<std::size_t>(neg.begin(), neg.end()).size() == 4);
    CHECK(neg.back() < 10);
    CHECK(neg == verification_negatives(20, 1, 4, seed));
  }
  CHECK(verification_negatives(4, 1, 10, 1).size() == 2);
  CHECK(verification_negatives(2, 2, 1, 1).empty());
}

TEST_CASE("keyframes: endpoints, gripper toggles and pauses") {
  std::vector<ActionStep> a(8);
  const double xs[] = {0.0, 0.1, 0.2, 0.2, 0.3, 0.4, 0.5, 0.6};
  for (int t = 0; t < 8; ++t) a[t].position.x() = xs[t];
  a[5].gripper = a[6].gripper = a[7].gripper = 1;
  CHECK(keyframe_select(a) == std::vector<std::size_t>{0, 3, 5, 7});
  CHECK(keyframe_select(std::vector<ActionStep>(1)) == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(keyframe_select(std::vector<ActionStep>{}), InvalidInput);
}

TEST_CASE("ground_instruction wraps the matching noun phrase") {
  const tk::BoxBins box{1, 2, 3, 4, 5, 6};
  const auto g = ground_instruction("put the red block in the bin", "red block", box);
  REQUIRE(g.has_value());
  CHECK(tk::render(*g) == "put the <obj> red block </obj><loc1><loc2><loc3><loc4><loc5><loc6> in the bin");
  // Head-noun match when the label is less specific.
  const auto h = ground_instruction("put the red block in the bin", "block", box);
  REQUIRE(h.has_value());
  CHECK(h->at(1).as<tk::ObjSpan>().name == "red block");
  CHECK_FALSE(ground_instruction("put the red block in the bin", "sponge", box).has_value());
}

TEST_CASE("builders fill the question templates") {
  auto e = testep::flat_episode(4);
  e.instruction = "Stack the cube.";
  const BuildContext ctx{e, AssetLayout::for_episode(e.id), 5};
  const GroundedObject cube{"cube", {Vec3(0, 0, 0), Vec3(0.5, 0.5, 0.5)}, 1};

  const auto loc = build_localization_sample(ctx, cube, 0);
  CHECK(full_text(loc) == "The scene is <scene></scene>. Locate: cube. Answer: <loc0><loc0><loc0><loc128><loc128><loc128>");
  CHECK(loc.assets == std::vector<AssetRef>{{"scene", "assets/ep/scene_0001.pc3d"}});
  CHECK(loc.provenance.template_id == "localization");
  CHECK(loc.provenance.seed == 5);
  CHECK(loc.builder_id == "04-localization-0000");

  CHECK(full_text(build_verification_sample(ctx, 2, 2)) ==
        "The initial scene is <scene></scene> and the current scene is <scene></scene>. Instruction: Stack the cube. "
        "Finished? Answer: yes");
  CHECK_THROWS_AS(build_verification_sample(ctx, 4, 1), InvalidInput);

  const auto goal = build_goal_generation_sample(ctx, tk::GoalModality::image, std::nullopt);
  CHECK(tk::render(goal.answer) == "<image> Stack the cube </image>");
  CHECK(std::find(goal.flags.begin(), goal.flags.end(), "no-object") != goal.flags.end());

  const GroundedObject outside{"cube", {Vec3(-1, 0, 0), Vec3(0.5, 0.5, 0.5)}, 0};
  const auto clamped = build_dense_caption_sample(ctx, outside, 0);
  CHECK(std::find(clamped.flags.begin(), clamped.flags.end(), "clamped") != clamped.flags.end());

  e.instruction = "use <obj> here";
  CHECK_THROWS_AS(build_task_caption_sample(ctx), InvalidInput);
}

TEST_CASE("external QA ingestion skips incomplete or malformed records") {
  std::vector<ExternalQa> in(4);
  in[0] = {"What moved?", "The cup.", {}, "ep", "bridge"};
  in[1] = {std::nullopt, "x", {}, "ep", "bridge"};
  in[2] = {"q", "", {}, "ep", "bridge"};
  in[3] = {"where <obj>", "a", {}, "ep", "bridge"};
  const auto r = ingest_external_qa(in);
  REQUIRE(r.samples.size() == 1);
  CHECK(r.samples[0].task_type == TaskType::embodied_qa);
  CHECK(r.samples[0].provenance.template_id == "external_qa");
  REQUIRE(r.skipped.size() == 3);
  CHECK(r.skipped[0] == "record 1: missing question");
  CHECK(r.skipped[1] == "record 2: missing answer");
  CHECK(r.skipped[2].rfind("record 3: ", 0) == 0);
}
