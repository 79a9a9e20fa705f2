#include <random>

#include "doctest.h"
#include "embforge/codec.hpp"
#include "embforge/errors.hpp"
#include "embforge/sequence.hpp"
#include "embforge/vocab.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "random_ast.hpp"

using namespace embforge;
using namespace embforge::tokens;

namespace {

std::vector<TokenId> ids(std::string_view text) {
  std::vector<TokenId> out;
  for (const auto& p : lex(text)) out.push_back(std::get<TokenId>(p));
  return out;
}

ParseError parse_error(std::string_view text) {
  try {
    parse(text);
  } catch (const ParseError& e) {
    return e;
  }
  FAIL("expected a ParseError for " << text);
  return ParseError(ParseErrorKind::stray_token, 0, "");
}

}  // namespace

TEST_CASE("vocabulary layout and lookup") {
  const Vocab& v = Vocab::instance();
  CHECK(v.size() == 779);
  CHECK(v.text(kObjOpen) == "<obj>");
  CHECK(v.text(kActSep) == "<ACT_SEP>");
  CHECK(v.text(loc_token(0)) == "<loc0>");
  CHECK(v.text(loc_token(255)) == "<loc255>");
  CHECK(v.text(aloc_token(17)) == "<aloc17>");
  CHECK(v.text(arot_token(255)) == "<arot255>");
  CHECK(v.text(gripper_token(1)) == "<gripper1>");
  CHECK(v.find("<loc256>") == std::nullopt);
  CHECK(v.find("<LOC1>") == std::nullopt);
  for (TokenId id = 0; id < kVocabSize; ++id) {
    REQUIRE(v.find(v.text(id)) == std::optional<TokenId>(id));
  }
  CHECK(family_of(arot_token(3)) == Family::arot);
  CHECK(bin_of(arot_token(3)) == 3);
  CHECK(bin_of(gripper_token(1)) == 1);
  CHECK(bin_of(kSceneOpen) == 0);
  CHECK_THROWS(family_of(kVocabSize));

  const auto j = nlohmann::json::parse(v.to_json());
  REQUIRE(j.size() == 779);
  CHECK(j[0]["token_string"] == "<obj>");
  CHECK(j[9]["family"] == "loc");
  CHECK(j[778]["id"] == 778);
}

TEST_CASE("quantizer matches the floor-and-clamp rule") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> x(-2, 3);
  for (int i = 0; i < 5000; ++i) {
    const double v = x(rng);
    const auto q = quantize(v, -0.5, 1.5);
    CHECK(q.bin == oracle::bin256(v, -0.5, 1.5));
    CHECK(q.clamped == (v < -0.5 || v > 1.5));
  }
  CHECK(quantize(0.0, 0, 1).bin == 0);
  CHECK(quantize(1.0, 0, 1).bin == 255);
  CHECK_FALSE(quantize(1.0, 0, 1).clamped);
  CHECK(quantize(0.5, 0, 1).bin == 128);
  CHECK(dequantize(0, 0, 1) == doctest::Approx(0.5 / 256));
  CHECK(dequantize(255, 0, 1) == doctest::Approx(255.5 / 256));
  CHECK_THROWS_AS(quantize(NAN, 0, 1), InvalidInput);
  CHECK_THROWS_AS(quantize(0.5, 1, 1), InvalidInput);
  CHECK_THROWS_AS(dequantize(256, 0, 1), InvalidInput);
}

TEST_CASE("action encoding of the unit-bounds example") {
  ActionStep s;
  s.gripper = 1;
  const auto enc = encode_action(s, WorkspaceBounds::unit());
  CHECK(join({enc.tokens.begin(), enc.tokens.end()}) ==
        "<aloc0><aloc0><aloc0><arot128><arot128><arot128><gripper1>");
  CHECK(enc.clamped == 0);
}

TEST_CASE("action sequences: separators, clamping, decode errors") {
  std::vector<ActionStep> steps(3);
  steps[1].position = Vec3(2, 0.5, -1);
  const auto enc = encode_action_seq(steps, WorkspaceBounds::unit());
  CHECK(enc.tokens.size() == 23);
  CHECK(enc.tokens[7] == kActSep);
  CHECK(enc.tokens[15] == kActSep);
  CHECK(enc.clamped == 2);
  CHECK(decode_action_seq(enc.tokens, WorkspaceBounds::unit()).size() == 3);
  CHECK_THROWS_AS(encode_action_seq(std::vector<ActionStep>{}, WorkspaceBounds::unit()), InvalidInput);

  ActionStep bad;
  bad.gripper = 3;
  CHECK_THROWS_AS(encode_action(bad, WorkspaceBounds::unit()), InvalidInput);

  auto err_index = [](const std::vector<TokenId>& t) -> long {
    try {
      decode_action_bins(t);
    } catch (const ParseError& e) {
      return static_cast<long>(e.index());
    }
    return -1;
  };
  auto t = enc.tokens;
  t.push_back(kActSep);
  CHECK(err_index(t) == 23);
  t = enc.tokens;
  t[3] = aloc_token(0);
  CHECK(err_index(t) == 3);
  t = enc.tokens;
  t.erase(t.begin() + 7);
  CHECK(err_index(t) == 7);
  CHECK(err_index({}) == 0);
}

TEST_CASE("box encoding orders min then max and repairs swapped axes") {
  const Aabb3 box{Vec3(0.1, 0.2, 0.3), Vec3(0.4, 0.5, 0.6)};
  const auto bins = bbox_bins(box, WorkspaceBounds::unit());
  CHECK(bins == BoxBins{25, 51, 76, 102, 128, 153});
  BoxBins swapped = bins;
  std::swap(swapped[0], swapped[3]);
  const auto dec = decode_bbox_bins(swapped, WorkspaceBounds::unit());
  CHECK(dec.swapped);
  CHECK(dec.box.valid());
  CHECK_FALSE(decode_bbox_bins(bins, WorkspaceBounds::unit()).swapped);
  CHECK_THROWS_AS(decode_bbox(ids("<loc1><loc2>"), WorkspaceBounds::unit()), ParseError);
  CHECK_THROWS_AS(decode_bbox(ids("<loc1><loc2><loc3><loc4><loc5><aloc6>"), WorkspaceBounds::unit()), ParseError);
}

TEST_CASE("lex keeps unknown angle-bracket text as text") {
  const auto p = lex("a <obj> cup </obj><loc9><x> <loc256>");
  REQUIRE(p.size() == 6);
  CHECK(std::get<std::string>(p[0]) == "a ");
  CHECK(std::get<TokenId>(p[1]) == kObjOpen);
  CHECK(std::get<std::string>(p[2]) == " cup ");
  CHECK(std::get<TokenId>(p[3]) == kObjClose);
  CHECK(std::get<TokenId>(p[4]) == loc_token(9));
  CHECK(std::get<std::string>(p[5]) == "<x> <loc256>");
  CHECK(join(lex("<<obj>>")) == "<<obj>>");
}

TEST_CASE("parse builds the expected tree") {
  const auto seq = parse(
      "<scene></scene> move <obj> red mug </obj><loc1><loc2><loc3><loc4><loc5><loc6> <image> done </image>"
      "<aloc1><aloc2><aloc3><arot4><arot5><arot6><gripper0>");
  REQUIRE(seq.size() == 6);
  CHECK(seq[0].is<ScenePlaceholder>());
  CHECK(seq[1].as<Text>().text == " move ");
  CHECK(seq[2].as<ObjSpan>().name == "red mug");
  CHECK(seq[2].as<ObjSpan>().box == BoxBins{1, 2, 3, 4, 5, 6});
  CHECK(seq[3].as<Text>().text == " ");
  REQUIRE(seq[4].as<GoalSpan>().children.size() == 1);
  CHECK(seq[4].as<GoalSpan>().children[0].as<Text>().text == "done");
  CHECK(seq[5].as<ActionChunk>().steps.size() == 1);
}

TEST_CASE("each malformation has its own error kind and index") {
  CHECK(parse_error("<obj> mug </obj><loc1>").kind() == ParseErrorKind::loc_arity);
  CHECK(parse_error("<obj> mug </obj><loc1>").index() == 3);
  CHECK(parse_error("<image> a </pcd>").kind() == ParseErrorKind::mismatched_goal_closer);
  CHECK(parse_error("<image> a </pcd>").index() == 2);
  CHECK(parse_error("<image><pcd></pcd></image>").kind() == ParseErrorKind::nested_goal_span);
  CHECK(parse_error("<image><pcd></pcd></image>").index() == 1);
  CHECK(parse_error("<image> a").kind() == ParseErrorKind::unbalanced_tag);
  CHECK(parse_error("x </image>").index() == 1);
  CHECK(parse_error("<arot1>").kind() == ParseErrorKind::action_family);
  CHECK(parse_error("<aloc1><aloc1><aloc1><arot1><arot1><arot1><gripper1><ACT_SEP>").kind() ==
        ParseErrorKind::trailing_separator);
  CHECK(parse_error("<aloc1><aloc1><aloc1><arot1><arot1><arot1><gripper1><ACT_SEP>").index() == 7);
  CHECK(parse_error("<aloc1><aloc1><aloc1><arot1><arot1><gripper1>").index() == 5);
  CHECK(parse_error("<scene> x").kind() == ParseErrorKind::scene_not_closed);
  CHECK(parse_error("<obj></obj><loc1><loc1><loc1><loc1><loc1><loc1>").kind() == ParseErrorKind::empty_object_name);
  CHECK(parse_error("<obj>   </obj><loc1><loc1><loc1><loc1><loc1><loc1>").kind() ==
        ParseErrorKind::empty_object_name);
  CHECK(parse_error("a <ACT_SEP>").kind() == ParseErrorKind::stray_token);
  CHECK(parse_error("</obj>").kind() == ParseErrorKind::unbalanced_tag);
}

TEST_CASE("render refuses sequences outside its domain") {
  CHECK_THROWS_AS(render({Text{""}}), InvalidInput);
  CHECK_THROWS_AS(render({Text{"a"}, Text{"b"}}), InvalidInput);
  CHECK_THROWS_AS(render({ObjSpan{" mug", {}}}), InvalidInput);
  CHECK_THROWS_AS(render({Text{"has <obj> inside"}}), InvalidInput);
  CHECK_THROWS_AS(render({ActionChunk{}}), InvalidInput);
  GoalSpan inner;
  GoalSpan outer;
  outer.children = {inner};
  CHECK_THROWS_AS(render({outer}), InvalidInput);
  CHECK(sequence_violations({Text{"a"}, ScenePlaceholder{}, Text{"b"}}).empty());
}

TEST_CASE("random sequences roundtrip through render and parse") {
  std::mt19937_64 rng(12);
  int n = 0;
  while (n < 1000) {
    const Sequence s = gen::random_sequence(rng);
    if (!sequence_violations(s).empty()) continue;
    ++n;
    REQUIRE(parse(render(s)) == s);
    // Token content is independent of how it was reached.
    std::vector<TokenId> direct;
    for (const auto& p : render_pieces(s))
      if (auto* id = std::get_if<TokenId>(&p)) direct.push_back(*id);
    CHECK(vocab_tokens(s) == direct);
  }
}
