#include <fstream>
#include <set>

#include "doctest.h"
#include "embforge/errors.hpp"
#include "embforge/fixture.hpp"
#include "embforge/io.hpp"
#include "embforge/pipeline.hpp"
#include "oracles.hpp"

using namespace embforge;
namespace pl = embforge::pipeline;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Three small episodes; the last one has a moving camera.
struct SmallFixture {
  oracle::TempDir dir;
  std::vector<fs::path> manifests;
  SmallFixture() { manifests = fixture::write_fixture(dir.path(), {3, 6, 64, 48, 11}); }
};

const SmallFixture& small_fixture() {
  static const SmallFixture f;
  return f;
}

json manifest_json(std::size_t i) { return json::parse(oracle::slurp(small_fixture().manifests.at(i))); }

std::string load_error_field(const json& j, std::size_t i = 0) {
  try {
    pl::episode_from_json(j, small_fixture().manifests.at(i).parent_path());
  } catch (const EpisodeLoadError& e) {
    return e.field();
  }
  return "<accepted>";
}

SampleRecord record(const std::string& episode, const std::string& builder, TaskType task = TaskType::task_caption) {
  SampleRecord r;
  r.task_type = task;
  r.prompt = tokens::parse("What is the robot doing?");
  r.answer = tokens::parse("Pick up the block.");
  r.episode_id = episode;
  r.builder_id = builder;
  r.provenance = {"caption_direct", 5, "bridge"};
  return r;
}

std::vector<std::string> shard_lines(const fs::path& p) {
  std::vector<std::string> out;
  std::istringstream in(oracle::slurp(p));
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("fixture manifests load into valid episodes") {
  const auto& f = small_fixture();
  for (const auto& m : f.manifests) {
    const Episode e = pl::load_episode(m);
    CHECK(validate_episode(e).empty());
    CHECK(e.frames.size() == 6);
    CHECK(e.actions.size() == 6);
    CHECK(e.qa.size() == 2);
    CHECK_FALSE(e.detections.empty());
    CHECK(e.frames[0].flow);
    CHECK_FALSE(e.frames[5].flow);
  }
  CHECK(pl::load_episode(f.manifests[1]).frames[0].depth_unit == DepthUnit::millimeters_u16);
}

TEST_CASE("load errors name the offending field") {
  SUBCASE("pose with negative determinant") {
    json j = manifest_json(0);
    // Flipping one column of a rotation gives det -1.
    json p = j["frames"][0]["pose"];
    for (int r = 0; r < 3; ++r) p[r * 4] = -p[r * 4].get<double>();
    j["frames"][0]["pose"] = p;
    CHECK(load_error_field(j) == "frames[0].pose");
  }
  SUBCASE("missing keys") {
    for (const char* key : {"schema_version", "id", "instruction", "bounds", "frames", "actions"}) {
      json j = manifest_json(0);
      j.erase(key);
      CHECK(load_error_field(j) == key);
    }
    json j = manifest_json(0);
    j["frames"][2].erase("intrinsics");
    CHECK(load_error_field(j) == "frames[2].intrinsics");
  }
  SUBCASE("schema version") {
    json j = manifest_json(0);
    j["schema_version"] = 2;
    CHECK(load_error_field(j) == "schema_version");
  }
  SUBCASE("gripper outside {0, 1}") {
    json j = manifest_json(0);
    j["actions"][3][6] = 2;
    CHECK(load_error_field(j) == "actions[3][6]");
  }
  SUBCASE("unknown depth unit") {
    json j = manifest_json(0);
    j["frames"][1]["depth_unit"] = "feet";
    CHECK(load_error_field(j) == "frames[1].depth_unit");
  }
  SUBCASE("missing depth file") {
    json j = manifest_json(0);
    j["frames"][1]["depth_path"] = "nope.f32";
    CHECK(load_error_field(j) == "frames[1].depth_path");
  }
  SUBCASE("qa frame index out of range") {
    json j = manifest_json(0);
    j["qa"][0]["frame_index"] = 6;
    CHECK(load_error_field(j) == "qa[0].frame_index");
  }
  SUBCASE("actions may omit only the final frame") {
    json j = manifest_json(0);
    j["actions"].erase(j["actions"].size() - 1);
    CHECK(load_error_field(j) == "<accepted>");
    j["actions"].erase(j["actions"].size() - 1);
    CHECK(load_error_field(j) == "actions");
  }
  SUBCASE("not JSON at all") {
    oracle::TempDir tmp;
    io::write_text(tmp / "manifest.json", "{ nope");
    CHECK_THROWS_AS(pl::load_episode(tmp / "manifest.json"), EpisodeLoadError);
  }
}

TEST_CASE("sample JSON round trip") {
  SampleRecord r = record("ep", "02-task_caption-0000");
  r.assets = {{"scene", "assets/ep/scene_000.bin"}};
  r.flags = {"unaligned-depth"};
  const auto back = pl::sample_from_json(pl::sample_to_json(r));
  CHECK(back.task_type == r.task_type);
  CHECK(back.prompt == r.prompt);
  CHECK(back.answer == r.answer);
  CHECK(back.assets == r.assets);
  CHECK(back.episode_id == r.episode_id);
  CHECK(back.builder_id == r.builder_id);
  CHECK(back.provenance == r.provenance);
  CHECK(back.flags == r.flags);

  json j = pl::sample_to_json(r);
  j["task_type"] = "juggling";
  CHECK_THROWS_AS(pl::sample_from_json(j), InvalidInput);
  j = pl::sample_to_json(r);
  j["answer"] = "<obj> dangling";
  CHECK_THROWS_AS(pl::sample_from_json(j), ParseError);
  j = pl::sample_to_json(r);
  j["provenance"].erase("seed");
  CHECK_THROWS_AS(pl::sample_from_json(j), InvalidInput);
}

TEST_CASE("shard names are zero padded") {
  CHECK(pl::shard_name(0) == "samples-00000.jsonl");
  CHECK(pl::shard_name(123) == "samples-00123.jsonl");
}

TEST_CASE("export splits records into sorted shards") {
  oracle::TempDir tmp;
  std::vector<SampleRecord> recs = {record("b", "01"), record("a", "02"), record("a", "01"),
                                    record("c", "00", TaskType::verification), record("b", "00")};
  pl::DatasetReport rep;
  pl::export_samples(recs, tmp.path(), 2, rep);
  const auto shards = pl::list_shards(tmp.path());
  REQUIRE(shards.size() == 3);
  CHECK(rep.shards == 3);
  CHECK(rep.total_samples == 5);
  CHECK(rep.task_counts.at("task_caption") == 4);
  CHECK(rep.task_counts.at("verification") == 1);
  CHECK(rep.task_counts.at("localization") == 0);
  CHECK(shard_lines(shards[0]).size() == 2);
  CHECK(shard_lines(shards[1]).size() == 2);
  CHECK(shard_lines(shards[2]).size() == 1);
  std::vector<std::string> keys;
  for (const auto& s : pl::read_samples(tmp.path())) keys.push_back(s.key());
  CHECK(keys == std::vector<std::string>{"a/01", "a/02", "b/00", "b/01", "c/00"});
  CHECK(fs::is_regular_file(tmp / "vocab.json"));
  CHECK(fs::is_regular_file(tmp / "report.json"));

  // A rerun with fewer records leaves no stale shard behind.
  pl::DatasetReport again;
  pl::export_samples({record("a", "01")}, tmp.path(), 2, again);
  CHECK(pl::list_shards(tmp.path()).size() == 1);
  CHECK(pl::validate_dataset(tmp.path()).violations.empty());
}

TEST_CASE("export rejects duplicates and a zero shard size") {
  oracle::TempDir tmp;
  pl::DatasetReport rep;
  CHECK_THROWS_AS(pl::export_samples({record("a", "01"), record("a", "01")}, tmp.path(), 2, rep), InvalidInput);
  CHECK_THROWS_AS(pl::export_samples({record("a", "01")}, tmp.path(), 0, rep), InvalidInput);
}

TEST_CASE("dataset report JSON round trip") {
  pl::DatasetReport r;
  r.generated_at = "2026-01-01T00:00:00Z";
  r.total_samples = 7;
  r.shards = 2;
  r.task_counts["localization"] = 7;
  r.flag_counts["clamped"] = 1;
  pl::EpisodeReport a;
  a.id = "x";
  a.dataset = "bridge";
  a.produced = true;
  a.samples = 7;
  a.notes = {"no detections"};
  a.alignment = std::vector<double>{1.0, 0.9};
  pl::EpisodeReport b;
  b.id = "y";
  b.skip_reason = "no tasks enabled";
  r.episodes = {a, b};
  r.violations = {"v"};

  const auto back = pl::DatasetReport::from_json(json::parse(r.to_json().dump()));
  CHECK(back.to_json() == r.to_json());
  const auto s = back.alignment();
  CHECK(s.aligned == 1);
  CHECK(s.unaligned == 1);
  CHECK(s.min_coefficient == 0.9);
  CHECK(s.max_coefficient == 1.0);
  CHECK(r.to_json()["episodes"][1]["status"] == "skipped");
}

TEST_CASE("run covers every manifest and is deterministic across workers") {
  const auto& f = small_fixture();
  oracle::TempDir tmp;
  Config cfg;
  cfg.seed = 3;
  cfg.workers = 1;
  const auto one = pl::run(f.manifests, cfg, tmp / "one");
  cfg.workers = 3;
  const auto three = pl::run(f.manifests, cfg, tmp / "three");

  REQUIRE(one.episodes.size() == f.manifests.size());
  for (std::size_t i = 0; i < f.manifests.size(); ++i) {
    CHECK(one.episodes[i].id == "synthetic-" + std::to_string(i));
    CHECK(one.episodes[i].produced);
  }
  for (const auto& shard : pl::list_shards(tmp / "one"))
    CHECK(oracle::slurp(shard) == oracle::slurp(tmp / "three" / shard.filename()));
  auto strip = [](json j) {
    j.erase("generated_at");
    return j;
  };
  CHECK(strip(one.to_json()) == strip(three.to_json()));

  // The moving-camera episode keeps its raw depth and flags every sample.
  const auto& moving = one.episodes[2];
  CHECK_FALSE(moving.alignment);
  CHECK(std::find(moving.notes.begin(), moving.notes.end(), "alignment skipped: camera moves") != moving.notes.end());
  CHECK(one.episodes[0].alignment);
  for (const auto& s : pl::read_samples(tmp / "one")) {
    const bool flagged = std::find(s.flags.begin(), s.flags.end(), "unaligned-depth") != s.flags.end();
    CHECK(flagged == (s.episode_id == "synthetic-2"));
  }

  const auto v = pl::validate_dataset(tmp / "one");
  CHECK(v.violations.empty());
  CHECK(v.total_samples == one.total_samples);
  std::set<std::string> tasks;
  for (const auto& [task, count] : v.task_counts)
    if (count > 0) tasks.insert(task);
  CHECK(tasks.size() == 8);
}

TEST_CASE("episodes with nothing enabled are skipped, not dropped") {
  const auto& f = small_fixture();
  oracle::TempDir tmp;
  Config cfg;
  for (auto& [task, on] : cfg.tasks) on = false;
  const auto rep = pl::run(f.manifests, cfg, tmp.path());
  REQUIRE(rep.episodes.size() == f.manifests.size());
  for (const auto& ep : rep.episodes) {
    CHECK_FALSE(ep.produced);
    CHECK(ep.skip_reason == "no tasks enabled");
  }
  CHECK(rep.total_samples == 0);
  CHECK(pl::list_shards(tmp.path()).empty());
}

TEST_CASE("unreadable and duplicate manifests become skip reasons") {
  const auto& f = small_fixture();
  oracle::TempDir tmp;
  io::write_text(tmp / "broken.json", "[]");
  Config cfg;
  cfg.tasks[TaskType::whatif_qa] = false;
  const auto rep = pl::run({f.manifests[0], tmp / "broken.json", f.manifests[0]}, cfg, tmp / "out");
  REQUIRE(rep.episodes.size() == 3);
  CHECK(rep.episodes[0].produced);
  CHECK(rep.episodes[1].skip_reason.starts_with("load error at manifest"));
  CHECK(rep.episodes[2].skip_reason.starts_with("duplicate episode id"));
}

TEST_CASE("validate reports missing assets and corrupt lines") {
  const auto& f = small_fixture();
  oracle::TempDir tmp;
  Config cfg;
  cfg.shard_size = 5;
  pl::run({f.manifests[0]}, cfg, tmp.path());
  REQUIRE(pl::validate_dataset(tmp.path()).violations.empty());

  const auto samples = pl::read_samples(tmp.path());
  std::string victim;
  for (const auto& s : samples)
    if (!s.assets.empty()) victim = s.assets.front().path;
  REQUIRE_FALSE(victim.empty());
  fs::remove(tmp / victim);
  auto v = pl::validate_dataset(tmp.path());
  REQUIRE(v.violations.size() == 1);
  CHECK(v.violations[0].find("missing asset " + victim) != std::string::npos);

  const auto shards = pl::list_shards(tmp.path());
  auto lines = shard_lines(shards[0]);
  lines[1] = "{not json";
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  io::write_text(shards[0], text);
  v = pl::validate_dataset(tmp.path());
  const std::string where = shards[0].filename().string() + ":2: invalid JSON";
  CHECK(std::find(v.violations.begin(), v.violations.end(), where) != v.violations.end());
  // The count check against report.json notices the lost line too.
  CHECK(std::any_of(v.violations.begin(), v.violations.end(),
                    [](const std::string& s) { return s.starts_with("report.json: total_samples"); }));
}

TEST_CASE("validate flags non-canonical text") {
  oracle::TempDir tmp;
  pl::DatasetReport rep;
  pl::export_samples({record("a", "01")}, tmp.path(), 10, rep);
  const auto shard = pl::list_shards(tmp.path()).at(0);
  json j = json::parse(shard_lines(shard).at(0));
  j["answer"] = "<loc3>  <loc4>";
  io::write_text(shard, j.dump() + "\n");
  const auto v = pl::validate_dataset(tmp.path());
  REQUIRE_FALSE(v.violations.empty());
  CHECK(v.violations[0].find("answer") != std::string::npos);
}

TEST_CASE("stats on a missing or empty directory are all zero") {
  oracle::TempDir tmp;
  for (const auto& dir : {tmp.path(), tmp / "absent"}) {
    const auto s = pl::stats(dir);
    CHECK(s.total == 0);
    CHECK(s.by_task.size() == 8);
    for (const auto& [task, count] : s.by_task) CHECK(count == 0);
    CHECK(s.by_dataset.empty());
  }
  CHECK(pl::validate_dataset(tmp / "absent").violations.size() == 1);
}

TEST_CASE("stats count by task and dataset") {
  oracle::TempDir tmp;
  pl::DatasetReport rep;
  auto r = record("b", "00", TaskType::localization);
  r.provenance.dataset = "fractal";
  pl::export_samples({record("a", "00"), record("a", "01"), r}, tmp.path(), 2, rep);
  const auto s = pl::stats(tmp.path());
  CHECK(s.total == 3);
  CHECK(s.by_task.at("task_caption") == 2);
  CHECK(s.by_dataset.at("bridge").at("task_caption") == 2);
  CHECK(s.by_dataset.at("fractal").at("localization") == 1);
  CHECK(s.table().find("fractal") != std::string::npos);
}
