#include "embforge/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "embforge/annotate.hpp"
#include "embforge/codec.hpp"
#include "embforge/errors.hpp"
#include "embforge/geom3d.hpp"
#include "embforge/vocab.hpp"

namespace embforge::pipeline {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Manifest loading

namespace {

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw EpisodeLoadError(where, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw EpisodeLoadError(where.empty() ? key : where + "." + key, "missing");
  return *it;
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw EpisodeLoadError(where, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw EpisodeLoadError(where, "not finite");
  return d;
}

std::string text(const json& v, const std::string& where) {
  if (!v.is_string()) throw EpisodeLoadError(where, "expected a string");
  return v.get<std::string>();
}

const json& array(const json& v, const std::string& where) {
  if (!v.is_array()) throw EpisodeLoadError(where, "expected an array");
  return v;
}

fs::path existing(const fs::path& base, const std::string& rel, const std::string& where) {
  if (rel.empty()) throw EpisodeLoadError(where, "empty path");
  fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : base / rel;
  if (!fs::is_regular_file(p)) throw EpisodeLoadError(where, "file not found: " + p.string());
  return p;
}

Pose parse_pose(const json& v, const std::string& where) {
  array(v, where);
  if (v.size() != 12 && v.size() != 16) throw EpisodeLoadError(where, "expected 12 or 16 numbers");
  std::array<double, 16> m{};
  for (std::size_t i = 0; i < v.size(); ++i) m[i] = number(v[i], where + "[" + std::to_string(i) + "]");
  if (v.size() == 16 && (m[12] != 0 || m[13] != 0 || m[14] != 0 || m[15] != 1))
    throw EpisodeLoadError(where, "last row must be 0 0 0 1");
  Pose p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = m[4 * r + c];
    p.translation[r] = m[4 * r + 3];
  }
  const double err = (p.rotation.transpose() * p.rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (err > 1e-6 || !(p.rotation.determinant() > 0))
    throw EpisodeLoadError(where, "rotation not orthonormal with det +1 within 1e-6");
  if (err > 1e-12) {
    // Snap to the nearest rotation so downstream checks hold tightly.
    Eigen::JacobiSVD<Mat3> svd(p.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    p.rotation = svd.matrixU() * svd.matrixV().transpose();
  }
  return p;
}

std::array<AxisRange, 3> parse_ranges(const json& v, const std::string& where) {
  array(v, where);
  if (v.size() != 3) throw EpisodeLoadError(where, "expected 3 [lo, hi] pairs");
  std::array<AxisRange, 3> out;
  for (std::size_t a = 0; a < 3; ++a) {
    const std::string w = where + "[" + std::to_string(a) + "]";
    if (!v[a].is_array() || v[a].size() != 2) throw EpisodeLoadError(w, "expected [lo, hi]");
    out[a] = {number(v[a][0], w + "[0]"), number(v[a][1], w + "[1]")};
  }
  return out;
}

std::string field_of(const std::string& violation) {
  const auto cut = violation.find_first_of(": ");
  return cut == std::string::npos ? violation : violation.substr(0, cut);
}

Frame parse_frame(const json& f, const fs::path& base, const std::string& where) {
  Frame fr;
  const std::string unit = text(require(f, "depth_unit", where), where + ".depth_unit");
  if (unit == "meters_f32") fr.depth_unit = DepthUnit::meters_f32;
  else if (unit == "millimeters_u16") fr.depth_unit = DepthUnit::millimeters_u16;
  else throw EpisodeLoadError(where + ".depth_unit", "expected meters_f32 or millimeters_u16");

  const json& k = require(f, "intrinsics", where);
  const std::string kw = where + ".intrinsics";
  fr.camera.fx = number(require(k, "fx", kw), kw + ".fx");
  fr.camera.fy = number(require(k, "fy", kw), kw + ".fy");
  fr.camera.cx = number(require(k, "cx", kw), kw + ".cx");
  fr.camera.cy = number(require(k, "cy", kw), kw + ".cy");
  const double w = number(require(k, "width", kw), kw + ".width");
  const double h = number(require(k, "height", kw), kw + ".height");
  if (w != std::floor(w) || h != std::floor(h) || w < 1 || h < 1 || w > 32768 || h > 32768)
    throw EpisodeLoadError(kw, "width and height must be positive integers");
  fr.camera.width = static_cast<int>(w);
  fr.camera.height = static_cast<int>(h);
  fr.camera.pose = parse_pose(require(f, "pose", where), where + ".pose");
  fr.timestamp = number(require(f, "timestamp", where), where + ".timestamp");

  fr.depth_path = text(require(f, "depth_path", where), where + ".depth_path");
  const fs::path depth = existing(base, fr.depth_path, where + ".depth_path");
  try {
    fr.depth = std::make_shared<const DepthMap>(io::read_depth(depth, fr.depth_unit));
  } catch (const IoError& e) {
    throw EpisodeLoadError(where + ".depth_path", e.what());
  }
  if (f.contains("flow_path") && !f["flow_path"].is_null()) {
    fr.flow_path = text(f["flow_path"], where + ".flow_path");
    const fs::path flow = existing(base, fr.flow_path, where + ".flow_path");
    try {
      fr.flow = std::make_shared<const FlowField>(io::read_flow_f32(flow));
    } catch (const IoError& e) {
      throw EpisodeLoadError(where + ".flow_path", e.what());
    }
  }
  if (f.contains("rgb_path") && !f["rgb_path"].is_null()) {
    fr.rgb_path = text(f["rgb_path"], where + ".rgb_path");
    const fs::path rgb = existing(base, fr.rgb_path, where + ".rgb_path");
    try {
      fr.rgb = std::make_shared<const RgbImage>(io::read_rgb_png(rgb));
    } catch (const IoError& e) {
      throw EpisodeLoadError(where + ".rgb_path", e.what());
    }
  }
  return fr;
}

}  // namespace

WorkspaceBounds bounds_from_json(const json& b) {
  WorkspaceBounds out;
  out.position = parse_ranges(require(b, "position", "bounds"), "bounds.position");
  out.location = parse_ranges(require(b, "location", "bounds"), "bounds.location");
  return out;
}

Episode episode_from_json(const json& j, const fs::path& base) {
  if (!j.is_object()) throw EpisodeLoadError("manifest", "expected a JSON object");
  const json& version = require(j, "schema_version", "");
  if (!version.is_number_integer() || version.get<int>() != kSchemaVersion)
    throw EpisodeLoadError("schema_version", "unsupported version " + version.dump());

  Episode e;
  e.id = text(require(j, "id", ""), "id");
  if (e.id.empty()) throw EpisodeLoadError("id", "empty");
  if (j.contains("dataset")) e.dataset = text(j["dataset"], "dataset");
  e.instruction = text(require(j, "instruction", ""), "instruction");

  e.bounds = bounds_from_json(require(j, "bounds", ""));

  const json& frames = array(require(j, "frames", ""), "frames");
  for (std::size_t t = 0; t < frames.size(); ++t)
    e.frames.push_back(parse_frame(frames[t], base, "frames[" + std::to_string(t) + "]"));

  const json& actions = array(require(j, "actions", ""), "actions");
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const std::string w = "actions[" + std::to_string(t) + "]";
    if (!actions[t].is_array() || actions[t].size() != 7) throw EpisodeLoadError(w, "expected 7 numbers");
    ActionStep s;
    for (int a = 0; a < 3; ++a) s.position[a] = number(actions[t][a], w + "[" + std::to_string(a) + "]");
    for (int a = 0; a < 3; ++a) s.rotation[a] = wrap_angle(number(actions[t][3 + a], w + "[" + std::to_string(3 + a) + "]"));
    const double g = number(actions[t][6], w + "[6]");
    if (g != 0 && g != 1) throw EpisodeLoadError(w + "[6]", "gripper must be 0 or 1");
    s.gripper = static_cast<int>(g);
    e.actions.push_back(s);
  }

  if (j.contains("detections_path") && !j["detections_path"].is_null()) {
    const fs::path p = existing(base, text(j["detections_path"], "detections_path"), "detections_path");
    std::vector<io::DetectionRecord> records;
    try {
      records = io::read_detections(p);
    } catch (const std::exception& err) {
      throw EpisodeLoadError("detections_path", err.what());
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
      const int t = records[i].frame_index;
      if (t < 0 || static_cast<std::size_t>(t) >= e.frames.size())
        throw EpisodeLoadError("detections[" + std::to_string(i) + "].frame_index", "out of range");
      if (e.detections.size() <= static_cast<std::size_t>(t)) e.detections.resize(t + 1);
      e.detections[t].push_back(std::move(records[i].detection));
    }
  }

  if (j.contains("qa")) {
    const json& qa = array(j["qa"], "qa");
    for (std::size_t i = 0; i < qa.size(); ++i) {
      const std::string w = "qa[" + std::to_string(i) + "]";
      if (!qa[i].is_object()) throw EpisodeLoadError(w, "expected an object");
      QaRecord q;
      if (qa[i].contains("question")) q.question = text(qa[i]["question"], w + ".question");
      if (qa[i].contains("answer")) q.answer = text(qa[i]["answer"], w + ".answer");
      if (qa[i].contains("frame_index")) {
        const json& fi = qa[i]["frame_index"];
        if (!fi.is_number_integer() || fi.get<long long>() < 0 ||
            static_cast<std::size_t>(fi.get<long long>()) >= e.frames.size())
          throw EpisodeLoadError(w + ".frame_index", "out of range");
        q.frame_index = fi.get<int>();
      }
      e.qa.push_back(std::move(q));
    }
  }

  const auto violations = validate_episode(e);
  if (!violations.empty()) {
    std::string all;
    for (const auto& v : violations) all += (all.empty() ? "" : "; ") + v;
    throw EpisodeLoadError(field_of(violations.front()), all);
  }
  return e;
}

Episode load_episode(const fs::path& manifest_path) {
  json j;
  try {
    j = json::parse(io::read_text(manifest_path));
  } catch (const std::exception& err) {
    throw EpisodeLoadError("manifest", err.what());
  }
  return episode_from_json(j, manifest_path.parent_path());
}

// ---------------------------------------------------------------------------
// Per-episode annotation

namespace {

bool same_camera(const CameraModel& a, const CameraModel& b) {
  return a.fx == b.fx && a.fy == b.fy && a.cx == b.cx && a.cy == b.cy && a.width == b.width &&
         a.height == b.height && a.pose.rotation == b.pose.rotation && a.pose.translation == b.pose.translation;
}

/// Why depth alignment cannot run on this episode, or empty when it can.
std::string alignment_blocker(const Episode& e) {
  for (std::size_t t = 0; t + 1 < e.frames.size(); ++t)
    if (!e.frames[t].flow) return "no optical flow for frame " + std::to_string(t);
  for (std::size_t t = 1; t < e.frames.size(); ++t)
    if (!same_camera(e.frames[t].camera, e.frames[0].camera)) return "camera moves";
  return {};
}

bool is_templated(const SampleRecord& r) {
  for (const auto& t : annotate::all_templates())
    if (r.provenance.template_id == annotate::template_name(t.id)) return true;
  return false;
}

}  // namespace

std::unique_ptr<diversify::DiversifierClient> make_client(const Config& cfg) {
  switch (cfg.diversifier) {
    case DiversifierMode::off:
    case DiversifierMode::offline: return nullptr;
    case DiversifierMode::replay: return std::make_unique<diversify::ReplayClient>(cfg.replay_dir);
    case DiversifierMode::http: {
      diversify::HttpClientConfig h;
      h.endpoint = cfg.endpoint;
      h.model = cfg.model;
      if (const char* key = std::getenv("EMBFORGE_DIVERSIFIER_KEY")) h.api_key = key;
      h.timeout = std::chrono::milliseconds(cfg.timeout_ms);
      h.max_in_flight = cfg.max_in_flight;
      return std::make_unique<diversify::HttpClient>(h);
    }
  }
  return nullptr;
}

EpisodeResult annotate_episode(const Episode& e, const Config& cfg, diversify::DiversifierClient* client) {
  EpisodeResult out;
  EpisodeReport& rep = out.report;
  rep.id = e.id;
  rep.dataset = e.dataset;
  if (!cfg.any_task_enabled(e.dataset)) {
    rep.skip_reason = "no tasks enabled";
    return out;
  }
  if (const auto v = validate_episode(e); !v.empty()) {
    rep.skip_reason = "invalid episode: " + v.front();
    return out;
  }
  auto on = [&](std::string_view column) { return cfg.enabled(e.dataset, column); };
  auto note = [&](std::string s) { rep.notes.push_back(std::move(s)); };

  const std::size_t n = e.frames.size();
  const std::size_t last = n - 1;
  const std::uint64_t seed = cfg.seed ^ fnv1a64(e.id);

  // Depth, scale-aligned onto frame 0 when the static background allows it.
  std::vector<std::shared_ptr<const DepthMap>> depth(n);
  std::string blocker = alignment_blocker(e);
  if (blocker.empty()) {
    try {
      std::vector<const FlowField*> flows;
      for (std::size_t t = 0; t < last; ++t) flows.push_back(e.frames[t].flow.get());
      const auto bg = geom3d::background_mask(std::span<const FlowField* const>(flows), cfg.tau_flow);
      std::vector<const DepthMap*> raw;
      for (const auto& f : e.frames) raw.push_back(f.depth.get());
      const auto scales = geom3d::align_depth_scales(std::span<const DepthMap* const>(raw), bg);
      for (std::size_t t = 0; t < n; ++t)
        depth[t] = std::make_shared<const DepthMap>(geom3d::scale_depth(*e.frames[t].depth, scales.coefficients[t]));
      rep.alignment = scales.coefficients;
    } catch (const AlignmentUnreliable& err) {
      blocker = err.what();
    }
  }
  if (!rep.alignment) {
    for (std::size_t t = 0; t < n; ++t) depth[t] = e.frames[t].depth;
    note("alignment skipped: " + blocker);
  }
  auto rgb_of = [&](std::size_t t) -> const RgbImage* { return e.frames[t].rgb.get(); };

  // Object boxes on the first frame that has detections.
  std::vector<annotate::GroundedObject> objects;
  std::vector<std::size_t> object_index;
  std::optional<std::size_t> ground_frame;
  for (std::size_t t = 0; t < std::min(n, e.detections.size()); ++t) {
    if (!e.detections[t].empty()) {
      ground_frame = t;
      break;
    }
  }
  if (ground_frame) {
    const std::size_t g = *ground_frame;
    for (std::size_t i = 0; i < e.detections[g].size(); ++i) {
      const auto& d = e.detections[g][i];
      try {
        const auto pc = geom3d::lift_mask(*depth[g], e.frames[g].camera, d.mask);
        objects.push_back({d.label, geom3d::aabb_from_points(pc, cfg.trim_q), g});
        object_index.push_back(i);
      } catch (const EmptyLift&) {
        note("detection " + std::to_string(i) + " on frame " + std::to_string(g) + ": no valid depth in mask");
      }
    }
  } else if (on("localization") || on("dense_caption")) {
    note("no detections");
  }

  // The manipulated object, from the first frame where one is moving.
  std::optional<annotate::GroundedObject> manipulated;
  for (std::size_t t = 0; t < std::min(n, e.detections.size()) && !manipulated; ++t) {
    const auto& dets = e.detections[t];
    if (dets.empty() || !e.frames[t].flow) continue;
    const auto k = geom3d::select_manipulated(dets, *e.frames[t].flow, cfg.tau_flow);
    if (!k) continue;
    try {
      const auto pc = geom3d::lift_mask(*depth[t], e.frames[t].camera, dets[*k].mask);
      manipulated = annotate::GroundedObject{dets[*k].label, geom3d::aabb_from_points(pc, cfg.trim_q), t};
    } catch (const EmptyLift&) {
      note("manipulated object on frame " + std::to_string(t) + ": no valid depth in mask");
    }
  }
  if (!manipulated && (on("goal_image") || on("goal_pcd"))) note("no manipulated object found");

  const annotate::BuildContext ctx{e, annotate::AssetLayout::for_episode(e.id, io::cloud_extension(cfg.pointcloud_format)),
                                   seed};
  auto& samples = out.samples;
  auto attempt = [&](std::string_view what, auto&& build) {
    try {
      build();
    } catch (const std::exception& err) {
      note(std::string(what) + ": " + err.what());
    }
  };

  if (on("embodied_qa") && !e.qa.empty()) {
    attempt("embodied_qa", [&] {
      std::vector<annotate::ExternalQa> records;
      for (const auto& q : e.qa) {
        annotate::ExternalQa x;
        if (!q.question.empty()) x.question = q.question;
        if (!q.answer.empty()) x.answer = q.answer;
        x.assets.push_back({"scene", ctx.layout.scene_cloud(q.frame_index.value_or(0))});
        x.episode_id = e.id;
        x.dataset = e.dataset;
        records.push_back(std::move(x));
      }
      auto ingested = annotate::ingest_external_qa(records);
      for (auto& s : ingested.samples) {
        s.provenance.seed = seed;
        samples.push_back(std::move(s));
      }
      for (auto& why : ingested.skipped) note("embodied_qa " + why);
    });
  }
  if (on("task_caption")) attempt("task_caption", [&] { samples.push_back(annotate::build_task_caption_sample(ctx)); });
  if (on("whatif_qa")) {
    attempt("whatif_qa", [&] {
      std::vector<ActionStep> steps;
      for (std::size_t t : annotate::keyframe_select(e.actions, cfg.keyframe_speed_eps)) steps.push_back(e.actions[t]);
      const auto req = diversify::build_whatif_request(e, steps, objects, seed);
      samples.push_back(diversify::whatif_sample(ctx, req, client));
    });
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (on("dense_caption"))
      attempt("dense_caption", [&] { samples.push_back(annotate::build_dense_caption_sample(ctx, objects[i], object_index[i])); });
    if (on("localization"))
      attempt("localization", [&] { samples.push_back(annotate::build_localization_sample(ctx, objects[i], object_index[i])); });
  }
  if (on("verification")) {
    attempt("verification", [&] {
      std::set<std::size_t> frames;
      const std::size_t k = std::min(cfg.verification_k, n);
      for (std::size_t t = n - k; t < n; ++t) frames.insert(t);
      for (std::size_t t : annotate::verification_negatives(n, cfg.verification_k, cfg.verification_negatives, seed))
        frames.insert(t);
      for (std::size_t t : frames) samples.push_back(annotate::build_verification_sample(ctx, t, cfg.verification_k));
    });
  }
  if (on("goal_image")) {
    if (!e.frames[last].rgb) {
      note("goal_generation image: last frame has no rgb");
    } else {
      attempt("goal_generation", [&] {
        auto r = annotate::build_goal_generation_sample(ctx, tokens::GoalModality::image, manipulated);
        if (!on("goal_depth"))
          std::erase_if(r.assets, [](const AssetRef& a) { return a.role == "goal_depth"; });
        samples.push_back(std::move(r));
      });
    }
  }
  if (on("goal_pcd"))
    attempt("goal_generation", [&] {
      samples.push_back(annotate::build_goal_generation_sample(ctx, tokens::GoalModality::pcd, manipulated));
    });
  if (on("action_prediction")) {
    attempt("action_prediction", [&] {
      samples.push_back(annotate::build_action_prediction_sample(ctx, annotate::ActionMode::dense, cfg.keyframe_speed_eps));
      samples.push_back(annotate::build_action_prediction_sample(ctx, annotate::ActionMode::key, cfg.keyframe_speed_eps));
    });
  }

  if (cfg.diversifier != DiversifierMode::off) {
    const auto facts = diversify::episode_facts(e, objects);
    for (auto& s : samples)
      if (is_templated(s)) s = diversify::diversify(s, client, seed, facts);
  }
  if (!rep.alignment)
    for (auto& s : samples) s.flags.emplace_back("unaligned-depth");

  // Materialize every referenced asset; drop samples whose asset cannot exist.
  std::set<std::string> referenced;
  for (const auto& s : samples)
    for (const auto& a : s.assets) referenced.insert(a.path);
  std::set<std::string> failed;
  for (std::size_t t = 0; t < n; ++t) {
    const std::string path = ctx.layout.scene_cloud(t);
    if (!referenced.count(path)) continue;
    PointCloud pc = geom3d::unproject(*depth[t], rgb_of(t), e.frames[t].camera);
    if (pc.empty()) {
      failed.insert(path);
      note("asset " + path + ": frame " + std::to_string(t) + " has no valid depth");
    } else {
      out.assets.push_back({path, std::move(pc)});
    }
  }
  if (referenced.count(ctx.layout.goal_image())) out.assets.push_back({ctx.layout.goal_image(), *e.frames[last].rgb});
  if (referenced.count(ctx.layout.goal_depth())) out.assets.push_back({ctx.layout.goal_depth(), *depth[last]});
  if (!failed.empty()) {
    std::erase_if(samples, [&](const SampleRecord& s) {
      return std::any_of(s.assets.begin(), s.assets.end(), [&](const AssetRef& a) { return failed.count(a.path) > 0; });
    });
  }

  std::sort(samples.begin(), samples.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.builder_id < b.builder_id; });
  rep.samples = samples.size();
  rep.produced = !samples.empty();
  if (!rep.produced) rep.skip_reason = rep.notes.empty() ? "no samples produced" : "no samples produced: " + rep.notes.back();
  return out;
}

// ---------------------------------------------------------------------------
// Report

DatasetReport::DatasetReport() {
  for (TaskType t : kAllTaskTypes) task_counts[std::string(task_name(t))] = 0;
}

AlignmentSummary DatasetReport::alignment() const {
  AlignmentSummary s;
  bool first = true;
  for (const auto& ep : episodes) {
    if (!ep.alignment) {
      ++s.unaligned;
      continue;
    }
    ++s.aligned;
    for (double c : *ep.alignment) {
      s.min_coefficient = first ? c : std::min(s.min_coefficient, c);
      s.max_coefficient = first ? c : std::max(s.max_coefficient, c);
      first = false;
    }
  }
  return s;
}

ordered_json DatasetReport::to_json() const {
  ordered_json j;
  j["generated_at"] = generated_at;
  j["total_samples"] = total_samples;
  j["shards"] = shards;
  j["task_counts"] = task_counts;
  j["flag_counts"] = flag_counts;
  const auto a = alignment();
  j["alignment"] = {{"aligned", a.aligned},
                    {"unaligned", a.unaligned},
                    {"min_coefficient", a.min_coefficient},
                    {"max_coefficient", a.max_coefficient}};
  std::size_t produced = 0;
  for (const auto& ep : episodes) produced += ep.produced ? 1 : 0;
  j["episodes_produced"] = produced;
  j["episodes_skipped"] = episodes.size() - produced;
  ordered_json eps = ordered_json::array();
  for (const auto& ep : episodes) {
    ordered_json e;
    e["id"] = ep.id;
    e["dataset"] = ep.dataset;
    e["status"] = ep.produced ? "produced" : "skipped";
    if (!ep.produced) e["skip_reason"] = ep.skip_reason;
    e["samples"] = ep.samples;
    e["notes"] = ep.notes;
    if (ep.alignment) e["alignment"] = *ep.alignment;
    eps.push_back(std::move(e));
  }
  j["episodes"] = std::move(eps);
  j["violations"] = violations;
  return j;
}

DatasetReport DatasetReport::from_json(const json& j) {
  DatasetReport r;
  r.generated_at = j.value("generated_at", "");
  r.total_samples = j.value("total_samples", std::size_t{0});
  r.shards = j.value("shards", std::size_t{0});
  if (j.contains("task_counts"))
    for (const auto& [k, v] : j["task_counts"].items()) r.task_counts[k] = v.get<std::size_t>();
  if (j.contains("flag_counts"))
    for (const auto& [k, v] : j["flag_counts"].items()) r.flag_counts[k] = v.get<std::size_t>();
  if (j.contains("episodes")) {
    for (const auto& e : j["episodes"]) {
      EpisodeReport ep;
      ep.id = e.value("id", "");
      ep.dataset = e.value("dataset", "");
      ep.produced = e.value("status", "") == "produced";
      ep.skip_reason = e.value("skip_reason", "");
      ep.samples = e.value("samples", std::size_t{0});
      if (e.contains("notes")) ep.notes = e["notes"].get<std::vector<std::string>>();
      if (e.contains("alignment")) ep.alignment = e["alignment"].get<std::vector<double>>();
      r.episodes.push_back(std::move(ep));
    }
  }
  if (j.contains("violations")) r.violations = j["violations"].get<std::vector<std::string>>();
  return r;
}

// ---------------------------------------------------------------------------
// Serialization and export

ordered_json sample_to_json(const SampleRecord& r) {
  ordered_json assets = ordered_json::array();
  for (const auto& a : r.assets) assets.push_back({{"role", a.role}, {"path", a.path}});
  ordered_json j;
  j["task_type"] = task_name(r.task_type);
  j["prompt"] = tokens::render(r.prompt);
  j["answer"] = tokens::render(r.answer);
  j["assets"] = std::move(assets);
  j["episode_id"] = r.episode_id;
  j["provenance"] = {{"template_id", r.provenance.template_id},
                     {"builder_id", r.builder_id},
                     {"seed", r.provenance.seed},
                     {"dataset", r.provenance.dataset},
                     {"flags", r.flags}};
  return j;
}

SampleRecord sample_from_json(const json& j) {
  auto str = [&](const json& obj, const char* key) -> std::string {
    if (!obj.is_object() || !obj.contains(key) || !obj[key].is_string())
      throw InvalidInput(std::string(key) + ": missing or not a string");
    return obj[key].get<std::string>();
  };
  SampleRecord r;
  const auto task = task_from_name(str(j, "task_type"));
  if (!task) throw InvalidInput("task_type: unknown task " + j["task_type"].get<std::string>());
  r.task_type = *task;
  r.episode_id = str(j, "episode_id");
  if (!j.contains("assets") || !j["assets"].is_array()) throw InvalidInput("assets: missing or not an array");
  for (const auto& a : j["assets"]) r.assets.push_back({str(a, "role"), str(a, "path")});
  if (!j.contains("provenance")) throw InvalidInput("provenance: missing");
  const json& p = j["provenance"];
  r.provenance.template_id = str(p, "template_id");
  r.builder_id = str(p, "builder_id");
  r.provenance.dataset = str(p, "dataset");
  if (!p.contains("seed") || !p["seed"].is_number_integer()) throw InvalidInput("seed: missing or not an integer");
  r.provenance.seed = p["seed"].get<std::uint64_t>();
  if (p.contains("flags")) r.flags = p["flags"].get<std::vector<std::string>>();
  r.prompt = tokens::parse(str(j, "prompt"));
  r.answer = tokens::parse(str(j, "answer"));
  return r;
}

std::string shard_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "samples-%05zu.jsonl", index);
  return buf;
}

std::vector<fs::path> list_shards(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.starts_with("samples-") && name.ends_with(".jsonl")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_assets(const std::vector<AssetPayload>& assets, const fs::path& out_dir, io::CloudFormat format) {
  for (const auto& a : assets) {
    const fs::path p = out_dir / a.path;
    std::visit(
        [&](const auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, PointCloud>) io::write_pointcloud(c, p, format);
          else if constexpr (std::is_same_v<T, RgbImage>) io::write_rgb_png(p, c);
          else io::write_depth_f32(p, c);
        },
        a.content);
  }
}

void export_samples(std::vector<SampleRecord> records, const fs::path& out_dir, std::size_t shard_size,
                    DatasetReport& report) {
  if (shard_size == 0) throw InvalidInput("shard_size must be >= 1");
  std::sort(records.begin(), records.end(), [](const SampleRecord& a, const SampleRecord& b) {
    return std::tie(a.episode_id, a.builder_id) < std::tie(b.episode_id, b.builder_id);
  });
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].key() == records[i - 1].key()) throw InvalidInput("duplicate sample id " + records[i].key());

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError(out_dir.string(), "cannot create output directory");
  for (const auto& old : list_shards(out_dir)) fs::remove(old);

  for (auto& [task, count] : report.task_counts) count = 0;
  report.flag_counts.clear();
  for (const auto& r : records) {
    ++report.task_counts[std::string(task_name(r.task_type))];
    for (const auto& f : r.flags) ++report.flag_counts[f];
  }
  report.total_samples = records.size();
  report.shards = (records.size() + shard_size - 1) / shard_size;

  for (std::size_t k = 0; k < report.shards; ++k) {
    std::string content;
    const std::size_t end = std::min(records.size(), (k + 1) * shard_size);
    for (std::size_t i = k * shard_size; i < end; ++i) content += sample_to_json(records[i]).dump() + "\n";
    io::write_text(out_dir / shard_name(k), content);
  }
  io::write_text(out_dir / "vocab.json", tokens::Vocab::instance().to_json() + "\n");
  io::write_text(out_dir / "report.json", report.to_json().dump(2) + "\n");
}

namespace {

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Reads only the id of a manifest; empty when unreadable.
std::string peek_id(const fs::path& manifest) {
  try {
    const json j = json::parse(io::read_text(manifest));
    if (j.is_object() && j.contains("id") && j["id"].is_string()) return j["id"].get<std::string>();
  } catch (const std::exception&) {
  }
  return {};
}

template <typename F>
void parallel_for(std::size_t count, int workers, F&& fn) {
  const std::size_t threads = std::min<std::size_t>(std::max(1, workers), std::max<std::size_t>(1, count));
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (std::size_t i = next++; i < count; i = next++) fn(i);
  };
  if (threads == 1) {
    loop();
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(loop);
  for (auto& th : pool) th.join();
}

}  // namespace

DatasetReport run(const std::vector<fs::path>& manifests, const Config& cfg, const fs::path& out_dir) {
  if (const auto v = cfg.violations(); !v.empty()) throw InvalidInput("config: " + v.front());
  auto client = make_client(cfg);

  // Two manifests with the same id would share an asset directory; the first one listed wins.
  std::vector<std::string> duplicate_of(manifests.size());
  {
    std::vector<std::string> ids(manifests.size());
    parallel_for(manifests.size(), cfg.workers, [&](std::size_t i) { ids[i] = peek_id(manifests[i]); });
    std::map<std::string, std::size_t> first;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i].empty()) continue;
      const std::string dir = annotate::AssetLayout::for_episode(ids[i]).episode_dir;
      auto [it, fresh] = first.emplace(dir, i);
      if (!fresh) duplicate_of[i] = manifests[it->second].string();
    }
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError(out_dir.string(), "cannot create output directory");

  std::vector<std::vector<SampleRecord>> samples(manifests.size());
  std::vector<EpisodeReport> reports(manifests.size());
  parallel_for(manifests.size(), cfg.workers, [&](std::size_t i) {
    EpisodeReport& rep = reports[i];
    if (!duplicate_of[i].empty()) {
      rep.id = peek_id(manifests[i]);
      rep.skip_reason = "duplicate episode id (also in " + duplicate_of[i] + ")";
      return;
    }
    try {
      const Episode e = load_episode(manifests[i]);
      EpisodeResult res = annotate_episode(e, cfg, client.get());
      write_assets(res.assets, out_dir, cfg.pointcloud_format);
      samples[i] = std::move(res.samples);
      rep = std::move(res.report);
    } catch (const EpisodeLoadError& err) {
      rep.id = peek_id(manifests[i]);
      rep.skip_reason = "load error at " + err.field() + ": " + err.what();
    } catch (const std::exception& err) {
      rep.id = peek_id(manifests[i]);
      rep.skip_reason = std::string("error: ") + err.what();
    }
    if (rep.id.empty()) rep.id = manifests[i].string();
  });

  DatasetReport report;
  report.generated_at = utc_now();
  std::vector<SampleRecord> all;
  for (std::size_t i = 0; i < manifests.size(); ++i) {
    for (auto& s : samples[i]) all.push_back(std::move(s));
    report.episodes.push_back(std::move(reports[i]));
  }
  export_samples(std::move(all), out_dir, cfg.shard_size, report);
  return report;
}

// ---------------------------------------------------------------------------
// Validation and statistics

namespace {

std::vector<std::string> read_lines(const fs::path& p) {
  std::vector<std::string> lines;
  std::istringstream in(io::read_text(p));
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

DatasetReport validate_dataset(const fs::path& dir) {
  DatasetReport r;
  if (!fs::is_directory(dir)) {
    r.violations.push_back(dir.string() + ": not a directory");
    return r;
  }
  std::set<std::string> keys, missing;
  for (const auto& shard : list_shards(dir)) {
    ++r.shards;
    const auto lines = read_lines(shard);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      const std::string where = shard.filename().string() + ":" + std::to_string(ln + 1);
      auto violation = [&](const std::string& what) { r.violations.push_back(where + ": " + what); };
      json j;
      try {
        j = json::parse(lines[ln]);
      } catch (const json::exception&) {
        violation("invalid JSON");
        continue;
      }
      bool ok = true;
      for (const char* field : {"prompt", "answer"}) {
        if (!j.is_object() || !j.contains(field) || !j[field].is_string()) continue;
        const std::string s = j[field].get<std::string>();
        try {
          if (tokens::render(tokens::parse(s)) != s) {
            violation(std::string(field) + ": not in canonical form");
            ok = false;
          }
        } catch (const ParseError& err) {
          violation(std::string(field) + ": " + err.what());
          ok = false;
        }
      }
      if (!ok) continue;
      SampleRecord rec;
      try {
        rec = sample_from_json(j);
      } catch (const std::exception& err) {
        violation(err.what());
        continue;
      }
      if (!keys.insert(rec.key()).second) violation("duplicate sample id " + rec.key());
      for (const auto& a : rec.assets) {
        if (fs::is_regular_file(dir / a.path) || missing.count(a.path)) continue;
        missing.insert(a.path);
        violation("missing asset " + a.path);
      }
      ++r.task_counts[std::string(task_name(rec.task_type))];
      for (const auto& f : rec.flags) ++r.flag_counts[f];
      ++r.total_samples;
    }
  }
  const fs::path report_path = dir / "report.json";
  if (fs::is_regular_file(report_path)) {
    try {
      const auto stored = DatasetReport::from_json(json::parse(io::read_text(report_path)));
      for (const auto& [task, count] : r.task_counts) {
        const auto it = stored.task_counts.find(task);
        const std::size_t claimed = it == stored.task_counts.end() ? 0 : it->second;
        if (claimed != count)
          r.violations.push_back("report.json: " + task + " claims " + std::to_string(claimed) + ", found " +
                                 std::to_string(count));
      }
      if (stored.total_samples != r.total_samples)
        r.violations.push_back("report.json: total_samples claims " + std::to_string(stored.total_samples) +
                               ", found " + std::to_string(r.total_samples));
      r.episodes = stored.episodes;
    } catch (const std::exception& err) {
      r.violations.push_back(std::string("report.json: ") + err.what());
    }
  }
  return r;
}

std::vector<SampleRecord> read_samples(const fs::path& dir) {
  std::vector<SampleRecord> out;
  for (const auto& shard : list_shards(dir)) {
    const auto lines = read_lines(shard);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      try {
        out.push_back(sample_from_json(json::parse(lines[ln])));
      } catch (const std::exception& err) {
        throw InvalidInput(shard.filename().string() + ":" + std::to_string(ln + 1) + ": " + err.what());
      }
    }
  }
  return out;
}

Stats stats(const fs::path& dir) {
  Stats s;
  for (TaskType t : kAllTaskTypes) s.by_task[std::string(task_name(t))] = 0;
  for (const auto& shard : list_shards(dir)) {
    for (const auto& line : read_lines(shard)) {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception&) {
        continue;
      }
      if (!j.is_object() || !j.contains("task_type") || !j["task_type"].is_string()) continue;
      const std::string task = j["task_type"].get<std::string>();
      std::string dataset = "unknown";
      if (j.contains("provenance") && j["provenance"].is_object() && j["provenance"].contains("dataset") &&
          j["provenance"]["dataset"].is_string())
        dataset = j["provenance"]["dataset"].get<std::string>();
      ++s.by_task[task];
      ++s.by_dataset[dataset][task];
      ++s.total;
    }
  }
  return s;
}

std::string Stats::table() const {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s %10s\n", "task", "count");
  out << buf;
  for (const auto& [task, count] : by_task) {
    std::snprintf(buf, sizeof buf, "%-20s %10zu\n", task.c_str(), count);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%-20s %10zu\n", "total", total);
  out << buf;
  if (!by_dataset.empty()) {
    std::snprintf(buf, sizeof buf, "\n%-20s %-20s %10s\n", "dataset", "task", "count");
    out << buf;
    for (const auto& [dataset, tasks] : by_dataset) {
      for (const auto& [task, count] : tasks) {
        std::snprintf(buf, sizeof buf, "%-20s %-20s %10zu\n", dataset.c_str(), task.c_str(), count);
        out << buf;
      }
    }
  }
  return out.str();
}

}  // namespace embforge::pipeline
