#include "embforge/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "embforge/errors.hpp"

namespace embforge {

using nlohmann::json;

namespace {

constexpr ConfigKey kKeys[] = {
    {"tasks.embodied_qa", KeyKind::boolean, "Emit embodied QA samples from manifest qa records"},
    {"tasks.task_caption", KeyKind::boolean, "Emit task caption samples"},
    {"tasks.whatif_qa", KeyKind::boolean, "Emit what-if QA samples"},
    {"tasks.dense_caption", KeyKind::boolean, "Emit dense caption samples"},
    {"tasks.localization", KeyKind::boolean, "Emit localization samples"},
    {"tasks.verification", KeyKind::boolean, "Emit verification samples"},
    {"tasks.goal_generation", KeyKind::boolean, "Emit goal generation samples"},
    {"tasks.action_prediction", KeyKind::boolean, "Emit action prediction samples"},
    {"goal.image", KeyKind::boolean, "Goal generation with an RGB goal image"},
    {"goal.depth", KeyKind::boolean, "Attach the goal depth map to image goals"},
    {"goal.pcd", KeyKind::boolean, "Goal generation with a goal point cloud"},
    {"matrix.file", KeyKind::text, "Per-dataset enablement matrix JSON"},
    {"geom.tau_flow", KeyKind::real, "Flow magnitude (px) separating static from moving pixels"},
    {"geom.trim_q", KeyKind::real, "Quantile trimmed from each side of a lifted object box"},
    {"verification.k", KeyKind::integer, "Frames at the end of an episode that count as finished"},
    {"verification.negatives", KeyKind::integer, "Unfinished frames sampled per episode"},
    {"keyframe.speed_eps", KeyKind::real, "Step length (m) below which a local minimum is a pause"},
    {"export.shard_size", KeyKind::integer, "Samples per JSONL shard"},
    {"export.pointcloud_format", KeyKind::text, "Point cloud asset format: bin_xyzrgb or ply"},
    {"seed", KeyKind::integer, "Global seed"},
    {"workers", KeyKind::integer, "Parallel episode workers"},
    {"diversifier.mode", KeyKind::text, "off, offline, replay or http"},
    {"diversifier.endpoint", KeyKind::text, "Chat-completion URL for http mode"},
    {"diversifier.replay_dir", KeyKind::text, "Directory of recorded replies for replay mode"},
    {"diversifier.model", KeyKind::text, "Model name sent in http mode"},
    {"diversifier.timeout_ms", KeyKind::integer, "Per-request timeout in http mode"},
    {"diversifier.max_in_flight", KeyKind::integer, "Concurrent requests in http mode"},
};

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

const ConfigKey* find_key(std::string_view name) {
  for (const auto& k : kKeys)
    if (k.name == name) return &k;
  return nullptr;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view why) {
  throw InvalidInput("config " + std::string(key) + ": " + std::string(why));
}

bool as_bool(std::string_view key, const json& v) {
  if (!v.is_boolean()) bad_value(key, "expected true or false");
  return v.get<bool>();
}

std::int64_t as_int(std::string_view key, const json& v) {
  if (!v.is_number_integer()) bad_value(key, "expected an integer");
  return v.get<std::int64_t>();
}

std::size_t as_count(std::string_view key, const json& v) {
  const auto i = as_int(key, v);
  if (i < 0) bad_value(key, "must not be negative");
  return static_cast<std::size_t>(i);
}

double as_real(std::string_view key, const json& v) {
  if (!v.is_number()) bad_value(key, "expected a number");
  return v.get<double>();
}

std::string as_text(std::string_view key, const json& v) {
  if (!v.is_string()) bad_value(key, "expected a string");
  return v.get<std::string>();
}

}  // namespace

std::string_view diversifier_mode_name(DiversifierMode m) {
  switch (m) {
    case DiversifierMode::off: return "off";
    case DiversifierMode::offline: return "offline";
    case DiversifierMode::replay: return "replay";
    case DiversifierMode::http: return "http";
  }
  return "off";
}

std::span<const ConfigKey> config_keys() { return kKeys; }

Config::Config() {
  for (TaskType t : kAllTaskTypes) tasks[t] = true;
}

void Config::set(std::string_view key, const json& v) {
  if (key.starts_with("tasks.")) {
    const auto t = task_from_name(key.substr(6));
    if (!t) bad_value(key, "unknown task");
    tasks[*t] = as_bool(key, v);
  } else if (key == "goal.image") {
    goal_image = as_bool(key, v);
  } else if (key == "goal.depth") {
    goal_depth = as_bool(key, v);
  } else if (key == "goal.pcd") {
    goal_pcd = as_bool(key, v);
  } else if (key == "matrix.file") {
    load_matrix(as_text(key, v));
  } else if (key.starts_with("matrix.")) {
    const auto rest = key.substr(7);
    const auto dot = rest.rfind('.');
    if (dot == std::string_view::npos || dot == 0) bad_value(key, "expected matrix.<dataset>.<column>");
    const auto column = rest.substr(dot + 1);
    if (std::find(kMatrixColumns.begin(), kMatrixColumns.end(), column) == kMatrixColumns.end())
      bad_value(key, "unknown matrix column");
    matrix[lower(rest.substr(0, dot))][std::string(column)] = as_bool(key, v);
  } else if (key == "geom.tau_flow") {
    tau_flow = as_real(key, v);
  } else if (key == "geom.trim_q") {
    trim_q = as_real(key, v);
  } else if (key == "verification.k") {
    verification_k = as_count(key, v);
  } else if (key == "verification.negatives") {
    verification_negatives = as_count(key, v);
  } else if (key == "keyframe.speed_eps") {
    keyframe_speed_eps = as_real(key, v);
  } else if (key == "export.shard_size") {
    shard_size = as_count(key, v);
  } else if (key == "export.pointcloud_format") {
    const auto f = as_text(key, v);
    if (f == "bin_xyzrgb") pointcloud_format = io::CloudFormat::bin_xyzrgb;
    else if (f == "ply") pointcloud_format = io::CloudFormat::ply;
    else bad_value(key, "expected bin_xyzrgb or ply");
  } else if (key == "seed") {
    if (v.is_number_unsigned()) seed = v.get<std::uint64_t>();
    else seed = static_cast<std::uint64_t>(as_count(key, v));
  } else if (key == "workers") {
    workers = static_cast<int>(as_int(key, v));
  } else if (key == "diversifier.mode") {
    const auto m = as_text(key, v);
    if (m == "off") diversifier = DiversifierMode::off;
    else if (m == "offline") diversifier = DiversifierMode::offline;
    else if (m == "replay") diversifier = DiversifierMode::replay;
    else if (m == "http") diversifier = DiversifierMode::http;
    else bad_value(key, "expected off, offline, replay or http");
  } else if (key == "diversifier.endpoint") {
    endpoint = as_text(key, v);
  } else if (key == "diversifier.replay_dir") {
    replay_dir = as_text(key, v);
  } else if (key == "diversifier.model") {
    model = as_text(key, v);
  } else if (key == "diversifier.timeout_ms") {
    timeout_ms = static_cast<int>(as_int(key, v));
  } else if (key == "diversifier.max_in_flight") {
    max_in_flight = static_cast<int>(as_int(key, v));
  } else {
    throw InvalidInput("config: unknown key " + std::string(key));
  }
}

void Config::set_text(std::string_view key, const std::string& text) {
  const ConfigKey* k = find_key(key);
  if (!k) throw InvalidInput("config: unknown key " + std::string(key));
  switch (k->kind) {
    case KeyKind::boolean: {
      const auto t = lower(text);
      if (t == "true" || t == "1" || t == "on") set(key, true);
      else if (t == "false" || t == "0" || t == "off") set(key, false);
      else bad_value(key, "expected true or false");
      break;
    }
    case KeyKind::integer: {
      std::uint64_t u = 0;
      std::int64_t i = 0;
      const char* end = text.data() + text.size();
      if (auto r = std::from_chars(text.data(), end, i); r.ec == std::errc{} && r.ptr == end) set(key, i);
      else if (auto r2 = std::from_chars(text.data(), end, u); r2.ec == std::errc{} && r2.ptr == end) set(key, u);
      else bad_value(key, "expected an integer");
      break;
    }
    case KeyKind::real: {
      std::size_t used = 0;
      double d = 0;
      try {
        d = std::stod(text, &used);
      } catch (const std::exception&) {
        bad_value(key, "expected a number");
      }
      if (used != text.size()) bad_value(key, "expected a number");
      set(key, d);
      break;
    }
    case KeyKind::text: set(key, text); break;
  }
}

Config Config::from_json(const json& j) {
  if (!j.is_object()) throw InvalidInput("config: expected a JSON object of dotted keys");
  Config c;
  for (const auto& [k, v] : j.items()) c.set(k, v);
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw InvalidInput("config " + path.string() + ": " + e.what());
  }
  // A relative matrix file is relative to the config file.
  if (j.is_object() && j.contains("matrix.file") && j["matrix.file"].is_string()) {
    std::filesystem::path m = j["matrix.file"].get<std::string>();
    if (m.is_relative()) j["matrix.file"] = (path.parent_path() / m).string();
  }
  return from_json(j);
}

void Config::load_matrix(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw InvalidInput("matrix " + path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("datasets") || !j["datasets"].is_object())
    throw InvalidInput("matrix " + path.string() + ": expected {\"datasets\": {...}}");
  for (const auto& [dataset, cols] : j["datasets"].items()) {
    if (!cols.is_object()) throw InvalidInput("matrix " + path.string() + ": " + dataset + " must be an object");
    for (const auto& [col, on] : cols.items()) set("matrix." + dataset + "." + col, on);
  }
}

bool Config::enabled(std::string_view dataset, std::string_view column) const {
  bool on = false;
  if (column == "goal_image") on = tasks.at(TaskType::goal_generation) && goal_image;
  else if (column == "goal_depth") on = enabled(dataset, "goal_image") && goal_depth;
  else if (column == "goal_pcd") on = tasks.at(TaskType::goal_generation) && goal_pcd;
  else if (auto t = task_from_name(column)) on = tasks.at(*t);
  if (!on) return false;
  const auto row = matrix.find(lower(dataset));
  if (row == matrix.end()) return true;
  const auto cell = row->second.find(std::string(column));
  return cell == row->second.end() || cell->second;
}

bool Config::any_task_enabled(std::string_view dataset) const {
  return std::any_of(kMatrixColumns.begin(), kMatrixColumns.end(),
                     [&](std::string_view c) { return c != "goal_depth" && enabled(dataset, c); });
}

std::vector<std::string> Config::violations() const {
  std::vector<std::string> out;
  if (!(tau_flow > 0)) out.emplace_back("geom.tau_flow must be > 0");
  if (!(trim_q >= 0 && trim_q < 0.5)) out.emplace_back("geom.trim_q must lie in [0, 0.5)");
  if (verification_k < 1) out.emplace_back("verification.k must be >= 1");
  if (!(keyframe_speed_eps > 0)) out.emplace_back("keyframe.speed_eps must be > 0");
  if (shard_size < 1) out.emplace_back("export.shard_size must be >= 1");
  if (workers < 1) out.emplace_back("workers must be >= 1");
  if (timeout_ms < 1) out.emplace_back("diversifier.timeout_ms must be >= 1");
  if (max_in_flight < 1) out.emplace_back("diversifier.max_in_flight must be >= 1");
  if (diversifier == DiversifierMode::http && endpoint.empty())
    out.emplace_back("diversifier.endpoint is required in http mode");
  if (diversifier == DiversifierMode::replay && replay_dir.empty())
    out.emplace_back("diversifier.replay_dir is required in replay mode");
  return out;
}

nlohmann::ordered_json Config::to_json() const {
  nlohmann::ordered_json j;
  for (TaskType t : kAllTaskTypes) j["tasks." + std::string(task_name(t))] = tasks.at(t);
  j["goal.image"] = goal_image;
  j["goal.depth"] = goal_depth;
  j["goal.pcd"] = goal_pcd;
  for (const auto& [ds, cols] : matrix)
    for (const auto& [col, on] : cols) j["matrix." + ds + "." + col] = on;
  j["geom.tau_flow"] = tau_flow;
  j["geom.trim_q"] = trim_q;
  j["verification.k"] = verification_k;
  j["verification.negatives"] = verification_negatives;
  j["keyframe.speed_eps"] = keyframe_speed_eps;
  j["export.shard_size"] = shard_size;
  j["export.pointcloud_format"] = pointcloud_format == io::CloudFormat::ply ? "ply" : "bin_xyzrgb";
  j["seed"] = seed;
  j["workers"] = workers;
  j["diversifier.mode"] = diversifier_mode_name(diversifier);
  j["diversifier.endpoint"] = endpoint;
  j["diversifier.replay_dir"] = replay_dir;
  j["diversifier.model"] = model;
  j["diversifier.timeout_ms"] = timeout_ms;
  j["diversifier.max_in_flight"] = max_in_flight;
  return j;
}

}  // namespace embforge
