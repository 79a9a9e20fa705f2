#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "embforge/config.hpp"
#include "embforge/core.hpp"
#include "embforge/diversifier.hpp"
#include "embforge/sample.hpp"

namespace embforge::pipeline {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

/// Reads a manifest and every file it references (paths relative to the
/// manifest's directory). Throws EpisodeLoadError naming the offending field.
Episode load_episode(const fs::path& manifest_path);

/// {"position": [[lo, hi] x3], "location": [[lo, hi] x3]}. Throws EpisodeLoadError.
WorkspaceBounds bounds_from_json(const nlohmann::json& bounds);

/// Parses a manifest already in memory; `base_dir` resolves relative paths.
Episode episode_from_json(const nlohmann::json& manifest, const fs::path& base_dir);

/// A file an exported sample points at, still in memory.
struct AssetPayload {
  std::string path;  // relative to the dataset root
  std::variant<PointCloud, RgbImage, DepthMap> content;
};

/// What happened to one episode.
struct EpisodeReport {
  std::string id;
  std::string dataset;
  bool produced = false;
  /// Why nothing was produced; set iff !produced.
  std::string skip_reason;
  /// Degraded stages that did not stop the episode.
  std::vector<std::string> notes;
  std::size_t samples = 0;
  /// Per-frame depth coefficients when alignment ran.
  std::optional<std::vector<double>> alignment;
};

struct EpisodeResult {
  std::vector<SampleRecord> samples;
  std::vector<AssetPayload> assets;
  EpisodeReport report;
};

/// Runs geometry and every enabled builder on one validated episode. Stage
/// failures become notes or a skip reason; nothing here throws for bad data.
EpisodeResult annotate_episode(const Episode& e, const Config& cfg, diversify::DiversifierClient* client = nullptr);

/// Client for the configured diversifier mode, or null when none is needed.
std::unique_ptr<diversify::DiversifierClient> make_client(const Config& cfg);

struct AlignmentSummary {
  std::size_t aligned = 0;
  std::size_t unaligned = 0;
  double min_coefficient = 0;
  double max_coefficient = 0;
};

struct DatasetReport {
  std::map<std::string, std::size_t> task_counts;  // every task name, zeros included
  std::map<std::string, std::size_t> flag_counts;
  std::vector<EpisodeReport> episodes;
  std::size_t total_samples = 0;
  std::size_t shards = 0;
  std::vector<std::string> violations;
  /// The only field that varies between identical runs.
  std::string generated_at;

  DatasetReport();
  AlignmentSummary alignment() const;
  nlohmann::ordered_json to_json() const;
  static DatasetReport from_json(const nlohmann::json& j);
};

/// One line of a shard: {task_type, prompt, answer, assets, episode_id, provenance}.
nlohmann::ordered_json sample_to_json(const SampleRecord& r);
/// Inverse of sample_to_json. Throws InvalidInput or ParseError.
SampleRecord sample_from_json(const nlohmann::json& j);

std::string shard_name(std::size_t index);

/// Writes an episode's assets under `out_dir`.
void write_assets(const std::vector<AssetPayload>& assets, const fs::path& out_dir, io::CloudFormat format);

/// Sorts records by (episode_id, builder_id), writes shards of at most
/// `shard_size` lines, vocab.json and report.json. Throws InvalidInput on
/// duplicate sample keys and IoError when the directory is unwritable.
/// Fills the report's counts and shard total.
void export_samples(std::vector<SampleRecord> records, const fs::path& out_dir, std::size_t shard_size,
                    DatasetReport& report);

/// Everything `annotate` does: load every manifest, annotate in parallel,
/// write assets, then export. The report lists every manifest exactly once.
DatasetReport run(const std::vector<fs::path>& manifests, const Config& cfg, const fs::path& out_dir);

/// Shard files of an exported dataset in index order.
std::vector<fs::path> list_shards(const fs::path& dir);

/// Re-parses every line, checks assets and counts.
DatasetReport validate_dataset(const fs::path& dir);

struct Stats {
  std::map<std::string, std::size_t> by_task;  // every task name
  std::map<std::string, std::map<std::string, std::size_t>> by_dataset;
  std::size_t total = 0;

  /// Plain-text table, one row per task then one per (dataset, task).
  std::string table() const;
};

Stats stats(const fs::path& dir);

/// Reads every sample of an exported dataset.
std::vector<SampleRecord> read_samples(const fs::path& dir);

}  // namespace embforge::pipeline
