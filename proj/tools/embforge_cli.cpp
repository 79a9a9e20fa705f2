// embforge command-line front end.
//
// Exit status: 0 on success, 1 when some items failed (details on stderr),
// 2 on usage errors. Data goes to files or stdout, diagnostics to stderr.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "embforge/codec.hpp"
#include "embforge/config.hpp"
#include "embforge/errors.hpp"
#include "embforge/pipeline.hpp"
#include "embforge/sequence.hpp"
#include "embforge/vocab.hpp"

namespace fs = std::filesystem;
using namespace embforge;

namespace {

constexpr int kOk = 0;
constexpr int kItemFailure = 1;
constexpr int kUsage = 2;

/// Thrown for bad invocations detected after flag parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<fs::path> gather_manifests(const std::vector<std::string>& positional, const std::string& list_file) {
  std::vector<fs::path> out;
  for (const auto& p : positional) out.emplace_back(p);
  if (!list_file.empty()) {
    std::ifstream in(list_file);
    if (!in) throw UsageError("cannot read manifest list " + list_file);
    const fs::path base = fs::path(list_file).parent_path();
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      fs::path p(line);
      out.push_back(p.is_relative() ? base / p : p);
    }
  }
  if (out.empty()) throw UsageError("no manifests given");
  return out;
}

/// Arguments, or stdin lines when there are none.
std::vector<std::string> inputs_or_stdin(const std::vector<std::string>& args) {
  if (!args.empty()) return args;
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(std::cin, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  return lines;
}

std::vector<double> numbers(const std::string& text, std::size_t expected) {
  std::istringstream in(text);
  std::vector<double> out;
  std::string word;
  while (in >> word) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(word, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != word.size()) throw InvalidInput("not a number: " + word);
    out.push_back(v);
  }
  if (out.size() != expected)
    throw InvalidInput("expected " + std::to_string(expected) + " numbers, got " + std::to_string(out.size()));
  return out;
}

std::vector<tokens::TokenId> token_ids(const std::string& text) {
  std::vector<tokens::TokenId> ids;
  for (const auto& piece : tokens::lex(text)) {
    if (const auto* id = std::get_if<tokens::TokenId>(&piece)) ids.push_back(*id);
    else if (std::get<std::string>(piece).find_first_not_of(" \t\r\n") != std::string::npos)
      throw InvalidInput("unexpected text \"" + std::get<std::string>(piece) + "\" among tokens");
  }
  return ids;
}

std::string render_ids(const std::vector<tokens::TokenId>& ids) {
  std::string out;
  for (auto id : ids) out += tokens::Vocab::instance().text(id);
  return out;
}

WorkspaceBounds load_bounds(const std::string& path) {
  if (path.empty()) return WorkspaceBounds::unit();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(path));
  } catch (const std::exception& e) {
    throw UsageError("cannot read bounds from " + path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("bounds")) throw UsageError(path + ": no \"bounds\" object");
  try {
    return pipeline::bounds_from_json(j["bounds"]);
  } catch (const EpisodeLoadError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

std::string fmt_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Runs `fn` on each input; failures go to stderr and make the exit status 1.
template <typename F>
int for_each_input(const std::vector<std::string>& args, F&& fn) {
  int status = kOk;
  for (const auto& in : inputs_or_stdin(args)) {
    try {
      std::cout << fn(in) << "\n";
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      status = kItemFailure;
    }
  }
  return status;
}

bool is_failure(const pipeline::EpisodeReport& ep) {
  if (ep.produced) return false;
  const auto& r = ep.skip_reason;
  return r.starts_with("load error") || r.starts_with("error") || r.starts_with("duplicate") ||
         r.starts_with("invalid episode");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embforge: builds 3D embodied instruction-tuning datasets from robot episodes"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file of flat dotted keys; flags override it");
  std::map<std::string, std::string> overrides;
  for (const auto& key : config_keys()) {
    static constexpr const char* kTypeNames[] = {"BOOL", "INT", "FLOAT", "TEXT"};
    app.add_option("--" + std::string(key.name), overrides[std::string(key.name)], std::string(key.help))
        ->type_name(kTypeNames[static_cast<int>(key.kind)]);
  }

  std::vector<std::string> manifests;
  std::string list_file;
  auto* ingest = app.add_subcommand("ingest", "Load and validate episode manifests");
  ingest->add_option("manifests", manifests, "Manifest files");
  ingest->add_option("--list", list_file, "Text file with one manifest path per line");

  std::string out_dir;
  auto* annotate = app.add_subcommand("annotate", "Annotate episodes and export a dataset");
  annotate->add_option("manifests", manifests, "Manifest files");
  annotate->add_option("--list", list_file, "Text file with one manifest path per line");
  annotate->add_option("--out", out_dir, "Output dataset directory")->required();

  std::string input_dir;
  auto* exporter = app.add_subcommand("export", "Re-shard an exported dataset into a new directory");
  exporter->add_option("--input", input_dir, "Existing dataset directory")->required();
  exporter->add_option("--out", out_dir, "New dataset directory")->required();

  std::string dataset_dir;
  auto* validate = app.add_subcommand("validate", "Check an exported dataset for grammar and asset violations");
  validate->add_option("dir", dataset_dir, "Dataset directory")->required();

  bool stats_json = false;
  auto* stats = app.add_subcommand("stats", "Sample counts per task and per source dataset");
  stats->add_option("dir", dataset_dir, "Dataset directory")->required();
  stats->add_flag("--json", stats_json, "Print JSON instead of a table");

  std::string vocab_out;
  auto* vocab = app.add_subcommand("vocab", "Emit vocab.json");
  vocab->add_option("--out", vocab_out, "Write to this file instead of stdout");

  std::string bounds_file;
  std::vector<std::string> token_args;
  auto* tok = app.add_subcommand("tokens", "Encode or decode interaction tokens (reads stdin without arguments)");
  tok->require_subcommand(1);
  tok->add_option("--bounds", bounds_file, "Manifest or JSON file with a \"bounds\" object (default: unit cube)");
  auto* enc_action = tok->add_subcommand("encode-action", "\"x y z roll pitch yaw gripper\" per step, steps joined");
  auto* dec_action = tok->add_subcommand("decode-action", "Action tokens to one \"x y z roll pitch yaw gripper\" line per step");
  auto* enc_box = tok->add_subcommand("encode-box", "\"min_x min_y min_z max_x max_y max_z\" to six loc tokens");
  auto* dec_box = tok->add_subcommand("decode-box", "Six loc tokens to box corners");
  auto* parse = tok->add_subcommand("parse", "Parse a token sequence and print its canonical form");
  for (auto* sub : {enc_action, dec_action, enc_box, dec_box, parse}) {
    sub->add_option("input", token_args, "Inputs; read from stdin when absent");
    sub->fallthrough();
  }
  tok->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  Config cfg;
  try {
    if (!config_path.empty()) cfg = Config::load(config_path);
    for (const auto& key : config_keys()) {
      const std::string name(key.name);
      if (app.count("--" + name) > 0) cfg.set_text(name, overrides[name]);
    }
    if (const auto v = cfg.violations(); !v.empty()) throw InvalidInput("config: " + v.front());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*ingest) {
      int status = kOk;
      for (const auto& m : gather_manifests(manifests, list_file)) {
        try {
          const Episode e = pipeline::load_episode(m);
          std::cout << "ok " << m.string() << " " << e.id << " frames=" << e.frames.size() << "\n";
        } catch (const EpisodeLoadError& err) {
          std::cerr << m.string() << ": " << err.what() << "\n";
          status = kItemFailure;
        }
      }
      return status;
    }

    if (*annotate) {
      const auto list = gather_manifests(manifests, list_file);
      const auto report = pipeline::run(list, cfg, out_dir);
      int status = kOk;
      std::size_t produced = 0;
      for (const auto& ep : report.episodes) {
        if (ep.produced) ++produced;
        else std::cerr << "skipped " << ep.id << ": " << ep.skip_reason << "\n";
        if (is_failure(ep)) status = kItemFailure;
      }
      std::cerr << "episodes: " << produced << " produced, " << report.episodes.size() - produced
                << " skipped; samples: " << report.total_samples << " in " << report.shards << " shard(s)\n";
      return status;
    }

    if (*exporter) {
      if (fs::exists(out_dir) && fs::exists(input_dir) && fs::equivalent(input_dir, out_dir))
        throw UsageError("--out must differ from --input");
      auto records = pipeline::read_samples(input_dir);
      pipeline::DatasetReport report;
      if (fs::is_regular_file(fs::path(input_dir) / "report.json"))
        report = pipeline::DatasetReport::from_json(nlohmann::json::parse(io::read_text(fs::path(input_dir) / "report.json")));
      if (fs::is_directory(fs::path(input_dir) / "assets")) {
        fs::create_directories(out_dir);
        fs::copy(fs::path(input_dir) / "assets", fs::path(out_dir) / "assets",
                 fs::copy_options::recursive | fs::copy_options::overwrite_existing);
      }
      pipeline::export_samples(std::move(records), out_dir, cfg.shard_size, report);
      std::cerr << "samples: " << report.total_samples << " in " << report.shards << " shard(s)\n";
      return kOk;
    }

    if (*validate) {
      const auto report = pipeline::validate_dataset(dataset_dir);
      for (const auto& v : report.violations) std::cerr << v << "\n";
      std::cout << "samples: " << report.total_samples << ", violations: " << report.violations.size() << "\n";
      return report.violations.empty() ? kOk : kItemFailure;
    }

    if (*stats) {
      const auto s = pipeline::stats(dataset_dir);
      if (stats_json) {
        nlohmann::ordered_json j;
        j["by_task"] = s.by_task;
        j["by_dataset"] = s.by_dataset;
        j["total"] = s.total;
        std::cout << j.dump(2) << "\n";
      } else {
        std::cout << s.table();
      }
      return kOk;
    }

    if (*vocab) {
      const std::string text = tokens::Vocab::instance().to_json() + "\n";
      if (vocab_out.empty()) std::cout << text;
      else io::write_text(vocab_out, text);
      return kOk;
    }

    if (*tok) {
      const WorkspaceBounds bounds = load_bounds(bounds_file);
      if (*enc_action) {
        // Every argument is one step; all steps form one sequence.
        std::vector<ActionStep> steps;
        for (const auto& in : inputs_or_stdin(token_args)) {
          const auto v = numbers(in, 7);
          if (v[6] != 0 && v[6] != 1) throw InvalidInput("gripper must be 0 or 1");
          steps.push_back({Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5]), static_cast<int>(v[6])});
        }
        if (steps.empty()) throw UsageError("no action steps given");
        const auto enc = tokens::encode_action_seq(steps, bounds);
        if (enc.clamped) std::cerr << "warning: " << enc.clamped << " value(s) clamped to the bounds\n";
        std::cout << render_ids(enc.tokens) << "\n";
        return kOk;
      }
      if (*dec_action) {
        return for_each_input(token_args, [&](const std::string& in) {
          std::string out;
          for (const auto& s : tokens::decode_action_seq(token_ids(in), bounds)) {
            if (!out.empty()) out += "\n";
            for (int a = 0; a < 3; ++a) out += fmt_number(s.position[a]) + " ";
            for (int a = 0; a < 3; ++a) out += fmt_number(s.rotation[a]) + " ";
            out += std::to_string(s.gripper);
          }
          return out;
        });
      }
      if (*enc_box) {
        return for_each_input(token_args, [&](const std::string& in) {
          const auto v = numbers(in, 6);
          Aabb3 box{Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])};
          const auto enc = tokens::encode_bbox(box, bounds);
          if (enc.clamped) std::cerr << "warning: " << enc.clamped << " value(s) clamped to the bounds\n";
          return render_ids(enc.tokens);
        });
      }
      if (*dec_box) {
        return for_each_input(token_args, [&](const std::string& in) {
          const auto d = tokens::decode_bbox(token_ids(in), bounds);
          if (d.swapped) std::cerr << "warning: an axis had min > max and was swapped\n";
          std::string out;
          for (int a = 0; a < 3; ++a) out += fmt_number(d.box.min[a]) + " ";
          for (int a = 0; a < 3; ++a) out += fmt_number(d.box.max[a]) + (a < 2 ? " " : "");
          return out;
        });
      }
      if (*parse) {
        return for_each_input(token_args, [&](const std::string& in) { return tokens::render(tokens::parse(in)); });
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kItemFailure;
  }
  return kOk;
}
