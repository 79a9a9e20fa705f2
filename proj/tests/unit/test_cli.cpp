#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"

namespace {

struct Outcome {
  int status = -1;
  std::string out;
};

/// Runs a shell command; captures stdout and silences stderr.
Outcome sh(const std::string& cmd) {
  Outcome o;
  FILE* p = popen((cmd + " 2>/dev/null").c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) o.out.append(buf.data(), n);
  const int raw = pclose(p);
  o.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return o;
}

Outcome cli(const std::string& args) { return sh(std::string("'") + EMBFORGE_BIN + "' " + args); }

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("tokens encode-action prints one token line") {
  const auto o = cli("tokens encode-action \"0 0 0 0 0 0 1\"");
  CHECK(o.status == 0);
  CHECK(o.out == "<aloc0><aloc0><aloc0><arot128><arot128><arot128><gripper1>\n");
}

TEST_CASE("tokens decode-box and parse") {
  auto o = cli("tokens decode-box \"<loc0><loc0><loc0><loc255><loc255><loc255>\"");
  CHECK(o.status == 0);
  CHECK_FALSE(o.out.empty());
  o = cli("tokens parse \"<obj> cup </obj><loc1><loc2><loc3><loc4><loc5><loc6>\"");
  CHECK(o.status == 0);
  o = cli("tokens parse \"<obj> cup\"");
  CHECK(o.status == 1);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(cli("stats --no-such-flag .").status == 2);
  CHECK(cli("").status == 2);
  CHECK(cli("--config /nonexistent/config.json vocab").status == 2);
  CHECK(cli("--workers 0 vocab").status == 2);
  CHECK(cli("annotate --out /tmp/x").status == 2);
}

TEST_CASE("help lists every config key") {
  const auto o = cli("--help");
  CHECK(o.status == 0);
  for (const char* key : {"--tasks.localization", "--geom.tau_flow", "--geom.trim_q", "--export.shard_size",
                          "--diversifier.mode", "--matrix.file", "--seed", "--workers"})
    CHECK_MESSAGE(o.out.find(key) != std::string::npos, key);
}

TEST_CASE("vocab prints the full vocabulary") {
  const auto o = cli("vocab");
  CHECK(o.status == 0);
  const auto j = nlohmann::json::parse(o.out);
  CHECK(j.dump().find("<gripper1>") != std::string::npos);
}

TEST_CASE("fixture, annotate, validate and stats end to end") {
  oracle::TempDir tmp;
  const auto fx = tmp / "fixture";
  const auto out = tmp / "out";
  REQUIRE(sh(std::string("'") + MAKE_FIXTURE_BIN + "' --out " + q(fx) +
             " --episodes 2 --frames 6 --width 64 --height 48")
              .status == 0);
  CHECK(cli("ingest --list " + q(fx / "manifests.txt")).status == 0);
  CHECK(cli("--workers 2 annotate --list " + q(fx / "manifests.txt") + " --out " + q(out)).status == 0);

  const auto v = cli("validate " + q(out));
  CHECK(v.status == 0);
  CHECK(v.out.find("violations: 0") != std::string::npos);

  const auto s = cli("stats --json " + q(out));
  CHECK(s.status == 0);
  const auto j = nlohmann::json::parse(s.out);
  CHECK(j["total"].get<int>() > 0);

  const auto again = tmp / "resharded";
  CHECK(cli("--export.shard_size 3 export --input " + q(out) + " --out " + q(again)).status == 0);
  CHECK(cli("validate " + q(again)).status == 0);

  std::filesystem::remove_all(out / "assets");
  CHECK(cli("validate " + q(out)).status == 1);
}

TEST_CASE("stats on an empty directory succeeds") {
  oracle::TempDir tmp;
  const auto o = cli("stats " + q(tmp.path()));
  CHECK(o.status == 0);
  CHECK(o.out.find("total") != std::string::npos);
}

TEST_CASE("ingest reports a broken manifest with status 1") {
  oracle::TempDir tmp;
  std::FILE* f = std::fopen((tmp / "m.json").c_str(), "w");
  REQUIRE(f != nullptr);
  std::fputs("{\"schema_version\": 9}", f);
  std::fclose(f);
  CHECK(cli("ingest " + q(tmp / "m.json")).status == 1);
}
