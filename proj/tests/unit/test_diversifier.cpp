#include <atomic>
#include <thread>

#include "doctest.h"
#include "embforge/diversifier.hpp"
#include "embforge/errors.hpp"
#include "episodes.hpp"
#include "json.hpp"
#include "oracles.hpp"

// After the project headers: <resolv.h> defines a `_res` macro.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

using namespace embforge;
using namespace embforge::diversify;
namespace tk = embforge::tokens;

namespace {

struct Fixture {
  Episode e = testep::flat_episode(4);
  annotate::BuildContext ctx{e, annotate::AssetLayout::for_episode("ep"), 9};
  annotate::GroundedObject block{"red block", {Vec3(0.1, 0.1, 0.1), Vec3(0.2, 0.2, 0.2)}, 0};
};

/// Returns a fixed reply, or nothing.
class CannedClient final : public DiversifierClient {
 public:
  explicit CannedClient(std::optional<DiversifierReply> r) : reply_(std::move(r)) {}
  std::optional<DiversifierReply> complete(const DiversifierRequest&) override {
    ++calls;
    return reply_;
  }
  int calls = 0;

 private:
  std::optional<DiversifierReply> reply_;
};

std::string chat_response(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

}  // namespace

TEST_CASE("request hash is stable and sensitive to content") {
  Fixture f;
  const auto sample = annotate::build_localization_sample(f.ctx, f.block, 0);
  const auto facts = episode_facts(f.e, std::span(&f.block, 1));
  const auto a = rewrite_request(sample, facts, 1);
  const auto b = rewrite_request(sample, facts, 1);
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  CHECK(a.hash() != rewrite_request(sample, facts, 2).hash());
  CHECK(a.violations().empty());
  DiversifierRequest empty;
  CHECK(empty.violations().size() == 2);
  CHECK(facts.objects.size() == 1);
  CHECK(facts.objects[0].location == "<loc25><loc25><loc25><loc51><loc51><loc51>");
  CHECK(facts.duration_s == doctest::Approx(0.3));
}

TEST_CASE("every task gets two or three demonstrations") {
  for (TaskType t : kAllTaskTypes) {
    const auto d = default_demonstrations(t);
    CHECK(d.size() >= 2);
    CHECK(d.size() <= 3);
  }
}

TEST_CASE("offline paraphrase changes wording but never tokens") {
  Fixture f;
  const auto sample = annotate::build_dense_caption_sample(f.ctx, f.block, 0);
  bool any_changed = false;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = offline_paraphrase(sample, seed);
    CHECK(same_token_multiset(p.prompt, sample.prompt));
    CHECK(tk::vocab_tokens(p.prompt) == tk::vocab_tokens(sample.prompt));
    CHECK(p.answer == sample.answer);
    CHECK(p.provenance.template_id == "diversified");
    CHECK(offline_paraphrase(sample, seed).prompt == p.prompt);
    any_changed |= tk::render(p.prompt) != tk::render(sample.prompt);
  }
  CHECK(any_changed);
}

TEST_CASE("diversify accepts token-preserving replies only") {
  Fixture f;
  const auto sample = annotate::build_localization_sample(f.ctx, f.block, 0);
  const std::string box = tk::render(sample.answer);

  CannedClient good(DiversifierReply{"Look at <scene></scene> and find the red block.", box});
  const auto ok = diversify::diversify(sample, &good, 3);
  CHECK(ok.provenance.template_id == "diversified");
  CHECK(tk::render(ok.prompt) == "Look at <scene></scene> and find the red block.");

  CannedClient dropped(DiversifierReply{"Find the red block.", box});
  const auto kept = diversify::diversify(sample, &dropped, 3);
  CHECK(kept.prompt == sample.prompt);
  CHECK(kept.flags == std::vector<std::string>{"undiversified"});

  CannedClient malformed(DiversifierReply{"<obj> broken", box});
  CHECK(diversify::diversify(sample, &malformed, 3).flags == std::vector<std::string>{"undiversified"});

  CannedClient silent(std::nullopt);
  CHECK(diversify::diversify(sample, &silent, 3).flags == std::vector<std::string>{"undiversified"});
  CHECK(silent.calls == 1);
}

TEST_CASE("what-if samples fall back to the offline form") {
  Fixture f;
  const auto req = build_whatif_request(f.e, std::span(f.e.actions).first(2), {}, 4);
  CHECK(req.facts.action_tokens.find("<ACT_SEP>") != std::string::npos);
  const auto offline = whatif_sample(f.ctx, req, nullptr);
  CHECK(offline.provenance.template_id == "whatif_offline");
  CHECK(offline.flags.empty());
  CHECK(tk::render(offline.prompt) == "What will happen if the robot executes " + req.facts.action_tokens + "?");

  CannedClient wrong(DiversifierReply{"What if it waits?", "Nothing."});
  const auto fb = whatif_sample(f.ctx, req, &wrong);
  CHECK(fb.provenance.template_id == "whatif_offline");
  CHECK(fb.flags == std::vector<std::string>{"diversifier-fallback"});

  CannedClient right(DiversifierReply{"Suppose the robot runs " + req.facts.action_tokens + ". Then?", "It moves."});
  CHECK(whatif_sample(f.ctx, req, &right).provenance.template_id == "diversified");
  CHECK_THROWS_AS(build_whatif_request(f.e, {}, {}, 4), InvalidInput);
}

TEST_CASE("replay client serves recorded replies by request hash") {
  oracle::TempDir dir("replay");
  Fixture f;
  const auto sample = annotate::build_task_caption_sample(f.ctx);
  const auto req = rewrite_request(sample, {}, 1);
  ReplayClient client(dir.path());
  CHECK_FALSE(client.complete(req).has_value());
  client.record(req, {"a", "b"});
  const auto r = client.complete(req);
  REQUIRE(r.has_value());
  CHECK(r->prompt == "a");
  CHECK(r->answer == "b");
  CHECK(std::filesystem::exists(dir / (req.hash() + ".json")));
}

TEST_CASE("chat bodies and responses") {
  Fixture f;
  const auto req = rewrite_request(annotate::build_task_caption_sample(f.ctx), {}, 1);
  const auto body = nlohmann::json::parse(HttpClient::chat_body(req, "m"));
  CHECK(body["model"] == "m");
  CHECK(body["messages"].size() == 1 + 2 * req.demonstrations.size() + 1);
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"].back()["content"].get<std::string>().find("Prompt: ") != std::string::npos);

  const auto ok = HttpClient::parse_chat_response(chat_response(R"({"prompt":"p","answer":"a"})"));
  REQUIRE(ok.has_value());
  CHECK(ok->prompt == "p");
  CHECK_FALSE(HttpClient::parse_chat_response("not json").has_value());
  CHECK_FALSE(HttpClient::parse_chat_response(chat_response("plain text")).has_value());
  CHECK_FALSE(HttpClient::parse_chat_response(R"({"choices":[]})").has_value());
  CHECK_THROWS_AS(HttpClient(HttpClientConfig{"localhost:1/x"}), InvalidInput);
}

TEST_CASE("http client talks to a chat-completion server") {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    auth = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    res.set_content(chat_response(nlohmann::json{{"prompt", "rewritten " + body["model"].get<std::string>()},
                                                 {"answer", "ok"}}
                                      .dump()),
                    "application/json");
  });
  server.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content(chat_response(R"({"prompt":"p","answer":"a"})"), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  Fixture f;
  const auto req = rewrite_request(annotate::build_task_caption_sample(f.ctx), {}, 1);
  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  HttpClientConfig cfg{base + "/v1/chat/completions", "test-model", "secret", std::chrono::milliseconds(2000), 2};
  HttpClient client(cfg);
  const auto r = client.complete(req);
  REQUIRE(r.has_value());
  CHECK(r->prompt == "rewritten test-model");
  CHECK(auth == "Bearer secret");
  CHECK(hits == 1);

  HttpClient missing(HttpClientConfig{base + "/nope", "m", "", std::chrono::milliseconds(2000), 1});
  CHECK_FALSE(missing.complete(req).has_value());

  HttpClient slow(HttpClientConfig{base + "/slow", "m", "", std::chrono::milliseconds(200), 1});
  CHECK_FALSE(slow.complete(req).has_value());

  server.stop();
  th.join();
}
