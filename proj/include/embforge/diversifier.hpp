#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

#include "embforge/annotate.hpp"
#include "embforge/sample.hpp"

namespace embforge::diversify {

/// One human-written few-shot exchange: the user turn and the reply it should get.
struct Demonstration {
  std::string user;
  std::string assistant;
};

struct ObjectFact {
  std::string label;
  /// Rendered loc tokens of its box.
  std::string location;
};

struct EpisodeFacts {
  std::string instruction;
  std::vector<ObjectFact> objects;
  double duration_s = 0;
  std::size_t frame_count = 0;
  /// Rendered action tokens, set for what-if requests.
  std::string action_tokens;
};

/// Everything sent to a chat-completion style rewriter for one sample.
struct DiversifierRequest {
  std::string system_prompt;
  std::vector<Demonstration> demonstrations;  // 2 or 3
  EpisodeFacts facts;
  TaskType task = TaskType::task_caption;
  std::uint64_t seed = 0;
  /// Template-generated text to rewrite; empty when the task has no template.
  std::string prompt;
  std::string answer;

  std::vector<std::string> violations() const;
  /// Canonical JSON body; stable key order.
  std::string to_json() const;
  /// 16 hex digits, FNV-1a over to_json(). Keys replay files.
  std::string hash() const;
};

struct DiversifierReply {
  std::string prompt;
  std::string answer;
};

/// Rewrites one request. Returns nullopt on any failure (timeout, transport,
/// malformed reply). Implementations must be safe to call concurrently.
class DiversifierClient {
 public:
  virtual ~DiversifierClient() = default;
  virtual std::optional<DiversifierReply> complete(const DiversifierRequest& request) = 0;
};

/// Serves canned replies from `<dir>/<request hash>.json` ({"prompt", "answer"}).
class ReplayClient final : public DiversifierClient {
 public:
  explicit ReplayClient(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::optional<DiversifierReply> complete(const DiversifierRequest& request) override;
  /// Stores a reply where complete() will find it.
  void record(const DiversifierRequest& request, const DiversifierReply& reply) const;

 private:
  std::filesystem::path dir_;
};

struct HttpClientConfig {
  /// e.g. "http://localhost:8080/v1/chat/completions"
  std::string endpoint;
  std::string model = "gpt-3.5-turbo-0125";
  std::string api_key;  // from EMBFORGE_DIVERSIFIER_KEY
  std::chrono::milliseconds timeout{30000};
  int max_in_flight = 4;
};

/// Chat-completion client. The reply's first message content must be a JSON
/// object {"prompt": ..., "answer": ...}.
class HttpClient final : public DiversifierClient {
 public:
  explicit HttpClient(HttpClientConfig cfg);
  std::optional<DiversifierReply> complete(const DiversifierRequest& request) override;

  /// OpenAI-style messages body for a request.
  static std::string chat_body(const DiversifierRequest& request, const std::string& model);
  /// Extracts the rewrite from a chat-completion response body.
  static std::optional<DiversifierReply> parse_chat_response(const std::string& body);

 private:
  HttpClientConfig cfg_;
  std::string scheme_host_;
  std::string path_;
  std::counting_semaphore<> in_flight_;
};

/// Built-in human-written demonstrations per task (two each).
std::vector<Demonstration> default_demonstrations(TaskType task);

EpisodeFacts episode_facts(const Episode& e, std::span<const annotate::GroundedObject> objects);

/// Request for rewriting a template-generated sample.
DiversifierRequest rewrite_request(const SampleRecord& sample, const EpisodeFacts& facts, std::uint64_t seed);

/// What-if request over an action subsequence. Throws InvalidInput on an
/// empty subsequence.
DiversifierRequest build_whatif_request(const Episode& e, std::span<const ActionStep> steps,
                                        std::span<const annotate::GroundedObject> objects, std::uint64_t seed);

/// What-if sample from the client, or the deterministic offline form
/// "What will happen if the robot executes <tokens>?" when there is no client
/// or it fails (flagged "diversifier-fallback").
SampleRecord whatif_sample(const annotate::BuildContext& ctx, const DiversifierRequest& request,
                           DiversifierClient* client);

/// Seeded phrase-level paraphrase of every text node. Never touches tokens,
/// object names, or bins.
SampleRecord offline_paraphrase(const SampleRecord& sample, std::uint64_t seed);

/// Rewrites a template-generated sample through `client`, or the offline
/// paraphraser when client is null. A failed or non-conforming reply keeps
/// the original, flagged "undiversified".
SampleRecord diversify(const SampleRecord& sample, DiversifierClient* client, std::uint64_t seed,
                       const EpisodeFacts& facts = {});

/// True when both sequences carry the same multiset of vocabulary tokens.
bool same_token_multiset(const tokens::Sequence& a, const tokens::Sequence& b);

}  // namespace embforge::diversify
