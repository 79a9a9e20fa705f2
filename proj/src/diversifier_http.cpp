#include "embforge/diversifier.hpp"
#include "embforge/errors.hpp"

// Eigen must be seen before httplib: <resolv.h> defines a `_res` macro.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

namespace embforge::diversify {

HttpClient::HttpClient(HttpClientConfig cfg) : cfg_(std::move(cfg)), in_flight_(std::max(1, cfg_.max_in_flight)) {
  const auto scheme_end = cfg_.endpoint.find("://");
  if (scheme_end == std::string::npos) throw InvalidInput("diversifier endpoint needs a scheme: " + cfg_.endpoint);
  const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
  scheme_host_ = cfg_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : cfg_.endpoint.substr(path_start);
}

std::optional<DiversifierReply> HttpClient::complete(const DiversifierRequest& request) {
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  // One client per call keeps concurrent requests independent.
  httplib::Client cli(scheme_host_);
  const auto secs = cfg_.timeout.count() / 1000;
  const auto usecs = (cfg_.timeout.count() % 1000) * 1000;
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  auto res = cli.Post(path_, headers, chat_body(request, cfg_.model), "application/json");
  if (!res || res->status != 200) return std::nullopt;
  return parse_chat_response(res->body);
}

}  // namespace embforge::diversify
