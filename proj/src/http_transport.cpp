#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "treesql/errors.hpp"
#include "treesql/llm_client.hpp"

namespace treesql {

HttpTransport::HttpTransport(std::string base_url, std::string api_key, double timeout_secs)
    : api_key_(std::move(api_key)), timeout_secs_(timeout_secs) {
  while (!base_url.empty() && base_url.back() == '/') base_url.pop_back();
  auto scheme_end = base_url.find("://");
  auto path_start = base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  if (path_start == std::string::npos) {
    origin_ = base_url;
  } else {
    origin_ = base_url.substr(0, path_start);
    prefix_ = base_url.substr(path_start);
  }
}

HttpResponse HttpTransport::post_json(const std::string& path, const std::string& body) {
  httplib::Client cli(origin_);
  auto secs = static_cast<time_t>(timeout_secs_);
  cli.set_connection_timeout(secs);
  cli.set_read_timeout(secs);
  cli.set_write_timeout(secs);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = cli.Post(prefix_ + path, headers, body, "application/json");
  if (!res) throw TransportError("HTTP request to " + origin_ + prefix_ + path + " failed: " + httplib::to_string(res.error()));
  return HttpResponse{res->status, res->body};
}

}  // namespace treesql
