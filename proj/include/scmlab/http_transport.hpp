#pragma once

// cpp-httplib backed transport for ChatClient. HTTPS requires building with
// CPPHTTPLIB_OPENSSL_SUPPORT.

#include <httplib.h>

#include <chrono>
#include <string>

#include "scmlab/llm_client.hpp"

namespace scmlab {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("URL has no scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpTransport : public Transport {
public:
  TransportResponse post(const std::string& url, const Headers& headers, const std::string& body,
                         double timeout_s) override {
    const ParsedUrl parts = split_url(url);
    httplib::Client client(parts.origin);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(timeout_s));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers hdrs;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
      if (k == "Content-Type") content_type = v;
      else hdrs.emplace(k, v);
    }

    const auto start = std::chrono::steady_clock::now();
    auto result = client.Post(parts.path, hdrs, body, content_type);
    TransportResponse out;
    out.latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!result) {
      const auto err = result.error();
      out.error = httplib::to_string(err);
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             (err == httplib::Error::Read && out.latency_s >= timeout_s);
      out.failure = timed_out ? TransportFailure::timeout : TransportFailure::connection;
      return out;
    }
    out.status = result->status;
    out.body = result->body;
    return out;
  }
};

}  // namespace scmlab
