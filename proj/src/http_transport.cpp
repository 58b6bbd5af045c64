// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>

#include <cstdlib>
#include <mutex>

#include "cqr/error.hpp"
#include "cqr/http_transport.hpp"

namespace cqr {

struct HttpTransport::Impl {
  std::string base_url;
  httplib::Headers headers;
  std::chrono::seconds timeout;
};

HttpTransport::HttpTransport(std::string base_url, std::map<std::string, std::string> headers,
                             std::chrono::seconds timeout)
    : impl_(std::make_unique<Impl>()) {
  impl_->base_url = std::move(base_url);
  for (auto& [k, v] : headers) impl_->headers.emplace(k, v);
  impl_->timeout = timeout;
}

HttpTransport::~HttpTransport() = default;

HttpResponse HttpTransport::post(const std::string& path, const std::string& body) {
  // One client per call: httplib::Client is not safe for concurrent requests.
  httplib::Client client(impl_->base_url);
  client.set_connection_timeout(impl_->timeout);
  client.set_read_timeout(impl_->timeout);
  client.set_write_timeout(impl_->timeout);
  auto res = client.Post(path, impl_->headers, body, "application/json");
  if (!res) {
    throw TransportError("request to " + impl_->base_url + path + " failed: " + httplib::to_string(res.error()));
  }
  return HttpResponse{res->status, res->body};
}

std::string api_key_from_env(const std::string& env_var) {
  const char* v = std::getenv(env_var.c_str());
  return v == nullptr ? std::string() : std::string(v);
}

}  // namespace cqr
