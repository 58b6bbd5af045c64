// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <string>

namespace cqr {

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// POSTs JSON bodies to an endpoint. Implementations throw TransportError
/// for connection failures and timeouts and return every HTTP status as-is.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& body) = 0;
};

/// cpp-httplib backed transport. `base_url` is scheme://host[:port].
class HttpTransport : public Transport {
 public:
  HttpTransport(std::string base_url, std::map<std::string, std::string> headers,
                std::chrono::seconds timeout = std::chrono::seconds(60));
  ~HttpTransport() override;

  HttpResponse post(const std::string& path, const std::string& body) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Reads a bearer token from `env_var`; empty string if unset.
std::string api_key_from_env(const std::string& env_var);

}  // namespace cqr
