// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cqr {

/// Base for all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or missing input data: unreadable files, schema violations, malformed lines.
/// The CLI maps this to exit status 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Non-retryable HTTP status from a remote endpoint.
class HttpError : public Error {
 public:
  HttpError(int status, std::string body)
      : Error("HTTP " + std::to_string(status) + ": " + body), status_(status), body_(std::move(body)) {}

  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

/// Connection failures and timeouts; always retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace cqr
