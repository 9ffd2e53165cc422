// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace capqa {

/// Base class for all capqa errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed corpus file: the message names the file, line, and field.
class CorpusError : public Error {
 public:
  using Error::Error;
};

/// Configuration or pre-flight failure; raised before any backend call.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Network failure. Retryable failures (connect errors, timeouts, 429/5xx)
/// are re-attempted under the retry policy; 4xx rejections are not.
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& message, bool retryable = true)
      : Error(message), retryable_(retryable) {}

  bool retryable() const { return retryable_; }

 private:
  bool retryable_;
};

/// A remote peer answered with a payload that violates the wire contract.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Template rendering failure (missing or unresolved placeholder).
class TemplateError : public Error {
 public:
  using Error::Error;
};

/// Replay-only execution hit a request absent from the cache.
class CacheMissError : public Error {
 public:
  using Error::Error;
};

/// A run stopped before every item completed; the cache remains valid for resume.
class PartialRunError : public Error {
 public:
  using Error::Error;
};

}  // namespace capqa
