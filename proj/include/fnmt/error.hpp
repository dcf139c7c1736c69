// Copyright 2026 The fnmt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fnmt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent model, training or CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Text that could not be parsed; carries the 1-based line number.
class ParseError : public InputError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Token id outside a vocabulary.
class VocabError : public InputError {
 public:
  using InputError::InputError;
};

class AlignmentError : public InputError {
 public:
  using InputError::InputError;
};

/// NaN or infinity where finite numbers are required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Sequence longer than a configured limit.
class LengthError : public InputError {
 public:
  using InputError::InputError;
};

/// Checkpoint could not be read back.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Collects non-fatal diagnostics. Functions that may warn take an optional
/// pointer to one of these; a null sink drops the messages.
struct Warnings {
  std::vector<std::string> messages;

  void add(std::string msg) { messages.push_back(std::move(msg)); }
  bool empty() const { return messages.empty(); }
  std::size_t size() const { return messages.size(); }
};

inline void warn(Warnings* sink, std::string msg) {
  if (sink) sink->add(std::move(msg));
}

}  // namespace fnmt
