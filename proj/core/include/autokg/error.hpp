#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace autokg {

// Root of every error the engine throws. Subclasses name the failure class;
// callers that only need a message can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration: unknown tokenizer, invalid provider settings, malformed
// config file. Maps to the "usage/config" exit code in the CLI.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An argument violates an operation's precondition.
class ParameterError : public Error {
 public:
  using Error::Error;
};

class DegenerateVectorError : public Error {
 public:
  using Error::Error;
};

class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& what, std::vector<std::size_t> failed = {},
                         bool transient = false)
      : Error(what), failed_indices_(std::move(failed)), transient_(transient) {}

  const std::vector<std::size_t>& failed_indices() const noexcept { return failed_indices_; }
  bool transient() const noexcept { return transient_; }

  // Prompt that was being sent when the failure happened, for replay.
  const std::string& prompt() const noexcept { return prompt_; }
  void attach_prompt(std::string prompt) { prompt_ = std::move(prompt); }

 private:
  std::vector<std::size_t> failed_indices_;
  bool transient_ = false;
  std::string prompt_;
};

// The remote side answered, but the payload broke the wire contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// A scripted provider had no fixture for a prompt, or a fixture broke a limit.
class FixtureError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual, int iterations)
      : Error(what), residual_(residual), iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class InternalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

class MigrationError : public Error {
 public:
  using Error::Error;
};

// Artifacts from different builds were combined (corpus hash mismatch).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

// Non-fatal findings collected by operations that degrade instead of failing.
using Warnings = std::vector<std::string>;

inline void warn(Warnings* sink, std::string message) {
  if (sink != nullptr) sink->push_back(std::move(message));
}

}  // namespace autokg
