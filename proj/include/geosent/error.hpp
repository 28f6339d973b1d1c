#pragma once

#include <stdexcept>
#include <string>

namespace geosent {

/// Error classes map onto process exit codes used by the CLI.
enum class ErrorClass { io = 2, config = 3, provider = 4, numeric = 5 };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), cls_(cls) {}
  ErrorClass error_class() const noexcept { return cls_; }
  int exit_code() const noexcept { return static_cast<int>(cls_); }

 private:
  ErrorClass cls_;
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorClass::io, what) {}
};

// Malformed file content. Reported with the I/O class: the input, not the
// configuration, is at fault.
struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorClass::io, what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorClass::config, what) {}
  ConfigError(ErrorClass cls, const std::string& what) : Error(cls, what) {}
};

struct ShapeError : ConfigError {
  explicit ShapeError(const std::string& what) : ConfigError("shape error: " + what) {}
};

struct IndexError : ConfigError {
  explicit IndexError(const std::string& what) : ConfigError("index error: " + what) {}
};

struct RangeError : ConfigError {
  explicit RangeError(const std::string& what) : ConfigError("range error: " + what) {}
};

struct TaxonomyError : ConfigError {
  explicit TaxonomyError(const std::string& what) : ConfigError("taxonomy error: " + what) {}
};

struct ShortageError : ConfigError {
  explicit ShortageError(const std::string& what) : ConfigError("shortage error: " + what) {}
};

struct SplitError : ConfigError {
  explicit SplitError(const std::string& what) : ConfigError("split error: " + what) {}
};

struct ConflictError : ConfigError {
  explicit ConflictError(const std::string& what) : ConfigError("conflict error: " + what) {}
};

struct EvaluationError : ConfigError {
  explicit EvaluationError(const std::string& what) : ConfigError("evaluation error: " + what) {}
};

struct ProviderError : Error {
  explicit ProviderError(const std::string& what, int status = 0)
      : Error(ErrorClass::provider, what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct CacheMissError : ProviderError {
  explicit CacheMissError(const std::string& key)
      : ProviderError("cache miss (offline): " + key), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorClass::numeric, what) {}
};

}  // namespace geosent
