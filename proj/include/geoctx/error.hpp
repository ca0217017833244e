#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace geoctx {

// Process exit codes used by the CLI. Every library exception maps to one.
enum class ErrorCategory : int {
  usage = 1,      // bad flags, invalid configuration, caller contract violations
  data = 2,       // malformed files, shape mismatches
  numerical = 3,  // degenerate geometry, no overlap, cache incoherence
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::usage, what) {}
};

class SequencingError : public Error {
 public:
  explicit SequencingError(const std::string& what) : Error(ErrorCategory::usage, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

/// Malformed input file. `location` is a byte offset for binary formats and a
/// 1-based line number for text formats.
class FormatError : public Error {
 public:
  enum class Unit { byte, line };

  FormatError(const std::string& source, Unit unit, std::uint64_t location, const std::string& what)
      : Error(ErrorCategory::data, source + (unit == Unit::byte ? " @byte " : ":") +
                                       std::to_string(location) + ": " + what),
        unit_(unit),
        location_(location) {}

  Unit unit() const noexcept { return unit_; }
  std::uint64_t location() const noexcept { return location_; }

 private:
  Unit unit_;
  std::uint64_t location_;
};

class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& what) : Error(ErrorCategory::numerical, what) {}
};

class NoOverlapError : public Error {
 public:
  explicit NoOverlapError(const std::string& what) : Error(ErrorCategory::numerical, what) {}
};

/// A mask asked the cache for tokens it no longer holds. Always a policy bug.
class CacheCoherenceError : public Error {
 public:
  explicit CacheCoherenceError(const std::string& what) : Error(ErrorCategory::numerical, what) {}
};

}  // namespace geoctx
