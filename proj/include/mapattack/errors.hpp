#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mapattack {

/// Tensor/layer dimensions do not line up.
class ShapeError : public std::runtime_error {
public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// A value is outside its admissible range (bad label, empty batch, ...).
class DomainError : public std::runtime_error {
public:
  explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

/// A configuration struct or file is inconsistent.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file. Carries the 1-based line where parsing stopped.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
        path_(path),
        line_(line) {}

  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }

private:
  std::string path_;
  std::size_t line_;
};

/// File has a recognized magic but an unsupported format version.
class UnsupportedVersionError : public std::runtime_error {
public:
  UnsupportedVersionError(const std::string& path, const std::string& found)
      : std::runtime_error(path + ": unsupported format version '" + found + "'") {}
};

/// Raised by an oracle when a query would exceed its budget. Carries the
/// number of queries already spent so callers can report a partial result.
class BudgetExhausted : public std::runtime_error {
public:
  explicit BudgetExhausted(std::uint64_t queries_used)
      : std::runtime_error("query budget exhausted after " +
                           std::to_string(queries_used) + " queries"),
        queries_used_(queries_used) {}

  std::uint64_t queries_used() const { return queries_used_; }

private:
  std::uint64_t queries_used_;
};

}  // namespace mapattack
