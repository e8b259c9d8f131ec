#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace geoskill {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries 1-based line and 0-based byte offset into the file.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, std::size_t byte_offset, const std::string& what)
      : Error(file + ":" + std::to_string(line) + " (byte " + std::to_string(byte_offset) +
              "): " + what),
        file_(std::move(file)),
        line_(line),
        byte_offset_(byte_offset) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::string file_;
  std::size_t line_;
  std::size_t byte_offset_;
};

/// One or more invariant violations; the list is the payload.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& subject, std::vector<std::string> violations)
      : Error(subject + ": " + join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += "; ";
      out += v[i];
    }
    return out;
  }
  std::vector<std::string> violations_;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace geoskill
