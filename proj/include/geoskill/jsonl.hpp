#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <istream>
#include <string>

#include <json.hpp>

namespace geoskill::jsonl {

struct Line {
  std::size_t number = 0;       // 1-based
  std::size_t byte_offset = 0;  // offset of the first byte of the line
  std::string text;
};

/// Calls `fn` for every non-blank line. Lines are split on '\n'; a trailing
/// '\r' is dropped.
void for_each_line(std::istream& in, const std::function<void(const Line&)>& fn);

/// Parses every non-blank line as JSON. Malformed lines throw ParseError with
/// the absolute byte offset of the failure.
void for_each_object(const std::filesystem::path& path,
                     const std::function<void(const nlohmann::json&, const Line&)>& fn);

/// Appends one compact JSON line and flushes.
void append(const std::filesystem::path& path, const nlohmann::ordered_json& value);

/// Writes `content` to `path` via a temporary sibling, fsync and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

}  // namespace geoskill::jsonl
