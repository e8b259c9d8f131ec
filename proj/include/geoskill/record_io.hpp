#pragma once

#include <filesystem>
#include <mutex>
#include <vector>

#include <json.hpp>

#include "geoskill/inference.hpp"

namespace geoskill {

nlohmann::ordered_json record_to_json(const InferenceRecord& r);
InferenceRecord record_from_json(const nlohmann::json& j);  // throws std::exception on shape errors

/// Every record in a JSONL log. ParseError carries line and byte offset.
std::vector<InferenceRecord> read_records(const std::filesystem::path& path);

/// Append-only record log; concurrent writers are serialized.
class RecordWriter {
 public:
  explicit RecordWriter(std::filesystem::path path) : path_(std::move(path)) {}
  void append(const InferenceRecord& r);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

}  // namespace geoskill
