#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "geoskill/skill.hpp"

namespace geoskill {

inline constexpr int kSchemaVersion = 1;

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kSkillsFile = "skills.jsonl";
inline constexpr const char* kRelationsFile = "relations.jsonl";
inline constexpr const char* kFailuresFile = "failures.jsonl";

nlohmann::ordered_json skill_to_json(const AtomicSkill& skill);
AtomicSkill skill_from_json(const nlohmann::json& j);  // throws std::exception on shape errors

nlohmann::ordered_json relation_to_json(const RelationPrior& r);
RelationPrior relation_from_json(const nlohmann::json& j);

nlohmann::ordered_json failure_to_json(const FailureRef& f);
FailureRef failure_from_json(const nlohmann::json& j);

/// Writes manifest + three JSONL files into `dir`. The directory is staged as a
/// sibling and renamed into place, so readers never observe a partial write.
void save_library(const SkillLibrary& lib, const std::filesystem::path& dir);

/// Writes the library files into an existing directory without staging.
void write_library_files(const SkillLibrary& lib, const std::filesystem::path& dir);

/// Loads either a single library directory (has manifest.json) or a versioned
/// store root (has CURRENT). Throws ParseError with line and byte offset on
/// malformed content, DataError on schema mismatch, ValidationError on
/// invariant violations.
SkillLibrary load_library(const std::filesystem::path& path);

/// Whether `path` holds something load_library can read.
bool library_exists(const std::filesystem::path& path);

}  // namespace geoskill
