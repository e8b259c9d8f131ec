#include "geoskill/library_io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "geoskill/errors.hpp"
#include "geoskill/jsonl.hpp"
#include "geoskill/library_store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace geoskill {

namespace jsonl {

void for_each_line(std::istream& in, const std::function<void(const Line&)>& fn) {
  Line line;
  std::size_t offset = 0;
  std::string raw;
  while (std::getline(in, raw)) {
    ++line.number;
    line.byte_offset = offset;
    offset += raw.size() + 1;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (raw.find_first_not_of(" \t") == std::string::npos) continue;
    line.text = std::move(raw);
    fn(line);
  }
}

void for_each_object(const fs::path& path,
                     const std::function<void(const json&, const Line&)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  for_each_line(in, [&](const Line& line) {
    json value;
    try {
      value = json::parse(line.text);
    } catch (const json::parse_error& e) {
      const std::size_t within = e.byte > 0 ? e.byte - 1 : 0;
      throw ParseError(path.string(), line.number, line.byte_offset + within, e.what());
    }
    fn(value, line);
  });
}

void append(const fs::path& path, const ordered_json& value) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw DataError("cannot append to " + path.string());
  out << value.dump() << '\n';
  out.flush();
  if (!out) throw DataError("write failed for " + path.string());
}

namespace {

void fsync_path(const fs::path& path, bool directory) {
  const int fd = ::open(path.c_str(), directory ? (O_RDONLY | O_DIRECTORY) : O_RDONLY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fsync_path(tmp, false);
  fs::rename(tmp, path);
  fsync_path(path.parent_path().empty() ? fs::path(".") : path.parent_path(), true);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace jsonl

ordered_json skill_to_json(const AtomicSkill& s) {
  ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["id"] = s.id;
  j["instruction"] = s.instruction;
  j["heuristic"] = s.heuristic;
  j["confidence"] = s.confidence;
  j["countries"] = s.countries;
  j["regions"] = s.regions;
  j["stage"] = to_string(s.stage);
  j["provenance"] = {{"kind", to_string(s.provenance.kind)}, {"source", s.provenance.source}};
  j["success"] = s.success;
  j["failure"] = s.failure;
  j["version_introduced"] = s.version_introduced;
  j["prior_confidence"] = s.prior_confidence;
  return j;
}

AtomicSkill skill_from_json(const json& j) {
  if (j.at("schema_version").get<int>() != kSchemaVersion) {
    throw DataError("skill schema_version " + j.at("schema_version").dump() + " unsupported");
  }
  AtomicSkill s;
  s.id = j.at("id").get<std::string>();
  s.instruction = j.at("instruction").get<std::string>();
  s.heuristic = j.at("heuristic").get<std::string>();
  s.confidence = j.at("confidence").get<double>();
  s.prior_confidence = j.value("prior_confidence", s.confidence);
  s.countries = j.at("countries").get<std::set<std::string>>();
  s.regions = j.at("regions").get<std::set<std::string>>();
  s.stage = parse_stage(j.at("stage").get<std::string>());
  s.provenance.kind = parse_provenance_kind(j.at("provenance").at("kind").get<std::string>());
  s.provenance.source = j.at("provenance").at("source").get<std::string>();
  s.success = j.at("success").get<std::uint64_t>();
  s.failure = j.at("failure").get<std::uint64_t>();
  s.version_introduced = j.at("version_introduced").get<std::uint64_t>();
  return s;
}

ordered_json relation_to_json(const RelationPrior& r) {
  ordered_json j;
  j["from"] = r.from;
  j["to"] = r.to;
  j["support"] = r.support;
  j["failure"] = r.failure;
  return j;
}

RelationPrior relation_from_json(const json& j) {
  return RelationPrior{j.at("from").get<std::string>(), j.at("to").get<std::string>(),
                       j.at("support").get<std::uint64_t>(),
                       j.at("failure").get<std::uint64_t>()};
}

ordered_json failure_to_json(const FailureRef& f) {
  ordered_json j;
  j["trajectory"] = f.trajectory;
  j["skills"] = f.skills;
  j["reason"] = f.reason;
  return j;
}

FailureRef failure_from_json(const json& j) {
  return FailureRef{j.at("trajectory").get<std::string>(),
                    j.at("skills").get<std::vector<std::string>>(),
                    j.value("reason", std::string())};
}

void write_library_files(const SkillLibrary& lib, const fs::path& dir) {
  auto write = [&](const char* name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    out << content;
    out.flush();
    if (!out) throw DataError("write failed for " + (dir / name).string());
  };

  std::string skills;
  for (const auto& [id, s] : lib.skills) skills += skill_to_json(s).dump() + "\n";
  std::string relations;
  for (const auto& r : lib.relation_priors) relations += relation_to_json(r).dump() + "\n";
  std::string failures;
  for (const auto& f : lib.failure_subset) failures += failure_to_json(f).dump() + "\n";

  write(kSkillsFile, skills);
  write(kRelationsFile, relations);
  write(kFailuresFile, failures);

  ordered_json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["version"] = lib.version;
  manifest["skills"] = kSkillsFile;
  manifest["relations"] = kRelationsFile;
  manifest["failures"] = kFailuresFile;
  manifest["skill_count"] = lib.skills.size();
  manifest["relation_count"] = lib.relation_priors.size();
  manifest["failure_count"] = lib.failure_subset.size();
  write(kManifestFile, manifest.dump(2) + "\n");
}

void save_library(const SkillLibrary& lib, const fs::path& dir) {
  auto violations = check_library(lib);
  if (!violations.empty()) throw ValidationError("library", std::move(violations));

  const fs::path staging = dir.string() + ".staging";
  const fs::path previous = dir.string() + ".previous";
  fs::remove_all(staging);
  fs::create_directories(staging);
  write_library_files(lib, staging);
  fs::remove_all(previous);
  if (fs::exists(dir)) fs::rename(dir, previous);
  fs::rename(staging, dir);
  fs::remove_all(previous);
}

namespace {

SkillLibrary load_library_dir(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestFile;
  json manifest;
  {
    const std::string text = jsonl::read_file(manifest_path);
    try {
      manifest = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(manifest_path.string(), 1, e.byte > 0 ? e.byte - 1 : 0, e.what());
    }
  }
  if (!manifest.contains("schema_version") ||
      manifest["schema_version"].get<int>() != kSchemaVersion) {
    throw DataError(manifest_path.string() + ": unsupported schema_version");
  }

  SkillLibrary lib;
  lib.version = manifest.at("version").get<std::uint64_t>();

  auto field_error = [](const fs::path& p, const jsonl::Line& line, const std::exception& e) {
    return ParseError(p.string(), line.number, line.byte_offset, e.what());
  };

  const fs::path skills_path = dir / manifest.value("skills", std::string(kSkillsFile));
  jsonl::for_each_object(skills_path, [&](const json& j, const jsonl::Line& line) {
    AtomicSkill s;
    try {
      s = skill_from_json(j);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw field_error(skills_path, line, e);
    }
    if (!lib.skills.emplace(s.id, s).second) {
      throw ParseError(skills_path.string(), line.number, line.byte_offset,
                       "duplicate skill id " + s.id);
    }
  });

  const fs::path relations_path = dir / manifest.value("relations", std::string(kRelationsFile));
  jsonl::for_each_object(relations_path, [&](const json& j, const jsonl::Line& line) {
    try {
      lib.relation_priors.push_back(relation_from_json(j));
    } catch (const std::exception& e) {
      throw field_error(relations_path, line, e);
    }
  });

  const fs::path failures_path = dir / manifest.value("failures", std::string(kFailuresFile));
  jsonl::for_each_object(failures_path, [&](const json& j, const jsonl::Line& line) {
    try {
      lib.failure_subset.push_back(failure_from_json(j));
    } catch (const std::exception& e) {
      throw field_error(failures_path, line, e);
    }
  });

  if (manifest.contains("skill_count") &&
      manifest["skill_count"].get<std::size_t>() != lib.skills.size()) {
    throw DataError(skills_path.string() + ": manifest declares " +
                    manifest["skill_count"].dump() + " skills, file holds " +
                    std::to_string(lib.skills.size()) + " (truncated?)");
  }
  if (manifest.contains("relation_count") &&
      manifest["relation_count"].get<std::size_t>() != lib.relation_priors.size()) {
    throw DataError(relations_path.string() + ": relation count mismatch (truncated?)");
  }
  if (manifest.contains("failure_count") &&
      manifest["failure_count"].get<std::size_t>() != lib.failure_subset.size()) {
    throw DataError(failures_path.string() + ": failure count mismatch (truncated?)");
  }

  auto violations = check_library(lib);
  if (!violations.empty()) throw ValidationError(dir.string(), std::move(violations));
  return lib;
}

}  // namespace

bool library_exists(const fs::path& path) {
  return fs::exists(path / kManifestFile) || LibraryStore(path).has_head();
}

SkillLibrary load_library(const fs::path& path) {
  if (fs::exists(path / kManifestFile)) return load_library_dir(path);
  LibraryStore store(path);
  if (store.has_head()) return load_library_dir(store.head_dir());
  throw DataError("no library at " + path.string());
}

}  // namespace geoskill
