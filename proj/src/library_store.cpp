#include "geoskill/library_store.hpp"

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "geoskill/errors.hpp"
#include "geoskill/jsonl.hpp"
#include "geoskill/library_io.hpp"

namespace fs = std::filesystem;

namespace geoskill {

namespace {

constexpr const char* kCurrentFile = "CURRENT";

std::string version_name(std::uint64_t version) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "v%06llu", static_cast<unsigned long long>(version));
  return buf;
}

}  // namespace

void failpoint(std::string_view name) {
  const char* armed = std::getenv("GEOSKILL_FAILPOINT");
  if (armed && name == armed) std::raise(SIGKILL);
}

LibraryStore::LibraryStore(fs::path root) : root_(std::move(root)) {}

bool LibraryStore::has_head() const { return fs::exists(root_ / kCurrentFile); }

std::optional<std::uint64_t> LibraryStore::head_version() const {
  if (!has_head()) return std::nullopt;
  std::string name = jsonl::read_file(root_ / kCurrentFile);
  while (!name.empty() && (name.back() == '\n' || name.back() == '\r')) name.pop_back();
  if (name.size() < 2 || name[0] != 'v') throw DataError("corrupt CURRENT in " + root_.string());
  return std::stoull(name.substr(1));
}

fs::path LibraryStore::head_dir() const {
  auto v = head_version();
  if (!v) throw DataError("no library at " + root_.string());
  return version_dir(*v);
}

fs::path LibraryStore::version_dir(std::uint64_t version) const {
  return root_ / version_name(version);
}

SkillLibrary LibraryStore::load_head() const { return load_library(head_dir()); }

fs::path LibraryStore::history_path() const { return root_ / "evolution_history.jsonl"; }

fs::path LibraryStore::commit(const SkillLibrary& lib) {
  if (auto head = head_version(); head && lib.version <= *head) {
    throw DataError("commit of version " + std::to_string(lib.version) +
                    " does not advance head " + std::to_string(*head));
  }
  auto violations = check_library(lib);
  if (!violations.empty()) throw ValidationError("library", std::move(violations));

  fs::create_directories(root_);
  const fs::path final_dir = version_dir(lib.version);
  const fs::path staging = final_dir.string() + ".tmp";
  fs::remove_all(staging);
  fs::remove_all(final_dir);  // left behind by a crash between rename and head swap
  fs::create_directories(staging);
  write_library_files(lib, staging);
  failpoint("store.after_stage");
  fs::rename(staging, final_dir);
  failpoint("store.before_head_swap");
  jsonl::write_file_atomic(root_ / kCurrentFile, version_name(lib.version) + "\n");
  return final_dir;
}

}  // namespace geoskill
