#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>

#include "geoskill/skill.hpp"

namespace geoskill {

/// Versioned library directory:
///
///   <root>/CURRENT            one line naming the head version directory
///   <root>/v000000/ ...       one complete library per version
///   <root>/evolution_history.jsonl
///
/// A commit writes `vNNNNNN.tmp`, renames it to `vNNNNNN`, then replaces
/// CURRENT through a rename. A crash at any point leaves CURRENT naming a
/// complete earlier version. Single writer, any number of readers.
class LibraryStore {
 public:
  explicit LibraryStore(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }

  bool has_head() const;
  std::optional<std::uint64_t> head_version() const;
  std::filesystem::path head_dir() const;  // throws DataError when there is no head
  std::filesystem::path version_dir(std::uint64_t version) const;

  SkillLibrary load_head() const;

  /// Publishes `lib` as the new head. Its version must exceed the current head.
  /// Returns the version directory.
  std::filesystem::path commit(const SkillLibrary& lib);

  std::filesystem::path history_path() const;

 private:
  std::filesystem::path root_;
};

/// Test hook: when the environment variable GEOSKILL_FAILPOINT equals `name`,
/// the process kills itself with SIGKILL.
void failpoint(std::string_view name);

}  // namespace geoskill
