#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoskill/gateway.hpp"
#include "geoskill/rng.hpp"
#include "geoskill/skill.hpp"

namespace geoskill::testing {

std::filesystem::path data_dir();

nlohmann::json read_json(const std::filesystem::path& path);

/// Fresh directory under the system temp dir, removed with its contents on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Random well-formed library: skills from a small word pool with random
/// stages, constraint sets and confidences, plus random relation priors.
SkillLibrary random_library(Rng& rng, std::size_t skills, std::size_t priors);

/// Random text of `words` tokens from the shared pool.
std::string random_text(Rng& rng, std::size_t words);

/// Scene-parse JSON shared by the prompt-reactive backend.
nlohmann::json sample_scene_json();

/// Backend that answers the scene-parse prompt with sample_scene_json() and
/// every reasoning prompt with an answer grounded in that prompt: one claim
/// citing the first listed skill, and a one-step trajectory at the first plan
/// entry. Prompts are recorded in call order.
class PromptReactiveBackend final : public Backend {
 public:
  ModelResponse complete(const ModelRequest& request) override;
  std::string id() const override { return "reactive"; }
  const std::vector<std::string>& prompts() const noexcept { return prompts_; }

 private:
  std::vector<std::string> prompts_;
};

/// `[skill:<id>]` references in one "## <heading>" section of a prompt, in order.
std::vector<std::string> section_skill_refs(const std::string& prompt, const std::string& heading);

/// "a -> b" lines of the Skill-Graph section.
std::vector<std::pair<std::string, std::string>> section_edges(const std::string& prompt);

bool has_section(const std::string& prompt, const std::string& heading);

}  // namespace geoskill::testing
