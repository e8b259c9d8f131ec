#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "geoskill/gateway.hpp"

namespace geoskill {

enum class DrivingSide { Left, Right, Unknown };
std::string_view to_string(DrivingSide side);
DrivingSide parse_driving_side(std::string_view s);  // unrecognized -> Unknown

/// Structured perception output. Every field is always present; unobserved
/// values are Unknown or empty. `warnings` lists defaulted or coerced fields.
struct SceneParse {
  std::vector<std::string> script_language_patterns;
  DrivingSide driving_side = DrivingSide::Unknown;
  std::string road_marking_style;
  std::string pole_signage;
  std::string vegetation_climate;
  std::string built_environment;
  std::vector<std::string> ocr_snippets;
  std::vector<std::string> warnings;

  /// Stable text form used as a retrieval query part. Excludes warnings.
  std::string canonical_text() const;

  /// One "scene.<path> = value" line per observed value, for prompts.
  std::string evidence_listing() const;

  bool operator==(const SceneParse&) const = default;
};

nlohmann::ordered_json scene_to_json(const SceneParse& scene);

/// Tolerant reader: missing or mistyped fields are defaulted and noted in
/// warnings, unknown fields are ignored. Non-object input yields an all-Unknown
/// parse with a warning.
SceneParse scene_from_json(const nlohmann::json& j);

/// Value an evidence reference points at, or nullopt when it does not
/// resolve. Accepted forms: "scene.<field>", "scene.<list>[i]" (the "scene."
/// prefix is optional). Unknown or empty values do not resolve.
std::optional<std::string> resolve_evidence(const SceneParse& scene, std::string_view path);

struct SceneParseCall {
  SceneParse scene;
  std::string prompt;
  std::string response;
};

/// Sends the scene-parse template with the image as StrictJson to the
/// online model and reads the reply tolerantly.
SceneParseCall parse_scene(const std::string& image_ref, ModelGateway& gateway, double temperature = 0.0);

}  // namespace geoskill
