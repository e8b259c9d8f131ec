#include "geoskill/scene.hpp"

#include <cctype>
#include <charconv>
#include <filesystem>

#include <openssl/evp.h>

#include "geoskill/jsonl.hpp"
#include "geoskill/prompts.hpp"
#include "geoskill/text.hpp"

namespace geoskill {

std::string_view to_string(DrivingSide side) {
  switch (side) {
    case DrivingSide::Left:
      return "left";
    case DrivingSide::Right:
      return "right";
    case DrivingSide::Unknown:
      return "unknown";
  }
  return "unknown";
}

DrivingSide parse_driving_side(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  const std::string v = text::to_lower(s);
  if (v == "left" || v == "left-hand" || v == "lht") return DrivingSide::Left;
  if (v == "right" || v == "right-hand" || v == "rht") return DrivingSide::Right;
  return DrivingSide::Unknown;
}

namespace {

constexpr const char* kScalarFields[] = {"road_marking_style", "pole_signage", "vegetation_climate",
                                         "built_environment"};

const std::string* scalar_field(const SceneParse& s, std::string_view name) {
  if (name == "road_marking_style") return &s.road_marking_style;
  if (name == "pole_signage") return &s.pole_signage;
  if (name == "vegetation_climate") return &s.vegetation_climate;
  if (name == "built_environment") return &s.built_environment;
  return nullptr;
}

std::string* scalar_field(SceneParse& s, std::string_view name) {
  return const_cast<std::string*>(scalar_field(static_cast<const SceneParse&>(s), name));
}

const std::vector<std::string>* list_field(const SceneParse& s, std::string_view name) {
  if (name == "script_language_patterns") return &s.script_language_patterns;
  if (name == "ocr_snippets") return &s.ocr_snippets;
  return nullptr;
}

bool observed(std::string_view v) {
  const std::string n = text::normalize(v);
  return !n.empty() && n != "unknown";
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += "; ";
    out += items[i];
  }
  return out;
}

void read_list(const nlohmann::json& j, const char* key, std::vector<std::string>& out,
               std::vector<std::string>& warnings) {
  if (!j.contains(key)) {
    warnings.push_back(std::string("missing field '") + key + "'");
    return;
  }
  const auto& v = j.at(key);
  if (v.is_string()) {
    if (!v.get<std::string>().empty()) out.push_back(v.get<std::string>());
    warnings.push_back(std::string("field '") + key + "' coerced from string to list");
    return;
  }
  if (!v.is_array()) {
    warnings.push_back(std::string("field '") + key + "' is not a list");
    return;
  }
  for (const auto& item : v) {
    if (item.is_string()) {
      out.push_back(item.get<std::string>());
    } else {
      warnings.push_back(std::string("non-string entry dropped from '") + key + "'");
    }
  }
}

std::string image_part(const std::string& ref) {
  if (ref.rfind("http://", 0) == 0 || ref.rfind("https://", 0) == 0 || ref.rfind("data:", 0) == 0) {
    return ref;
  }
  std::error_code ec;
  if (!std::filesystem::is_regular_file(ref, ec)) return ref;
  const std::string bytes = jsonl::read_file(ref);
  std::string encoded(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(encoded.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()),
                                static_cast<int>(bytes.size()));
  encoded.resize(static_cast<std::size_t>(n));
  std::string ext = text::to_lower(std::filesystem::path(ref).extension().string());
  const std::string mime = ext == ".png" ? "image/png" : ext == ".webp" ? "image/webp" : "image/jpeg";
  return "data:" + mime + ";base64," + encoded;
}

}  // namespace

std::string SceneParse::canonical_text() const {
  std::string out;
  out += "script_language_patterns: " + join_list(script_language_patterns) + "\n";
  out += "driving_side: " + std::string(to_string(driving_side)) + "\n";
  out += "road_marking_style: " + road_marking_style + "\n";
  out += "pole_signage: " + pole_signage + "\n";
  out += "vegetation_climate: " + vegetation_climate + "\n";
  out += "built_environment: " + built_environment + "\n";
  out += "ocr_snippets: " + join_list(ocr_snippets) + "\n";
  return out;
}

std::string SceneParse::evidence_listing() const {
  std::string out;
  auto list = [&](const char* name, const std::vector<std::string>& items) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (observed(items[i])) out += "scene." + std::string(name) + "[" + std::to_string(i) + "] = " + items[i] + "\n";
    }
  };
  list("script_language_patterns", script_language_patterns);
  if (driving_side != DrivingSide::Unknown) out += "scene.driving_side = " + std::string(to_string(driving_side)) + "\n";
  for (const char* f : kScalarFields) {
    const std::string& v = *scalar_field(*this, f);
    if (observed(v)) out += "scene." + std::string(f) + " = " + v + "\n";
  }
  list("ocr_snippets", ocr_snippets);
  if (out.empty()) out = "(no scene evidence observed)\n";
  return out;
}

nlohmann::ordered_json scene_to_json(const SceneParse& s) {
  nlohmann::ordered_json j;
  j["script_language_patterns"] = s.script_language_patterns;
  j["driving_side"] = to_string(s.driving_side);
  j["road_marking_style"] = s.road_marking_style;
  j["pole_signage"] = s.pole_signage;
  j["vegetation_climate"] = s.vegetation_climate;
  j["built_environment"] = s.built_environment;
  j["ocr_snippets"] = s.ocr_snippets;
  j["warnings"] = s.warnings;
  return j;
}

SceneParse scene_from_json(const nlohmann::json& j) {
  SceneParse s;
  if (!j.is_object()) {
    s.warnings.push_back("scene parse is not a JSON object");
    return s;
  }
  read_list(j, "script_language_patterns", s.script_language_patterns, s.warnings);
  if (!j.contains("driving_side")) {
    s.warnings.push_back("missing field 'driving_side'");
  } else if (!j["driving_side"].is_string()) {
    s.warnings.push_back("field 'driving_side' is not a string");
  } else {
    s.driving_side = parse_driving_side(j["driving_side"].get<std::string>());
    const std::string raw = text::to_lower(j["driving_side"].get<std::string>());
    if (s.driving_side == DrivingSide::Unknown && raw != "unknown") {
      s.warnings.push_back("unrecognized driving_side '" + raw + "'");
    }
  }
  for (const char* f : kScalarFields) {
    if (!j.contains(f)) {
      s.warnings.push_back(std::string("missing field '") + f + "'");
    } else if (!j[f].is_string()) {
      s.warnings.push_back(std::string("field '") + f + "' is not a string");
    } else {
      *scalar_field(s, f) = j[f].get<std::string>();
    }
  }
  read_list(j, "ocr_snippets", s.ocr_snippets, s.warnings);
  // Reading a logged scene back keeps its original warnings.
  if (j.contains("warnings") && j["warnings"].is_array() && s.warnings.empty()) {
    for (const auto& w : j["warnings"]) {
      if (w.is_string()) s.warnings.push_back(w.get<std::string>());
    }
  }
  return s;
}

std::optional<std::string> resolve_evidence(const SceneParse& scene, std::string_view path) {
  std::string_view p = path;
  if (p.rfind("scene.", 0) == 0) p.remove_prefix(6);

  std::optional<std::size_t> index;
  if (const auto lb = p.find('['); lb != std::string_view::npos) {
    if (p.back() != ']' || lb + 2 > p.size() - 1) return std::nullopt;
    std::size_t i = 0;
    const auto digits = p.substr(lb + 1, p.size() - lb - 2);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), i);
    if (ec != std::errc() || ptr != digits.data() + digits.size()) return std::nullopt;
    index = i;
    p = p.substr(0, lb);
  }

  if (const auto* list = list_field(scene, p)) {
    if (!index) {
      const std::string joined = join_list(*list);
      return observed(joined) ? std::optional<std::string>(joined) : std::nullopt;
    }
    if (*index >= list->size() || !observed((*list)[*index])) return std::nullopt;
    return (*list)[*index];
  }
  if (index) return std::nullopt;
  if (p == "driving_side") {
    if (scene.driving_side == DrivingSide::Unknown) return std::nullopt;
    return std::string(to_string(scene.driving_side));
  }
  if (const auto* v = scalar_field(scene, p)) {
    return observed(*v) ? std::optional<std::string>(*v) : std::nullopt;
  }
  return std::nullopt;
}

SceneParseCall parse_scene(const std::string& image_ref, ModelGateway& gateway, double temperature) {
  SceneParseCall call;
  call.prompt = prompts::render(prompts::load("scene_parse"), {{"image", image_ref}});
  ModelRequest req;
  req.messages.push_back({Role::User, {ContentPart::text(call.prompt), ContentPart::image(image_part(image_ref))}});
  req.temperature = temperature;
  req.format = ResponseFormat::StrictJson;
  req.alias = ModelAlias::OnlineInference;
  const ModelResponse resp = gateway.complete(req);
  call.response = resp.text;
  call.scene = scene_from_json(nlohmann::json::parse(resp.text));
  return call;
}

}  // namespace geoskill
