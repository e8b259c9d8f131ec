#pragma once

#include <map>
#include <string>
#include <string_view>

namespace geoskill::prompts {

/// Bundled template by base name ("reasoning" -> reasoning.txt).
std::string_view load(std::string_view name);

/// Content hash of a bundled template, logged with every record.
std::string template_hash(std::string_view name);

/// Replaces every `{{key}}`. Unknown keys in the template throw DataError;
/// unused variables are allowed.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars);

}  // namespace geoskill::prompts
