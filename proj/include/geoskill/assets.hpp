#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace geoskill::assets {

/// Bundled prompt templates and data tables by file name (e.g. "gazetteer.tsv").
std::optional<std::string_view> find(std::string_view name);

/// Like find(), but throws DataError when the asset is missing.
std::string_view require(std::string_view name);

}  // namespace geoskill::assets
