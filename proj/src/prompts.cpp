#include "geoskill/prompts.hpp"

#include "geoskill/assets.hpp"
#include "geoskill/errors.hpp"
#include "geoskill/hashing.hpp"

namespace geoskill::prompts {

std::string_view load(std::string_view name) { return assets::require(std::string(name) + ".txt"); }

std::string template_hash(std::string_view name) { return hex_digest(load(name)); }

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw DataError("unterminated placeholder in prompt template");
    out.append(tmpl.substr(pos, open - pos));
    const std::string key(tmpl.substr(open + 2, close - open - 2));
    auto it = vars.find(key);
    if (it == vars.end()) throw DataError("prompt template needs '" + key + "'");
    out += it->second;
    pos = close + 2;
  }
  return out;
}

}  // namespace geoskill::prompts
