#include "geoskill/assets.hpp"

#include "geoskill/errors.hpp"

namespace geoskill::assets {

std::string_view require(std::string_view name) {
  auto found = find(name);
  if (!found) throw DataError("bundled asset '" + std::string(name) + "' is missing");
  return *found;
}

}  // namespace geoskill::assets
