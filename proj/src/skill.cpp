#include "geoskill/skill.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "geoskill/errors.hpp"
#include "geoskill/hashing.hpp"
#include "geoskill/text.hpp"

namespace geoskill {

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::GlobalRegion:
      return "global_region";
    case Stage::Country:
      return "country";
    case Stage::Local:
      return "local";
  }
  return "country";
}

Stage parse_stage(std::string_view s) {
  if (s == "global_region") return Stage::GlobalRegion;
  if (s == "country") return Stage::Country;
  if (s == "local") return Stage::Local;
  throw std::invalid_argument("unknown stage '" + std::string(s) + "'");
}

std::string_view to_string(ProvenanceKind kind) {
  return kind == ProvenanceKind::Expert ? "expert" : "synthesized";
}

ProvenanceKind parse_provenance_kind(std::string_view s) {
  if (s == "expert") return ProvenanceKind::Expert;
  if (s == "synthesized") return ProvenanceKind::Synthesized;
  throw std::invalid_argument("unknown provenance kind '" + std::string(s) + "'");
}

GeoCoordinate::GeoCoordinate(double lat_deg, double lon_deg) {
  if (!std::isfinite(lat_deg) || !std::isfinite(lon_deg)) {
    throw std::invalid_argument("coordinate is not finite");
  }
  if (lat_deg < -90.0 || lat_deg > 90.0) {
    throw std::invalid_argument("latitude out of range: " + std::to_string(lat_deg));
  }
  double lon = std::fmod(lon_deg, 360.0);
  if (lon > 180.0) lon -= 360.0;
  if (lon <= -180.0) lon += 360.0;
  lat_ = lat_deg;
  lon_ = lon;
}

SkillId skill_id(std::string_view instruction, std::string_view heuristic) {
  std::string canonical = text::normalize(instruction);
  canonical.push_back('\x1f');
  canonical += text::normalize(heuristic);
  return to_hex(fnv1a64(canonical));
}

AtomicSkill make_skill(std::string instruction, std::string heuristic, double confidence,
                       Stage stage, std::set<std::string> countries,
                       std::set<std::string> regions, Provenance provenance) {
  AtomicSkill s;
  s.id = skill_id(instruction, heuristic);
  s.instruction = std::move(instruction);
  s.heuristic = std::move(heuristic);
  s.confidence = confidence;
  s.prior_confidence = confidence;
  s.stage = stage;
  s.countries = std::move(countries);
  s.regions = std::move(regions);
  s.provenance = std::move(provenance);
  return s;
}

std::vector<std::string> validate_skill(const AtomicSkill& skill) {
  std::vector<std::string> v;
  if (!(skill.confidence >= 0.0 && skill.confidence <= 1.0)) {
    v.push_back("confidence out of range");
  }
  if (!(skill.prior_confidence >= 0.0 && skill.prior_confidence <= 1.0)) {
    v.push_back("prior confidence out of range");
  }
  if (text::collapse_whitespace(skill.instruction).empty()) {
    v.push_back("instruction is empty");
  }
  for (const auto& code : skill.countries) {
    if (!text::is_iso2(code)) v.push_back("country code '" + code + "' not ISO-2 shaped");
  }
  if (skill.id != skill_id(skill.instruction, skill.heuristic)) {
    v.push_back("id does not match content hash");
  }
  return v;
}

const AtomicSkill* SkillLibrary::find(std::string_view id) const {
  auto it = skills.find(std::string(id));
  return it == skills.end() ? nullptr : &it->second;
}

std::vector<std::string> check_library(const SkillLibrary& lib) {
  std::vector<std::string> v;
  for (const auto& [id, skill] : lib.skills) {
    if (id != skill.id) v.push_back("skill keyed as " + id + " carries id " + skill.id);
    for (const auto& problem : validate_skill(skill)) v.push_back("skill " + id + ": " + problem);
  }
  for (std::size_t i = 0; i < lib.relation_priors.size(); ++i) {
    const auto& r = lib.relation_priors[i];
    if (r.from == r.to) v.push_back("relation prior " + r.from + " is a self loop");
    if (!lib.find(r.from)) v.push_back("relation prior source " + r.from + " not in library");
    if (!lib.find(r.to)) v.push_back("relation prior target " + r.to + " not in library");
    if (i > 0) {
      const auto& p = lib.relation_priors[i - 1];
      if (std::tie(p.from, p.to) >= std::tie(r.from, r.to)) {
        v.push_back("relation priors not sorted/unique at " + r.from + "->" + r.to);
      }
    }
  }
  for (const auto& f : lib.failure_subset) {
    for (const auto& id : f.skills) {
      if (!lib.find(id)) v.push_back("failure ref " + f.trajectory + " names unknown skill " + id);
    }
  }
  return v;
}

void canonicalize_relations(std::vector<RelationPrior>& priors) {
  std::sort(priors.begin(), priors.end(), [](const RelationPrior& a, const RelationPrior& b) {
    return std::tie(a.from, a.to) < std::tie(b.from, b.to);
  });
  std::vector<RelationPrior> out;
  out.reserve(priors.size());
  for (auto& r : priors) {
    if (!out.empty() && out.back().from == r.from && out.back().to == r.to) {
      out.back().support += r.support;
      out.back().failure += r.failure;
    } else {
      out.push_back(std::move(r));
    }
  }
  priors = std::move(out);
}

SkillLibrary library_upsert(SkillLibrary lib, std::span<const AtomicSkill> skills,
                            bool bump_version) {
  for (const auto& s : skills) {
    auto violations = validate_skill(s);
    if (!violations.empty()) throw ValidationError("skill " + s.id, std::move(violations));
  }
  for (const auto& s : skills) {
    auto it = lib.skills.find(s.id);
    if (it == lib.skills.end()) {
      lib.skills.emplace(s.id, s);
    } else {
      const auto success = it->second.success;
      const auto failure = it->second.failure;
      it->second = s;
      it->second.success = success;
      it->second.failure = failure;
    }
  }
  if (bump_version) ++lib.version;
  return lib;
}

}  // namespace geoskill
