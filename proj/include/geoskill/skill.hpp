#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace geoskill {

using SkillId = std::string;

/// Coarse-to-fine reasoning stage. Ordering is meaningful.
enum class Stage { GlobalRegion = 0, Country = 1, Local = 2 };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view s);  // throws std::invalid_argument

enum class ProvenanceKind { Expert, Synthesized };

std::string_view to_string(ProvenanceKind kind);
ProvenanceKind parse_provenance_kind(std::string_view s);

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::Expert;
  std::string source;

  bool operator==(const Provenance&) const = default;
};

/// Latitude in [-90, 90], longitude normalized into (-180, 180].
class GeoCoordinate {
 public:
  GeoCoordinate() = default;
  GeoCoordinate(double lat_deg, double lon_deg);  // throws std::invalid_argument

  double lat() const noexcept { return lat_; }
  double lon() const noexcept { return lon_; }

  bool operator==(const GeoCoordinate&) const = default;

 private:
  double lat_ = 0.0;
  double lon_ = 0.0;
};

/// Minimal unit of geographic reasoning: instruction K, heuristic H and
/// reliability v, plus applicability constraints and outcome counters.
///
/// `confidence` is the effective reliability used by retrieval, planning and
/// pruning. `prior_confidence` is the calibrated starting value v0 that the
/// counter-based update smooths towards.
struct AtomicSkill {
  SkillId id;
  std::string instruction;
  std::string heuristic;
  double confidence = 0.6;
  double prior_confidence = 0.6;
  std::set<std::string> countries;
  std::set<std::string> regions;
  Stage stage = Stage::Country;
  Provenance provenance;
  std::uint64_t success = 0;
  std::uint64_t failure = 0;
  std::uint64_t version_introduced = 0;

  bool operator==(const AtomicSkill&) const = default;
};

/// Content id: hex digest over the normalized (lowercase, collapsed
/// whitespace) instruction and heuristic joined by a unit separator.
SkillId skill_id(std::string_view instruction, std::string_view heuristic);

/// Builds a skill with its id computed from the texts.
AtomicSkill make_skill(std::string instruction, std::string heuristic, double confidence,
                       Stage stage, std::set<std::string> countries = {},
                       std::set<std::string> regions = {},
                       Provenance provenance = {ProvenanceKind::Expert, ""});

/// Every violated invariant, empty when the skill is well formed.
std::vector<std::string> validate_skill(const AtomicSkill& skill);

struct RelationPrior {
  SkillId from;
  SkillId to;
  std::uint64_t support = 0;
  std::uint64_t failure = 0;

  std::uint64_t observations() const noexcept { return support + failure; }
  bool operator==(const RelationPrior&) const = default;
};

/// A trajectory retained as negative evidence, with the library skills it implicates.
struct FailureRef {
  std::string trajectory;
  std::vector<SkillId> skills;
  std::string reason;

  bool operator==(const FailureRef&) const = default;
};

/// Immutable-by-convention library snapshot. Operations return new values.
struct SkillLibrary {
  std::uint64_t version = 0;
  std::map<SkillId, AtomicSkill> skills;
  std::vector<RelationPrior> relation_priors;  // sorted by (from, to), unique pairs
  std::vector<FailureRef> failure_subset;

  const AtomicSkill* find(std::string_view id) const;
  bool operator==(const SkillLibrary&) const = default;
};

/// Library-level invariants: keyed ids match, skills valid, relation priors
/// closed over the skill set with no self loops or duplicate pairs, failure
/// references resolve.
std::vector<std::string> check_library(const SkillLibrary& lib);

/// Sorts relation priors by (from, to), folding duplicate pairs by summing counts.
void canonicalize_relations(std::vector<RelationPrior>& priors);

/// Inserts or replaces skills by id. Replacement keeps the existing success and
/// failure counters. Throws ValidationError naming the first invalid skill.
SkillLibrary library_upsert(SkillLibrary lib, std::span<const AtomicSkill> skills,
                            bool bump_version);

}  // namespace geoskill
