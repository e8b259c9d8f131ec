#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

namespace geoskill {

/// Accounting for one evolve step. Balances exactly:
/// size_after == size_before + added - merged - pruned_skills.
struct EvolutionReport {
  std::uint64_t version_before = 0;
  std::uint64_t version_after = 0;
  std::uint64_t size_before = 0;
  std::uint64_t size_after = 0;

  std::uint64_t records = 0;    // labeled records used
  std::uint64_t unlabeled = 0;  // records without outcome or ground truth, ignored
  std::uint64_t successes = 0;
  std::uint64_t failures = 0;
  std::uint64_t success_increments = 0;  // per-skill counter increments
  std::uint64_t failure_increments = 0;
  std::map<std::string, std::uint64_t> error_types;

  std::uint64_t batches = 0;
  std::uint64_t proposed = 0;    // candidates returned by synthesis
  std::uint64_t invalid = 0;     // dropped by skill validation
  std::uint64_t over_limit = 0;  // valid but beyond the per-batch cap
  std::uint64_t duplicates = 0;  // content ids already present
  std::uint64_t added = 0;
  std::uint64_t merged = 0;  // skills absorbed into a survivor
  std::uint64_t pruned_skills = 0;
  std::uint64_t pruned_relations = 0;
  std::uint64_t relations_before = 0;
  std::uint64_t relations_after = 0;
  std::uint64_t failure_refs_after = 0;

  bool dry_run = false;

  bool balances() const noexcept { return size_before + added == size_after + merged + pruned_skills; }
  bool operator==(const EvolutionReport&) const = default;
};

nlohmann::ordered_json report_to_json(const EvolutionReport& r);
EvolutionReport report_from_json(const nlohmann::json& j);

}  // namespace geoskill
