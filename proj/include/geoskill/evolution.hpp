#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geoskill/embedding.hpp"
#include "geoskill/evolution_report.hpp"
#include "geoskill/gateway.hpp"
#include "geoskill/inference.hpp"
#include "geoskill/library_store.hpp"
#include "geoskill/retrieval.hpp"
#include "geoskill/skill.hpp"

namespace geoskill {

enum class ErrorType { WrongContinent, WrongCountry, WrongRegion, CoordinateOffset, HallucinatedCue, RetrievalMiss };
std::string_view to_string(ErrorType t);
ErrorType parse_error_type(std::string_view s);

struct DiagnosticTuple {
  std::string query_id;
  GroundTruth truth;
  GeoPrediction prediction;
  ErrorType error_type = ErrorType::CoordinateOffset;
  double distance_km = 0.0;
  ReasoningTrajectory trajectory;
  std::vector<SkillId> implicated;  // invoked skills present in the library
};

struct EvolutionConfig {
  std::size_t batch_size = 20;
  double v_min = 0.30;
  double relation_failure_rate = 0.80;
  std::uint64_t relation_min_observations = 5;
  double merge_threshold = 0.92;
  double alpha = 5.0;
  std::size_t max_synthesized_per_batch = 20;
  double synthesized_confidence_cap = 0.7;
  double success_radius_km = 25.0;
  double synthesis_temperature = 0.2;
  double continent_km = 5000.0;
  double region_km = 200.0;
  std::size_t retrieval_miss_min = 2;

  /// Every out-of-range field, empty when valid.
  std::vector<std::string> check() const;
};

class EvolutionError : public Error {
 public:
  using Error::Error;
};

/// Sets e = 0 iff the prediction lies within `success_radius_km` of the truth.
InferenceRecord mark_outcome(InferenceRecord record, const GroundTruth& truth, double success_radius_km);

/// Skills a record invoked: trajectory steps and claim skill refs, sorted, unique.
std::vector<SkillId> invoked_skills(const InferenceRecord& record);

/// Override chain: grounding flags -> HallucinatedCue; fewer than
/// `retrieval_miss_min` retrieved skills sharing the true country ->
/// RetrievalMiss; then distance and country rules.
ErrorType classify_error(const GroundTruth& truth, const GeoPrediction& prediction, std::size_t matching_retrieved,
                         bool grounding_flagged, const EvolutionConfig& config = {});

/// Builds the diagnostic tuple for a failed record against `lib`.
DiagnosticTuple diagnose(const InferenceRecord& record, const SkillLibrary& lib, const EvolutionConfig& config);

/// v = (alpha * v0 + s) / (alpha + s + f).
double update_confidence(const AtomicSkill& skill, double alpha);

struct SynthesisResult {
  std::vector<AtomicSkill> candidates;  // valid, confidence capped
  std::uint64_t proposed = 0;
  std::uint64_t invalid = 0;
  std::uint64_t over_limit = 0;
  std::string prompt;
  std::string response;
};

/// One refinement call for a batch of diagnostics. Candidates get Synthesized
/// provenance with `source`, version_introduced = `version`.
SynthesisResult synthesize(std::span<const DiagnosticTuple> batch, ModelGateway& gateway,
                           const EvolutionConfig& config, std::uint64_t version, const std::string& source);

/// Reads a synthesis reply. Exposed for tests.
SynthesisResult parse_synthesis(const nlohmann::json& reply, const EvolutionConfig& config, std::uint64_t version,
                                const std::string& source);

struct MergeStats {
  std::uint64_t merged = 0;
  std::vector<std::pair<SkillId, SkillId>> absorbed;  // (absorbed, survivor) in merge order
};

/// Greedy agglomeration: repeatedly merges the most similar pair with cosine
/// >= threshold (ties by id pair) until none remains. Survivor has the higher
/// confidence, ties to the smaller id.
SkillLibrary merge(SkillLibrary lib, const EmbeddingProvider& provider, double threshold, MergeStats* stats = nullptr);

/// Folds `absorbed` into `survivor` inside `lib`: confidence max, sets union,
/// counters summed, priors and failure refs re-pointed.
void merge_pair(SkillLibrary& lib, const SkillId& survivor, const SkillId& absorbed);

struct PruneStats {
  std::uint64_t skills = 0;
  std::uint64_t relations = 0;
};

SkillLibrary prune(SkillLibrary lib, const EvolutionConfig& config, PruneStats* stats = nullptr);

struct EvolutionStep {
  SkillLibrary library;
  EvolutionReport report;
  SkillIndex index;
  std::vector<DiagnosticTuple> diagnostics;
};

/// Counters -> diagnose -> synthesis per batch -> upsert -> merge -> prune ->
/// confidence recompute -> version bump -> re-index. Pure: nothing is
/// persisted, so a failure leaves no trace.
EvolutionStep evolve_step(const SkillLibrary& lib, std::span<const InferenceRecord> records,
                          const EvolutionConfig& config, ModelGateway& gateway, const EmbeddingProvider& provider);

/// Publishes the step as the store head, then appends the report to the history.
void commit_step(LibraryStore& store, const EvolutionStep& step);

std::vector<EvolutionReport> read_history(const std::filesystem::path& path);

}  // namespace geoskill
