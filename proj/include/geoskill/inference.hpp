#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "geoskill/errors.hpp"
#include "geoskill/gateway.hpp"
#include "geoskill/graph.hpp"
#include "geoskill/retrieval.hpp"
#include "geoskill/scene.hpp"
#include "geoskill/skill.hpp"

namespace geoskill {

enum class InferenceMode { Full, WoSkill, RandomSkill, ShuffledOrder, AtomicOnly };
std::string_view to_string(InferenceMode mode);
InferenceMode parse_inference_mode(std::string_view s);  // throws std::invalid_argument

/// A claim must cite scene evidence and, unless skills are disabled, a
/// retrieved skill.
struct GroundedClaim {
  std::string text;
  std::vector<std::string> evidence;  // scene field paths
  std::vector<SkillId> skills;

  bool operator==(const GroundedClaim&) const = default;
};

struct GeoPrediction {
  std::string country;  // ISO-2
  std::string region;
  GeoCoordinate coordinates;
  double confidence = 0.0;
  std::vector<GroundedClaim> evidence;
  ReasoningTrajectory trajectory;

  bool operator==(const GeoPrediction&) const = default;
};

nlohmann::ordered_json prediction_to_json(const GeoPrediction& p);

/// Reads the model's answer shape (`lat`/`lon` at top level, trajectory as
/// `[{"skill","conclusion"}]`, claims under `claims`) as well as the logged
/// shape. Throws std::invalid_argument describing the first schema problem.
GeoPrediction prediction_from_json(const nlohmann::json& j);

struct GroundingIssue {
  std::size_t claim = 0;
  std::string message;

  bool operator==(const GroundingIssue&) const = default;
};

/// Dual-grounding check. Every claim needs at least one evidence ref that
/// resolves into the scene and only such refs; with `require_skill_refs` it
/// also needs at least one skill ref, all among `retrieved`.
std::vector<GroundingIssue> validate_grounding(const GeoPrediction& prediction, const SceneParse& scene,
                                               std::span<const SkillId> retrieved,
                                               bool require_skill_refs = true);

class GroundingError : public Error {
 public:
  explicit GroundingError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

/// Raised by vote() when no rollout produced an accepted prediction.
class RolloutsFailedError : public Error {
 public:
  explicit RolloutsFailedError(std::vector<std::string> causes);
  const std::vector<std::string>& causes() const noexcept { return causes_; }

 private:
  std::vector<std::string> causes_;
};

struct InferenceParams {
  RetrievalParams retrieval;
  double task_prior_weight = 0.4;
  double scene_weight = 0.6;
  double scene_temperature = 0.0;
  double temperature = 0.2;  // single-shot reasoning
  double vote_base_temperature = 0.1;
  double vote_jitter = 0.05;  // added per rollout index
  std::size_t rollouts = 1;
  InferenceMode mode = InferenceMode::Full;
  std::uint64_t seed = 0;
  std::string task_prior;                       // empty: bundled default
  std::optional<std::string> fixed_timestamp;  // replaces wall-clock stamps
};

struct Transcript {
  std::string stage;  // scene_parse | reasoning | corrective
  int rollout = -1;
  double temperature = 0.0;
  std::string template_name;
  std::string prompt;
  std::string response;

  bool operator==(const Transcript&) const = default;
};

struct GroundTruth {
  GeoCoordinate coordinates;
  std::string country;

  bool operator==(const GroundTruth&) const = default;
};

struct RolloutSummary {
  std::size_t index = 0;
  double temperature = 0.0;
  std::optional<GeoPrediction> prediction;
  std::string error;

  bool operator==(const RolloutSummary&) const = default;
};

struct InferenceRecord {
  std::string query_id;
  std::string image;
  InferenceMode mode = InferenceMode::Full;
  std::uint64_t seed = 0;
  std::uint64_t library_version = 0;
  GeoPrediction prediction;
  SceneParse scene;
  std::vector<ScoredSkill> retrieved;
  std::size_t candidate_count = 0;
  TaskSkillGraph graph;
  std::vector<SkillId> plan;
  std::vector<RolloutSummary> rollouts;
  std::vector<Transcript> transcripts;
  std::map<std::string, std::string> template_hashes;
  std::vector<std::string> grounding_flags;  // violations seen before acceptance
  std::optional<int> outcome;                // e: 0 success, 1 failure
  std::optional<GroundTruth> ground_truth;
  std::string started_at;
  std::string finished_at;

  std::vector<SkillId> retrieved_ids() const;
  bool operator==(const InferenceRecord&) const = default;
};

/// Per-query state shared by all rollouts: perception, retrieval, graph, plan
/// and the rendered reasoning prompt.
struct PreparedQuery {
  std::string query_id;
  std::string image;
  SceneParse scene;
  std::vector<ScoredSkill> retrieved;
  std::size_t candidate_count = 0;
  std::vector<AtomicSkill> skills;  // retrieved skills, in retrieval order
  TaskSkillGraph graph;
  std::vector<SkillId> plan;
  std::string prompt;
  std::vector<Transcript> transcripts;
};

/// Sections of the reasoning prompt for a mode. Exposed for tests.
std::string skills_section(std::span<const AtomicSkill> skills);
std::string graph_section(const TaskSkillGraph& graph);
std::string plan_section(std::span<const SkillId> plan);

/// Four-stage online pipeline over an immutable (library, index) snapshot.
class InferenceEngine {
 public:
  /// Throws DataError when the index was built from another library version.
  InferenceEngine(const SkillLibrary& library, const SkillIndex& index, const EmbeddingProvider& embedder,
                  ModelGateway& gateway, InferenceParams params);

  PreparedQuery prepare(const std::string& query_id, const std::string& image) const;

  /// One reasoning rollout with at most one corrective re-prompt. Transcripts
  /// and grounding flags are appended to the given sinks.
  GeoPrediction reason(const PreparedQuery& q, double temperature, int rollout,
                       std::vector<Transcript>& transcripts, std::vector<std::string>& flags) const;

  std::pair<GeoPrediction, InferenceRecord> infer(const std::string& query_id, const std::string& image) const;

  /// n == 1 is exactly infer(). For n > 1, one prepared query feeds n
  /// rollouts at base + jitter * i and the results are aggregated.
  std::pair<GeoPrediction, InferenceRecord> vote(const std::string& query_id, const std::string& image,
                                                 std::size_t n) const;

  const InferenceParams& params() const noexcept { return params_; }

 private:
  InferenceRecord make_record(const PreparedQuery& q) const;
  std::string now() const;

  const SkillLibrary& library_;
  const SkillIndex& index_;
  const EmbeddingProvider& embedder_;
  ModelGateway& gateway_;
  InferenceParams params_;
};

/// Majority country (ties: higher mean confidence, then smaller code),
/// Haversine medoid of the agreeing rollouts (ties: earliest rollout),
/// deduplicated union of their claims. Returns the index of the medoid
/// rollout alongside the aggregate. Throws std::invalid_argument when empty.
std::pair<GeoPrediction, std::size_t> aggregate_votes(std::span<const GeoPrediction> rollouts);

/// Index of the coordinate minimizing summed Haversine distance to the
/// others; ties go to the smaller index.
std::size_t medoid_index(std::span<const GeoCoordinate> points);

}  // namespace geoskill
