#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "geoskill/gazetteer.hpp"
#include "geoskill/skill.hpp"

namespace geoskill {

struct TrajectoryRound {
  std::string reasoning;
  std::string conclusion;
};

enum class TrajectoryOutcome { Success, Brittle };

/// One round-wise expert trace in the normalized record format.
struct ExpertTrajectoryRecord {
  std::string trajectory_id;
  std::vector<TrajectoryRound> rounds;  // input order preserved, never empty
  TrajectoryOutcome outcome = TrajectoryOutcome::Success;
  std::optional<GeoCoordinate> truth_coordinate;
  std::string truth_country;  // empty when unknown
};

struct ParseDiagnostic {
  std::size_t line = 0;
  std::string message;
};

struct TrajectoryParseResult {
  std::vector<ExpertTrajectoryRecord> records;
  std::vector<ParseDiagnostic> diagnostics;
};

/// Malformed lines become diagnostics naming the line and the offending field;
/// an empty file yields no records and no diagnostics.
TrajectoryParseResult parse_trajectory_records(const std::filesystem::path& path);
TrajectoryParseResult parse_trajectory_records(std::istream& in);

/// Ordered (marker, value) table with a default. Markers are lowercase
/// phrases matched on word boundaries, longest first; overlapping shorter
/// markers are shadowed by a longer match.
class CertaintyLexicon {
 public:
  CertaintyLexicon(std::vector<std::pair<std::string, double>> markers, double default_value);

  static CertaintyLexicon defaults();
  /// `{"markers": [["definitely", 0.9], ...], "default": 0.6}`
  static CertaintyLexicon from_file(const std::filesystem::path& path);

  const std::vector<std::pair<std::string, double>>& markers() const noexcept { return markers_; }
  double default_value() const noexcept { return default_; }

  /// Value of the strongest marker present, or the default.
  double calibrate(std::string_view text) const;

 private:
  std::vector<std::pair<std::string, double>> markers_;
  double default_;
};

double calibrate_confidence(std::string_view text, const CertaintyLexicon& lexicon);

struct ExtractedSkills {
  std::vector<AtomicSkill> skills;                   // one per surviving step, in order
  std::vector<std::pair<SkillId, SkillId>> edges;    // consecutive surviving steps
};

/// Symbolic compilation of expert traces. No model calls.
class ExpertCompiler {
 public:
  explicit ExpertCompiler(CertaintyLexicon lexicon = CertaintyLexicon::defaults(),
                          const Gazetteer& gazetteer = Gazetteer::bundled(),
                          const StageVocabulary& vocabulary = StageVocabulary::bundled());

  /// Drops a step iff it has no gazetteer hit, no region token and fewer
  /// than four content words.
  bool is_semantically_empty(std::string_view step_text) const;

  /// GlobalRegion when coarse vocabulary appears without a country hit,
  /// Local when street/landmark vocabulary appears, Country otherwise.
  Stage assign_stage(std::string_view step_text) const;

  ExtractedSkills extract(const ExpertTrajectoryRecord& record) const;

  /// Version-0 library: skills from successful traces deduplicated by id
  /// (confidence = max, constraint sets unioned, sources joined); edges
  /// aggregated into relation priors; brittle traces become failure refs and
  /// count against priors they traverse.
  SkillLibrary compile(std::span<const ExpertTrajectoryRecord> records) const;

  const Gazetteer& gazetteer() const noexcept { return *gazetteer_; }
  const CertaintyLexicon& lexicon() const noexcept { return lexicon_; }

 private:
  CertaintyLexicon lexicon_;
  const Gazetteer* gazetteer_;
  const StageVocabulary* vocabulary_;
};

ExtractedSkills extract_skills(const ExpertTrajectoryRecord& record);
SkillLibrary compile_library(std::span<const ExpertTrajectoryRecord> records);

}  // namespace geoskill
