#include "geoskill/expert_compiler.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

#include "geoskill/errors.hpp"
#include "geoskill/jsonl.hpp"
#include "geoskill/text.hpp"

using nlohmann::json;

namespace geoskill {

// ---------------------------------------------------------------------------
// Trajectory records

namespace {

std::optional<std::string> string_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

TrajectoryParseResult parse_trajectory_records(std::istream& in) {
  TrajectoryParseResult result;
  jsonl::for_each_line(in, [&](const jsonl::Line& line) {
    auto diag = [&](std::string message) {
      result.diagnostics.push_back(ParseDiagnostic{line.number, std::move(message)});
    };
    json j;
    try {
      j = json::parse(line.text);
    } catch (const json::parse_error& e) {
      diag("malformed JSON at byte " + std::to_string(line.byte_offset + (e.byte ? e.byte - 1 : 0)));
      return;
    }
    if (!j.is_object()) return diag("record is not an object");

    ExpertTrajectoryRecord rec;
    auto id = string_field(j, "trajectory_id");
    if (!id) return diag("missing field 'trajectory_id'");
    rec.trajectory_id = *id;

    auto rounds = j.find("rounds");
    if (rounds == j.end() || !rounds->is_array()) return diag("missing field 'rounds'");
    if (rounds->empty()) return diag("field 'rounds' is empty");
    for (std::size_t r = 0; r < rounds->size(); ++r) {
      const auto& round = (*rounds)[r];
      if (!round.is_object()) return diag("round " + std::to_string(r) + " is not an object");
      auto reasoning = string_field(round, "reasoning");
      if (!reasoning) return diag("round " + std::to_string(r) + " missing field 'reasoning'");
      auto conclusion = string_field(round, "conclusion");
      if (!conclusion) return diag("round " + std::to_string(r) + " missing field 'conclusion'");
      rec.rounds.push_back(TrajectoryRound{*reasoning, *conclusion});
    }

    auto outcome = string_field(j, "outcome");
    if (!outcome) return diag("missing field 'outcome'");
    if (*outcome == "success") {
      rec.outcome = TrajectoryOutcome::Success;
    } else if (*outcome == "brittle") {
      rec.outcome = TrajectoryOutcome::Brittle;
    } else {
      return diag("field 'outcome' must be success|brittle");
    }

    if (auto gt = j.find("ground_truth"); gt != j.end() && !gt->is_null()) {
      if (!gt->is_object()) return diag("field 'ground_truth' is not an object");
      try {
        if (gt->contains("lat") && gt->contains("lon")) {
          rec.truth_coordinate = GeoCoordinate(gt->at("lat").get<double>(), gt->at("lon").get<double>());
        }
        if (auto c = string_field(*gt, "country")) {
          if (!text::is_iso2(*c)) return diag("field 'ground_truth.country' is not ISO-2");
          rec.truth_country = *c;
        }
      } catch (const std::exception& e) {
        return diag(std::string("field 'ground_truth': ") + e.what());
      }
    }
    result.records.push_back(std::move(rec));
  });
  return result;
}

TrajectoryParseResult parse_trajectory_records(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_trajectory_records(in);
}

// ---------------------------------------------------------------------------
// Certainty lexicon

CertaintyLexicon::CertaintyLexicon(std::vector<std::pair<std::string, double>> markers,
                                   double default_value)
    : default_(default_value) {
  if (!(default_value >= 0.0 && default_value <= 1.0)) {
    throw std::invalid_argument("lexicon default outside [0,1]");
  }
  for (auto& [marker, value] : markers) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw std::invalid_argument("lexicon value for '" + marker + "' outside [0,1]");
    }
    markers_.emplace_back(text::normalize(marker), value);
  }
  std::stable_sort(markers_.begin(), markers_.end(), [](const auto& a, const auto& b) {
    return text::tokenize(a.first).size() > text::tokenize(b.first).size();
  });
}

CertaintyLexicon CertaintyLexicon::defaults() {
  return CertaintyLexicon({{"definitely", 0.90},
                           {"certainly", 0.90},
                           {"clearly", 0.90},
                           {"likely", 0.70},
                           {"probably", 0.70},
                           {"possibly", 0.50},
                           {"maybe", 0.50},
                           {"perhaps", 0.50},
                           {"not sure", 0.35},
                           {"uncertain", 0.35}},
                          0.60);
}

CertaintyLexicon CertaintyLexicon::from_file(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(jsonl::read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 1, e.byte ? e.byte - 1 : 0, e.what());
  }
  std::vector<std::pair<std::string, double>> markers;
  for (const auto& entry : j.at("markers")) {
    markers.emplace_back(entry.at(0).get<std::string>(), entry.at(1).get<double>());
  }
  return CertaintyLexicon(std::move(markers), j.value("default", 0.60));
}

double CertaintyLexicon::calibrate(std::string_view text) const {
  const auto tokens = text::tokenize(text);
  std::vector<bool> used(tokens.size(), false);
  bool matched = false;
  double best = 0.0;
  for (const auto& [marker, value] : markers_) {
    const auto phrase = text::tokenize(marker);
    if (phrase.empty() || phrase.size() > tokens.size()) continue;
    for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
      bool hit = true;
      for (std::size_t k = 0; k < phrase.size() && hit; ++k) {
        hit = !used[i + k] && tokens[i + k] == phrase[k];
      }
      if (!hit) continue;
      for (std::size_t k = 0; k < phrase.size(); ++k) used[i + k] = true;
      best = matched ? std::max(best, value) : value;
      matched = true;
    }
  }
  return matched ? best : default_;
}

double calibrate_confidence(std::string_view text, const CertaintyLexicon& lexicon) {
  return lexicon.calibrate(text);
}

// ---------------------------------------------------------------------------
// Compilation

ExpertCompiler::ExpertCompiler(CertaintyLexicon lexicon, const Gazetteer& gazetteer,
                               const StageVocabulary& vocabulary)
    : lexicon_(std::move(lexicon)), gazetteer_(&gazetteer), vocabulary_(&vocabulary) {}

bool ExpertCompiler::is_semantically_empty(std::string_view step_text) const {
  const auto tokens = text::tokenize(step_text);
  if (!gazetteer_->scan(tokens).empty()) return false;
  std::size_t content = 0;
  for (const auto& t : tokens) {
    if (!vocabulary_->is_stopword(t)) ++content;
  }
  return content < 4;
}

Stage ExpertCompiler::assign_stage(std::string_view step_text) const {
  const auto tokens = text::tokenize(step_text);
  bool country_hit = false;
  for (const auto& hit : gazetteer_->scan(tokens)) {
    if (hit.kind == Gazetteer::Kind::Country) country_hit = true;
  }
  if (!country_hit && vocabulary_->has_global(tokens)) return Stage::GlobalRegion;
  if (vocabulary_->has_local(tokens)) return Stage::Local;
  return Stage::Country;
}

ExtractedSkills ExpertCompiler::extract(const ExpertTrajectoryRecord& record) const {
  ExtractedSkills out;
  for (const auto& round : record.rounds) {
    const std::string reasoning = text::collapse_whitespace(round.reasoning);
    const std::string conclusion = text::collapse_whitespace(round.conclusion);
    const std::string step = reasoning + " " + conclusion;
    if (is_semantically_empty(step)) continue;

    RegionMapping mapping = gazetteer_->map(conclusion);
    if (mapping.empty()) mapping = gazetteer_->map(reasoning);

    std::string instruction = reasoning.empty() ? conclusion : reasoning;
    std::string heuristic = reasoning.empty() ? std::string() : conclusion;
    AtomicSkill skill = make_skill(std::move(instruction), std::move(heuristic),
                                   lexicon_.calibrate(step), assign_stage(step),
                                   std::move(mapping.countries), std::move(mapping.regions),
                                   Provenance{ProvenanceKind::Expert, record.trajectory_id});
    if (!out.skills.empty() && out.skills.back().id != skill.id) {
      out.edges.emplace_back(out.skills.back().id, skill.id);
    }
    out.skills.push_back(std::move(skill));
  }
  return out;
}

SkillLibrary ExpertCompiler::compile(std::span<const ExpertTrajectoryRecord> records) const {
  SkillLibrary lib;
  std::map<std::pair<SkillId, SkillId>, RelationPrior> priors;

  for (const auto& rec : records) {
    if (rec.outcome != TrajectoryOutcome::Success) continue;
    auto extracted = extract(rec);
    for (auto& skill : extracted.skills) {
      auto [it, inserted] = lib.skills.emplace(skill.id, skill);
      if (inserted) continue;
      AtomicSkill& kept = it->second;
      kept.confidence = std::max(kept.confidence, skill.confidence);
      kept.prior_confidence = std::max(kept.prior_confidence, skill.prior_confidence);
      kept.countries.insert(skill.countries.begin(), skill.countries.end());
      kept.regions.insert(skill.regions.begin(), skill.regions.end());
      const std::string& tid = rec.trajectory_id;
      std::string_view sources = kept.provenance.source;
      bool present = false;
      std::size_t start = 0;
      while (start <= sources.size()) {
        const auto comma = sources.find(',', start);
        const auto piece = sources.substr(start, comma == std::string_view::npos ? sources.npos : comma - start);
        if (piece == tid) present = true;
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      if (!present) kept.provenance.source += "," + tid;
    }
    for (auto& [from, to] : extracted.edges) {
      auto& prior = priors[{from, to}];
      prior.from = from;
      prior.to = to;
      ++prior.support;
    }
  }

  for (const auto& rec : records) {
    if (rec.outcome != TrajectoryOutcome::Brittle) continue;
    auto extracted = extract(rec);
    FailureRef ref{rec.trajectory_id, {}, "expert:brittle"};
    for (const auto& skill : extracted.skills) {
      if (lib.find(skill.id) &&
          std::find(ref.skills.begin(), ref.skills.end(), skill.id) == ref.skills.end()) {
        ref.skills.push_back(skill.id);
      }
    }
    lib.failure_subset.push_back(std::move(ref));
    for (const auto& [from, to] : extracted.edges) {
      if (auto it = priors.find({from, to}); it != priors.end()) ++it->second.failure;
    }
  }

  lib.relation_priors.reserve(priors.size());
  for (auto& [key, prior] : priors) lib.relation_priors.push_back(std::move(prior));
  canonicalize_relations(lib.relation_priors);
  lib.version = 0;
  return lib;
}

ExtractedSkills extract_skills(const ExpertTrajectoryRecord& record) {
  return ExpertCompiler().extract(record);
}

SkillLibrary compile_library(std::span<const ExpertTrajectoryRecord> records) {
  return ExpertCompiler().compile(records);
}

}  // namespace geoskill
