#include "geoskill/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>

#include "geoskill/jsonl.hpp"
#include "geoskill/metrics.hpp"
#include "geoskill/prompts.hpp"

namespace geoskill {

std::string_view to_string(ErrorType t) {
  switch (t) {
    case ErrorType::WrongContinent:
      return "wrong_continent";
    case ErrorType::WrongCountry:
      return "wrong_country";
    case ErrorType::WrongRegion:
      return "wrong_region";
    case ErrorType::CoordinateOffset:
      return "coordinate_offset";
    case ErrorType::HallucinatedCue:
      return "hallucinated_cue";
    case ErrorType::RetrievalMiss:
      return "retrieval_miss";
  }
  return "coordinate_offset";
}

ErrorType parse_error_type(std::string_view s) {
  for (auto t : {ErrorType::WrongContinent, ErrorType::WrongCountry, ErrorType::WrongRegion,
                 ErrorType::CoordinateOffset, ErrorType::HallucinatedCue, ErrorType::RetrievalMiss}) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown error type '" + std::string(s) + "'");
}

std::vector<std::string> EvolutionConfig::check() const {
  std::vector<std::string> v;
  auto unit = [&](double x, const char* name) {
    if (!(x >= 0.0 && x <= 1.0)) v.push_back(std::string(name) + " must lie in [0, 1]");
  };
  if (batch_size == 0) v.push_back("batch_size must be at least 1");
  unit(v_min, "v_min");
  unit(relation_failure_rate, "relation_failure_rate");
  if (!(merge_threshold > 0.0 && merge_threshold <= 1.0)) v.push_back("merge_threshold must lie in (0, 1]");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) v.push_back("alpha must be positive");
  unit(synthesized_confidence_cap, "synthesized_confidence_cap");
  if (!(success_radius_km >= 0.0)) v.push_back("success_radius_km must be non-negative");
  if (!(synthesis_temperature >= 0.0 && synthesis_temperature <= 2.0)) {
    v.push_back("synthesis_temperature must lie in [0, 2]");
  }
  if (!(region_km >= 0.0 && continent_km >= region_km)) v.push_back("region_km must lie in [0, continent_km]");
  return v;
}

InferenceRecord mark_outcome(InferenceRecord record, const GroundTruth& truth, double success_radius_km) {
  const double d = haversine_km(record.prediction.coordinates, truth.coordinates);
  record.ground_truth = truth;
  record.outcome = d <= success_radius_km ? 0 : 1;
  return record;
}

std::vector<SkillId> invoked_skills(const InferenceRecord& record) {
  std::set<SkillId> ids(record.prediction.trajectory.steps.begin(), record.prediction.trajectory.steps.end());
  for (const auto& c : record.prediction.evidence) ids.insert(c.skills.begin(), c.skills.end());
  return {ids.begin(), ids.end()};
}

ErrorType classify_error(const GroundTruth& truth, const GeoPrediction& prediction, std::size_t matching_retrieved,
                         bool grounding_flagged, const EvolutionConfig& config) {
  if (grounding_flagged) return ErrorType::HallucinatedCue;
  if (matching_retrieved < config.retrieval_miss_min) return ErrorType::RetrievalMiss;
  const double d = haversine_km(truth.coordinates, prediction.coordinates);
  if (d > config.continent_km) return ErrorType::WrongContinent;
  if (prediction.country != truth.country) return ErrorType::WrongCountry;
  if (d > config.region_km) return ErrorType::WrongRegion;
  return ErrorType::CoordinateOffset;
}

DiagnosticTuple diagnose(const InferenceRecord& record, const SkillLibrary& lib, const EvolutionConfig& config) {
  if (!record.ground_truth) throw EvolutionError("record " + record.query_id + " has no ground truth");
  DiagnosticTuple z;
  z.query_id = record.query_id;
  z.truth = *record.ground_truth;
  z.prediction = record.prediction;
  z.trajectory = record.prediction.trajectory;
  z.distance_km = haversine_km(z.truth.coordinates, z.prediction.coordinates);
  for (const auto& id : invoked_skills(record)) {
    if (lib.find(id)) z.implicated.push_back(id);
  }
  std::size_t matching = 0;
  for (const auto& r : record.retrieved) {
    const AtomicSkill* s = lib.find(r.id);
    if (s && s->countries.count(z.truth.country)) ++matching;
  }
  z.error_type = classify_error(z.truth, z.prediction, matching, !record.grounding_flags.empty(), config);
  return z;
}

double update_confidence(const AtomicSkill& skill, double alpha) {
  const double s = static_cast<double>(skill.success);
  const double f = static_cast<double>(skill.failure);
  return (alpha * skill.prior_confidence + s) / (alpha + s + f);
}

namespace {

std::string diagnostics_block(std::span<const DiagnosticTuple> batch) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& z : batch) {
    nlohmann::ordered_json j;
    j["query_id"] = z.query_id;
    j["truth"] = {{"country", z.truth.country}, {"lat", z.truth.coordinates.lat()}, {"lon", z.truth.coordinates.lon()}};
    j["prediction"] = {{"country", z.prediction.country},
                       {"region", z.prediction.region},
                       {"lat", z.prediction.coordinates.lat()},
                       {"lon", z.prediction.coordinates.lon()}};
    j["error_type"] = to_string(z.error_type);
    j["distance_km"] = std::round(z.distance_km * 10.0) / 10.0;
    j["trajectory"] = z.trajectory.steps;
    j["implicated"] = z.implicated;
    arr.push_back(std::move(j));
  }
  std::string out;
  for (const auto& j : arr) out += j.dump() + "\n";
  return out;
}

std::optional<AtomicSkill> candidate_from_json(const nlohmann::json& c, const EvolutionConfig& config,
                                               std::uint64_t version, const std::string& source) {
  if (!c.is_object()) return std::nullopt;
  try {
    std::set<std::string> countries;
    std::set<std::string> regions;
    for (const auto& x : c.value("countries", nlohmann::json::array())) countries.insert(x.get<std::string>());
    for (const auto& x : c.value("regions", nlohmann::json::array())) regions.insert(x.get<std::string>());
    const double conf = c.value("confidence", config.synthesized_confidence_cap);
    if (!std::isfinite(conf)) return std::nullopt;
    AtomicSkill s = make_skill(c.at("instruction").get<std::string>(), c.value("heuristic", std::string()),
                               std::min(conf, config.synthesized_confidence_cap),
                               parse_stage(c.value("stage", std::string("country"))), std::move(countries),
                               std::move(regions), {ProvenanceKind::Synthesized, source});
    s.version_introduced = version;
    if (!validate_skill(s).empty()) return std::nullopt;
    return s;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

SynthesisResult parse_synthesis(const nlohmann::json& reply, const EvolutionConfig& config, std::uint64_t version,
                                const std::string& source) {
  SynthesisResult r;
  if (!reply.is_object() || !reply.contains("skills") || !reply["skills"].is_array()) {
    throw GatewayError(GatewayError::Kind::Protocol, "synthesis reply lacks a 'skills' list");
  }
  for (const auto& c : reply["skills"]) {
    ++r.proposed;
    auto s = candidate_from_json(c, config, version, source);
    if (!s) {
      ++r.invalid;
      continue;
    }
    if (r.candidates.size() >= config.max_synthesized_per_batch) {
      ++r.over_limit;
      continue;
    }
    r.candidates.push_back(std::move(*s));
  }
  return r;
}

SynthesisResult synthesize(std::span<const DiagnosticTuple> batch, ModelGateway& gateway,
                           const EvolutionConfig& config, std::uint64_t version, const std::string& source) {
  if (batch.empty()) throw std::invalid_argument("synthesis needs at least one diagnostic");
  const std::string prompt =
      prompts::render(prompts::load("synthesis"), {{"diagnostics", diagnostics_block(batch)},
                                                   {"max_skills", std::to_string(config.max_synthesized_per_batch)}});
  ModelRequest req;
  req.messages.push_back({Role::User, {ContentPart::text(prompt)}});
  req.temperature = config.synthesis_temperature;
  req.format = ResponseFormat::StrictJson;
  req.alias = ModelAlias::OfflineRefinement;
  const ModelResponse resp = gateway.complete(req);
  SynthesisResult r = parse_synthesis(nlohmann::json::parse(resp.text), config, version, source);
  r.prompt = prompt;
  r.response = resp.text;
  return r;
}

void merge_pair(SkillLibrary& lib, const SkillId& survivor, const SkillId& absorbed) {
  auto s_it = lib.skills.find(survivor);
  auto d_it = lib.skills.find(absorbed);
  if (s_it == lib.skills.end() || d_it == lib.skills.end() || survivor == absorbed) {
    throw std::invalid_argument("merge needs two distinct library skills");
  }
  AtomicSkill& s = s_it->second;
  const AtomicSkill& d = d_it->second;
  s.confidence = std::max(s.confidence, d.confidence);
  s.prior_confidence = std::max(s.prior_confidence, d.prior_confidence);
  s.countries.insert(d.countries.begin(), d.countries.end());
  s.regions.insert(d.regions.begin(), d.regions.end());
  s.success += d.success;
  s.failure += d.failure;
  s.version_introduced = std::min(s.version_introduced, d.version_introduced);
  lib.skills.erase(d_it);

  std::vector<RelationPrior> priors;
  priors.reserve(lib.relation_priors.size());
  for (auto p : lib.relation_priors) {
    if (p.from == absorbed) p.from = survivor;
    if (p.to == absorbed) p.to = survivor;
    if (p.from != p.to) priors.push_back(std::move(p));
  }
  canonicalize_relations(priors);
  lib.relation_priors = std::move(priors);

  for (auto& f : lib.failure_subset) {
    bool touched = false;
    for (auto& id : f.skills) {
      if (id == absorbed) {
        id = survivor;
        touched = true;
      }
    }
    if (touched) {
      std::vector<SkillId> unique;
      for (const auto& id : f.skills) {
        if (std::find(unique.begin(), unique.end(), id) == unique.end()) unique.push_back(id);
      }
      f.skills = std::move(unique);
    }
  }
}

SkillLibrary merge(SkillLibrary lib, const EmbeddingProvider& provider, double threshold, MergeStats* stats) {
  std::map<SkillId, Vector> emb;
  for (const auto& [id, s] : lib.skills) {
    Vector v = provider.embed(index_text(s));
    const double n = std::sqrt(dot(v, v));
    if (n > 0.0) {
      for (double& x : v) x /= n;
    }
    emb.emplace(id, std::move(v));
  }

  // Qualifying pairs ordered by descending similarity, then (a, b) ascending.
  using Pair = std::tuple<double, SkillId, SkillId>;
  auto cmp = [](const Pair& x, const Pair& y) {
    if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) > std::get<0>(y);
    if (std::get<1>(x) != std::get<1>(y)) return std::get<1>(x) < std::get<1>(y);
    return std::get<2>(x) < std::get<2>(y);
  };
  std::set<Pair, decltype(cmp)> queue(cmp);
  std::map<SkillId, std::vector<Pair>> involving;
  auto add_pair = [&](const SkillId& a, const SkillId& b, double sim) {
    Pair p = a < b ? Pair{sim, a, b} : Pair{sim, b, a};
    queue.insert(p);
    involving[a].push_back(p);
    involving[b].push_back(p);
  };
  auto drop_pairs = [&](const SkillId& id) {
    auto it = involving.find(id);
    if (it == involving.end()) return;
    for (const auto& p : it->second) queue.erase(p);
    involving.erase(it);
  };

  std::vector<const SkillId*> ids;
  std::vector<const Vector*> vecs;
  for (const auto& [id, v] : emb) {
    ids.push_back(&id);
    vecs.push_back(&v);
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t j = i + 1; j < ids.size(); ++j) {
      const double sim = dot(*vecs[i], *vecs[j]);
      if (sim >= threshold) add_pair(*ids[i], *ids[j], sim);
    }
  }

  while (!queue.empty()) {
    const auto [sim, a, b] = *queue.begin();
    const AtomicSkill& sa = lib.skills.at(a);
    const AtomicSkill& sb = lib.skills.at(b);
    // a < b, so a keeps ties.
    const SkillId survivor = sb.confidence > sa.confidence ? b : a;
    const SkillId absorbed = survivor == a ? b : a;
    drop_pairs(a);
    drop_pairs(b);
    merge_pair(lib, survivor, absorbed);
    emb.erase(absorbed);
    if (stats) {
      ++stats->merged;
      stats->absorbed.emplace_back(absorbed, survivor);
    }

    // Region tags may have grown, which changes the survivor's text.
    Vector v = provider.embed(index_text(lib.skills.at(survivor)));
    const double n = std::sqrt(dot(v, v));
    if (n > 0.0) {
      for (double& x : v) x /= n;
    }
    emb[survivor] = std::move(v);
    for (const auto& [id, other] : emb) {
      if (id == survivor) continue;
      const double s = dot(emb[survivor], other);
      if (s >= threshold) add_pair(survivor, id, s);
    }
  }
  return lib;
}

SkillLibrary prune(SkillLibrary lib, const EvolutionConfig& config, PruneStats* stats) {
  PruneStats local;
  std::set<SkillId> removed;
  for (auto it = lib.skills.begin(); it != lib.skills.end();) {
    if (update_confidence(it->second, config.alpha) < config.v_min) {
      removed.insert(it->first);
      it = lib.skills.erase(it);
      ++local.skills;
    } else {
      ++it;
    }
  }

  std::vector<RelationPrior> kept;
  for (auto& p : lib.relation_priors) {
    if (!lib.skills.count(p.from) || !lib.skills.count(p.to)) {
      ++local.relations;
      continue;
    }
    const auto obs = p.observations();
    if (obs >= config.relation_min_observations && obs > 0 &&
        static_cast<double>(p.failure) / static_cast<double>(obs) >= config.relation_failure_rate) {
      ++local.relations;
      continue;
    }
    kept.push_back(std::move(p));
  }
  lib.relation_priors = std::move(kept);

  std::vector<FailureRef> refs;
  for (auto& f : lib.failure_subset) {
    const bool had_skills = !f.skills.empty();
    std::erase_if(f.skills, [&](const SkillId& id) { return removed.count(id) > 0; });
    if (had_skills && f.skills.empty()) continue;
    refs.push_back(std::move(f));
  }
  lib.failure_subset = std::move(refs);

  if (stats) *stats = local;
  return lib;
}

EvolutionStep evolve_step(const SkillLibrary& input, std::span<const InferenceRecord> records,
                          const EvolutionConfig& config, ModelGateway& gateway, const EmbeddingProvider& provider) {
  if (auto bad = config.check(); !bad.empty()) throw ValidationError("evolution config", bad);
  if (auto bad = check_library(input); !bad.empty()) throw ValidationError("input library", bad);

  EvolutionStep step;
  EvolutionReport& rep = step.report;
  SkillLibrary lib = input;
  const std::uint64_t next_version = input.version + 1;
  rep.version_before = input.version;
  rep.version_after = next_version;
  rep.size_before = input.skills.size();
  rep.relations_before = input.relation_priors.size();

  // Counters and relation feedback.
  std::vector<const InferenceRecord*> failed;
  std::vector<InferenceRecord> marked;
  marked.reserve(records.size());
  for (const auto& r0 : records) {
    if (!r0.outcome && !r0.ground_truth) {
      ++rep.unlabeled;
      continue;
    }
    marked.push_back(r0.outcome ? r0 : mark_outcome(r0, *r0.ground_truth, config.success_radius_km));
  }
  for (const auto& r : marked) {
    ++rep.records;
    const bool ok = *r.outcome == 0;
    ok ? ++rep.successes : ++rep.failures;
    for (const auto& id : invoked_skills(r)) {
      auto it = lib.skills.find(id);
      if (it == lib.skills.end()) continue;
      if (ok) {
        ++it->second.success;
        ++rep.success_increments;
      } else {
        ++it->second.failure;
        ++rep.failure_increments;
      }
    }
    const auto& steps = r.prediction.trajectory.steps;
    for (std::size_t i = 0; i + 1 < steps.size(); ++i) {
      auto it = std::lower_bound(lib.relation_priors.begin(), lib.relation_priors.end(),
                                 std::pair{steps[i], steps[i + 1]}, [](const RelationPrior& p, const auto& key) {
                                   return std::tie(p.from, p.to) < std::tie(key.first, key.second);
                                 });
      if (it == lib.relation_priors.end() || it->from != steps[i] || it->to != steps[i + 1]) continue;
      ok ? ++it->support : ++it->failure;
    }
    if (!ok) failed.push_back(&r);
  }

  // Diagnosis against the library the records were produced with.
  for (const auto* r : failed) {
    DiagnosticTuple z = diagnose(*r, input, config);
    ++rep.error_types[std::string(to_string(z.error_type))];
    FailureRef ref{r->query_id, z.implicated, "inference:" + std::string(to_string(z.error_type))};
    if (std::find(lib.failure_subset.begin(), lib.failure_subset.end(), ref) == lib.failure_subset.end()) {
      lib.failure_subset.push_back(std::move(ref));
    }
    step.diagnostics.push_back(std::move(z));
  }

  // Synthesis per batch, then upsert of unseen ids.
  for (std::size_t start = 0; start < step.diagnostics.size(); start += config.batch_size) {
    const std::size_t n = std::min(config.batch_size, step.diagnostics.size() - start);
    const std::string source = "evolution:v" + std::to_string(next_version) + ":batch" + std::to_string(rep.batches);
    ++rep.batches;
    SynthesisResult syn = synthesize(std::span(step.diagnostics).subspan(start, n), gateway, config, next_version, source);
    rep.proposed += syn.proposed;
    rep.invalid += syn.invalid;
    rep.over_limit += syn.over_limit;
    std::vector<AtomicSkill> fresh;
    for (auto& c : syn.candidates) {
      if (lib.skills.count(c.id) ||
          std::any_of(fresh.begin(), fresh.end(), [&](const AtomicSkill& f) { return f.id == c.id; })) {
        ++rep.duplicates;
        continue;
      }
      fresh.push_back(std::move(c));
    }
    const std::size_t before = lib.skills.size();
    lib = library_upsert(std::move(lib), fresh, false);
    rep.added += lib.skills.size() - before;
  }

  MergeStats ms;
  lib = merge(std::move(lib), provider, config.merge_threshold, &ms);
  rep.merged = ms.merged;
  failpoint("evolve.after_merge");

  PruneStats ps;
  lib = prune(std::move(lib), config, &ps);
  rep.pruned_skills = ps.skills;
  rep.pruned_relations = ps.relations;

  for (auto& [id, s] : lib.skills) s.confidence = update_confidence(s, config.alpha);
  lib.version = next_version;

  if (auto bad = check_library(lib); !bad.empty()) throw ValidationError("evolved library", bad);
  rep.size_after = lib.skills.size();
  rep.relations_after = lib.relation_priors.size();
  rep.failure_refs_after = lib.failure_subset.size();
  if (!rep.balances()) throw EvolutionError("evolution report does not balance");

  step.index = build_index(lib, provider);
  step.library = std::move(lib);
  return step;
}

void commit_step(LibraryStore& store, const EvolutionStep& step) {
  store.commit(step.library);
  jsonl::append(store.history_path(), report_to_json(step.report));
}

nlohmann::ordered_json report_to_json(const EvolutionReport& r) {
  nlohmann::ordered_json j;
  j["version_before"] = r.version_before;
  j["version_after"] = r.version_after;
  j["size_before"] = r.size_before;
  j["size_after"] = r.size_after;
  j["records"] = r.records;
  j["unlabeled"] = r.unlabeled;
  j["successes"] = r.successes;
  j["failures"] = r.failures;
  j["success_increments"] = r.success_increments;
  j["failure_increments"] = r.failure_increments;
  j["error_types"] = r.error_types;
  j["batches"] = r.batches;
  j["proposed"] = r.proposed;
  j["invalid"] = r.invalid;
  j["over_limit"] = r.over_limit;
  j["duplicates"] = r.duplicates;
  j["added"] = r.added;
  j["merged"] = r.merged;
  j["pruned_skills"] = r.pruned_skills;
  j["pruned_relations"] = r.pruned_relations;
  j["relations_before"] = r.relations_before;
  j["relations_after"] = r.relations_after;
  j["failure_refs_after"] = r.failure_refs_after;
  j["dry_run"] = r.dry_run;
  return j;
}

EvolutionReport report_from_json(const nlohmann::json& j) {
  EvolutionReport r;
  auto u = [&](const char* key, std::uint64_t& out) { out = j.at(key).get<std::uint64_t>(); };
  u("version_before", r.version_before);
  u("version_after", r.version_after);
  u("size_before", r.size_before);
  u("size_after", r.size_after);
  u("added", r.added);
  u("merged", r.merged);
  u("pruned_skills", r.pruned_skills);
  auto o = [&](const char* key, std::uint64_t& out) { out = j.value(key, std::uint64_t{0}); };
  o("records", r.records);
  o("unlabeled", r.unlabeled);
  o("successes", r.successes);
  o("failures", r.failures);
  o("success_increments", r.success_increments);
  o("failure_increments", r.failure_increments);
  o("batches", r.batches);
  o("proposed", r.proposed);
  o("invalid", r.invalid);
  o("over_limit", r.over_limit);
  o("duplicates", r.duplicates);
  o("pruned_relations", r.pruned_relations);
  o("relations_before", r.relations_before);
  o("relations_after", r.relations_after);
  o("failure_refs_after", r.failure_refs_after);
  r.error_types = j.value("error_types", std::map<std::string, std::uint64_t>{});
  r.dry_run = j.value("dry_run", false);
  return r;
}

std::vector<EvolutionReport> read_history(const std::filesystem::path& path) {
  std::vector<EvolutionReport> out;
  jsonl::for_each_object(path, [&](const nlohmann::json& j, const jsonl::Line& line) {
    try {
      out.push_back(report_from_json(j));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), line.number, line.byte_offset, e.what());
    }
  });
  return out;
}

}  // namespace geoskill
