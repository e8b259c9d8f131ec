#include "geoskill/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <limits>
#include <map>
#include <stdexcept>

#include "geoskill/hashing.hpp"
#include "geoskill/metrics.hpp"
#include "geoskill/prompts.hpp"
#include "geoskill/rng.hpp"
#include "geoskill/text.hpp"

namespace geoskill {

std::string_view to_string(InferenceMode mode) {
  switch (mode) {
    case InferenceMode::Full:
      return "full";
    case InferenceMode::WoSkill:
      return "wo_skill";
    case InferenceMode::RandomSkill:
      return "random_skill";
    case InferenceMode::ShuffledOrder:
      return "shuffled_order";
    case InferenceMode::AtomicOnly:
      return "atomic_only";
  }
  return "full";
}

InferenceMode parse_inference_mode(std::string_view s) {
  if (s == "full") return InferenceMode::Full;
  if (s == "wo_skill") return InferenceMode::WoSkill;
  if (s == "random_skill") return InferenceMode::RandomSkill;
  if (s == "shuffled_order") return InferenceMode::ShuffledOrder;
  if (s == "atomic_only") return InferenceMode::AtomicOnly;
  throw std::invalid_argument("unknown inference mode '" + std::string(s) + "'");
}

namespace {

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* what) {
  if (j.is_null()) return {};
  if (!j.is_array()) throw std::invalid_argument(std::string(what) + " must be a list");
  std::vector<std::string> out;
  for (const auto& x : j) {
    if (!x.is_string()) throw std::invalid_argument(std::string(what) + " must hold strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

bool uses_skills(InferenceMode m) { return m != InferenceMode::WoSkill; }
bool uses_graph(InferenceMode m) { return m != InferenceMode::WoSkill && m != InferenceMode::AtomicOnly; }

}  // namespace

nlohmann::ordered_json prediction_to_json(const GeoPrediction& p) {
  nlohmann::ordered_json j;
  j["country"] = p.country;
  j["region"] = p.region;
  j["lat"] = p.coordinates.lat();
  j["lon"] = p.coordinates.lon();
  j["confidence"] = p.confidence;
  j["trajectory"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < p.trajectory.steps.size(); ++i) {
    nlohmann::ordered_json step;
    step["skill"] = p.trajectory.steps[i];
    step["conclusion"] = i < p.trajectory.conclusions.size() ? p.trajectory.conclusions[i] : "";
    j["trajectory"].push_back(std::move(step));
  }
  j["claims"] = nlohmann::ordered_json::array();
  for (const auto& c : p.evidence) {
    nlohmann::ordered_json claim;
    claim["text"] = c.text;
    claim["evidence"] = c.evidence;
    claim["skills"] = c.skills;
    j["claims"].push_back(std::move(claim));
  }
  return j;
}

GeoPrediction prediction_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("answer is not a JSON object");
  GeoPrediction p;
  if (!j.contains("country") || !j["country"].is_string()) throw std::invalid_argument("answer lacks a 'country' string");
  p.country = text::collapse_whitespace(j["country"].get<std::string>());
  std::transform(p.country.begin(), p.country.end(), p.country.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (!text::is_iso2(p.country)) throw std::invalid_argument("country '" + p.country + "' is not an ISO-2 code");
  if (j.contains("region")) {
    if (!j["region"].is_string()) throw std::invalid_argument("'region' must be a string");
    p.region = j["region"].get<std::string>();
  }
  if (!j.contains("lat") || !j["lat"].is_number() || !j.contains("lon") || !j["lon"].is_number()) {
    throw std::invalid_argument("answer lacks numeric 'lat' and 'lon'");
  }
  p.coordinates = GeoCoordinate(j["lat"].get<double>(), j["lon"].get<double>());
  if (!j.contains("confidence") || !j["confidence"].is_number()) {
    throw std::invalid_argument("answer lacks a numeric 'confidence'");
  }
  p.confidence = j["confidence"].get<double>();
  if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) throw std::invalid_argument("confidence out of range");

  if (j.contains("trajectory") && !j["trajectory"].is_null()) {
    if (!j["trajectory"].is_array()) throw std::invalid_argument("'trajectory' must be a list");
    for (const auto& step : j["trajectory"]) {
      if (step.is_string()) {
        p.trajectory.steps.push_back(step.get<std::string>());
        p.trajectory.conclusions.emplace_back();
        continue;
      }
      if (!step.is_object() || !step.contains("skill") || !step["skill"].is_string()) {
        throw std::invalid_argument("trajectory steps need a 'skill' id");
      }
      p.trajectory.steps.push_back(step["skill"].get<std::string>());
      p.trajectory.conclusions.push_back(step.value("conclusion", std::string()));
    }
  }
  const char* claims_key = j.contains("claims") ? "claims" : "evidence";
  if (j.contains(claims_key) && !j[claims_key].is_null()) {
    if (!j[claims_key].is_array()) throw std::invalid_argument("'claims' must be a list");
    for (const auto& c : j[claims_key]) {
      if (!c.is_object() || !c.contains("text") || !c["text"].is_string()) {
        throw std::invalid_argument("claims need a 'text' string");
      }
      GroundedClaim claim;
      claim.text = c["text"].get<std::string>();
      claim.evidence = string_list(c.value("evidence", nlohmann::json()), "claim evidence");
      claim.skills = string_list(c.value("skills", nlohmann::json()), "claim skills");
      p.evidence.push_back(std::move(claim));
    }
  }
  return p;
}

std::vector<GroundingIssue> validate_grounding(const GeoPrediction& prediction, const SceneParse& scene,
                                               std::span<const SkillId> retrieved, bool require_skill_refs) {
  std::vector<GroundingIssue> issues;
  if (prediction.evidence.empty()) {
    issues.push_back({std::numeric_limits<std::size_t>::max(), "prediction cites no grounded claims"});
  }
  for (std::size_t i = 0; i < prediction.evidence.size(); ++i) {
    const auto& c = prediction.evidence[i];
    if (c.evidence.empty()) issues.push_back({i, "claim has no scene evidence"});
    for (const auto& ref : c.evidence) {
      if (!resolve_evidence(scene, ref)) {
        issues.push_back({i, "evidence '" + ref + "' does not resolve in the scene"});
      }
    }
    if (require_skill_refs && c.skills.empty()) {
      issues.push_back({i, "unattributable claim: no skill reference"});
    }
    for (const auto& s : c.skills) {
      if (std::find(retrieved.begin(), retrieved.end(), s) == retrieved.end()) {
        issues.push_back({i, "unattributable claim: skill '" + s + "' was not retrieved"});
      }
    }
  }
  return issues;
}

GroundingError::GroundingError(std::vector<std::string> violations)
    : Error("prediction failed dual grounding after a corrective re-prompt: " + join(violations, "; ")),
      violations_(std::move(violations)) {}

RolloutsFailedError::RolloutsFailedError(std::vector<std::string> causes)
    : Error("all rollouts failed: " + join(causes, "; ")), causes_(std::move(causes)) {}

std::vector<SkillId> InferenceRecord::retrieved_ids() const {
  std::vector<SkillId> out;
  out.reserve(retrieved.size());
  for (const auto& r : retrieved) out.push_back(r.id);
  return out;
}

std::string skills_section(std::span<const AtomicSkill> skills) {
  std::string out = "\n## Skills\nCite a skill by its id in a claim's \"skills\" list.\n";
  char conf[16];
  for (const auto& s : skills) {
    std::snprintf(conf, sizeof conf, "%.2f", s.confidence);
    out += "[skill:" + s.id + "] (" + std::string(to_string(s.stage)) + ", confidence " + conf + ") " +
           s.instruction;
    if (!s.heuristic.empty()) out += " => " + s.heuristic;
    out += "\n";
  }
  return out;
}

std::string graph_section(const TaskSkillGraph& graph) {
  std::string out = "\n## Skill-Graph\nAn edge a -> b means a is a prerequisite of b.\n";
  if (graph.edges.empty()) out += "(no edges)\n";
  for (const auto& [a, b] : graph.edges) out += a + " -> " + b + "\n";
  return out;
}

std::string plan_section(std::span<const SkillId> plan) {
  std::string out = "\n## Plan\nApply the skills in this order; the trajectory must be a path along Skill-Graph edges.\n";
  for (std::size_t i = 0; i < plan.size(); ++i) out += std::to_string(i + 1) + ". [skill:" + plan[i] + "]\n";
  return out;
}

std::size_t medoid_index(std::span<const GeoCoordinate> points) {
  if (points.empty()) throw std::invalid_argument("medoid of an empty set");
  std::size_t best = 0;
  double best_sum = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < points.size(); ++j) sum += haversine_km(points[i], points[j]);
    if (sum < best_sum) {
      best_sum = sum;
      best = i;
    }
  }
  return best;
}

std::pair<GeoPrediction, std::size_t> aggregate_votes(std::span<const GeoPrediction> rollouts) {
  if (rollouts.empty()) throw std::invalid_argument("no rollouts to aggregate");
  struct Tally {
    std::size_t count = 0;
    double confidence_sum = 0.0;
  };
  std::map<std::string, Tally> tally;
  for (const auto& p : rollouts) {
    auto& t = tally[p.country];
    ++t.count;
    t.confidence_sum += p.confidence;
  }
  // std::map iterates codes ascending, so strict comparisons keep the smaller code.
  std::string winner;
  const Tally* best = nullptr;
  for (const auto& [country, t] : tally) {
    if (!best || t.count > best->count ||
        (t.count == best->count && t.confidence_sum / t.count > best->confidence_sum / best->count)) {
      best = &t;
      winner = country;
    }
  }

  std::vector<std::size_t> agreeing;
  std::vector<GeoCoordinate> points;
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    if (rollouts[i].country == winner) {
      agreeing.push_back(i);
      points.push_back(rollouts[i].coordinates);
    }
  }
  const std::size_t medoid = agreeing[medoid_index(points)];

  GeoPrediction out;
  out.country = winner;
  out.region = rollouts[medoid].region;
  out.coordinates = rollouts[medoid].coordinates;
  out.confidence = best->confidence_sum / static_cast<double>(best->count);
  out.trajectory = rollouts[medoid].trajectory;
  for (std::size_t i : agreeing) {
    for (const auto& c : rollouts[i].evidence) {
      if (std::find(out.evidence.begin(), out.evidence.end(), c) == out.evidence.end()) out.evidence.push_back(c);
    }
  }
  return {out, medoid};
}

InferenceEngine::InferenceEngine(const SkillLibrary& library, const SkillIndex& index,
                                 const EmbeddingProvider& embedder, ModelGateway& gateway, InferenceParams params)
    : library_(library), index_(index), embedder_(embedder), gateway_(gateway), params_(std::move(params)) {
  if (index_.library_version != library_.version || index_.size() != library_.skills.size()) {
    throw DataError("skill index was built from library version " + std::to_string(index_.library_version) +
                    " but the library is at version " + std::to_string(library_.version));
  }
  if (params_.retrieval.k == 0) throw std::invalid_argument("retrieval k must be at least 1");
}

std::string InferenceEngine::now() const {
  if (params_.fixed_timestamp) return *params_.fixed_timestamp;
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

PreparedQuery InferenceEngine::prepare(const std::string& query_id, const std::string& image) const {
  PreparedQuery q;
  q.query_id = query_id;
  q.image = image;

  const SceneParseCall parsed = parse_scene(image, gateway_, params_.scene_temperature);
  q.scene = parsed.scene;
  q.transcripts.push_back({"scene_parse", -1, params_.scene_temperature, "scene_parse", parsed.prompt, parsed.response});

  const std::string task_prior =
      params_.task_prior.empty() ? std::string(prompts::load("task_prior")) : params_.task_prior;
  const InferenceMode mode = params_.mode;

  if (mode == InferenceMode::RandomSkill) {
    std::vector<SkillId> ids;
    ids.reserve(library_.skills.size());
    for (const auto& [id, s] : library_.skills) ids.push_back(id);
    Rng rng(params_.seed ^ fnv1a64(query_id));
    const std::size_t k = std::min(params_.retrieval.k, ids.size());
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(ids[i], ids[i + uniform_index(rng, ids.size() - i)]);
      q.retrieved.push_back({ids[i], 0.0});
    }
    q.candidate_count = ids.size();
  } else if (mode != InferenceMode::WoSkill) {
    WeightedQuery wq({{task_prior, params_.task_prior_weight}, {q.scene.canonical_text(), params_.scene_weight}});
    RetrievalResult r = hybrid_retrieve(index_, wq, embedder_, params_.retrieval);
    q.retrieved = std::move(r.selected);
    q.candidate_count = r.candidate_count;
  }
  for (const auto& r : q.retrieved) q.skills.push_back(*library_.find(r.id));

  if (uses_graph(mode) && !q.skills.empty()) {
    q.graph = compose_graph(q.skills, library_.relation_priors);
    if (mode == InferenceMode::ShuffledOrder) {
      q.graph = shuffle_edges(q.graph, params_.seed ^ fnv1a64(query_id));
    }
    q.plan = order_plan(q.graph);
  }

  std::string skills;
  std::string graph;
  std::string plan;
  std::string rule;
  if (mode == InferenceMode::WoSkill) {
    rule = "Every claim must cite at least one scene field path in \"evidence\". Leave \"skills\" and "
           "\"trajectory\" empty.";
  } else if (mode == InferenceMode::AtomicOnly) {
    std::vector<AtomicSkill> unordered = q.skills;
    std::sort(unordered.begin(), unordered.end(),
              [](const AtomicSkill& a, const AtomicSkill& b) { return a.id < b.id; });
    skills = skills_section(unordered);
    rule = "Every claim must cite at least one scene field path in \"evidence\" and at least one skill id in "
           "\"skills\". Leave \"trajectory\" empty.";
  } else {
    skills = skills_section(q.skills);
    graph = graph_section(q.graph);
    plan = plan_section(q.plan);
    rule = "Every claim must cite at least one scene field path in \"evidence\" and at least one skill id in "
           "\"skills\". The trajectory lists the skills you applied, in plan order, along Skill-Graph edges.";
  }
  q.prompt = prompts::render(prompts::load("reasoning"), {{"task_prior", task_prior},
                                                          {"scene", q.scene.evidence_listing()},
                                                          {"skills_section", skills},
                                                          {"graph_section", graph},
                                                          {"plan_section", plan},
                                                          {"grounding_rule", rule}});
  return q;
}

GeoPrediction InferenceEngine::reason(const PreparedQuery& q, double temperature, int rollout,
                                      std::vector<Transcript>& transcripts, std::vector<std::string>& flags) const {
  const bool need_skills = uses_skills(params_.mode);
  std::vector<SkillId> retrieved;
  for (const auto& r : q.retrieved) retrieved.push_back(r.id);

  ModelRequest req;
  req.messages.push_back({Role::User, {ContentPart::text(q.prompt), ContentPart::image(q.image)}});
  req.temperature = temperature;
  req.format = ResponseFormat::StrictJson;
  req.alias = ModelAlias::OnlineInference;

  auto check = [&](const std::string& body, GeoPrediction& out) {
    std::vector<std::string> v;
    try {
      out = prediction_from_json(nlohmann::json::parse(body));
    } catch (const std::exception& e) {
      v.push_back(std::string("answer schema: ") + e.what());
      return v;
    }
    for (const auto& issue : validate_grounding(out, q.scene, retrieved, need_skills)) {
      if (issue.claim == std::numeric_limits<std::size_t>::max()) {
        v.push_back(issue.message);
      } else {
        v.push_back("claim " + std::to_string(issue.claim) + " ('" + out.evidence[issue.claim].text +
                    "'): " + issue.message);
      }
    }
    if (auto bad = validate_trajectory(q.graph, out.trajectory.steps)) {
      v.push_back("trajectory breaks the Skill-Graph at step " + std::to_string(*bad));
    }
    return v;
  };

  const ModelResponse first = gateway_.complete(req);
  transcripts.push_back({"reasoning", rollout, temperature, "reasoning", q.prompt, first.text});
  GeoPrediction pred;
  std::vector<std::string> violations = check(first.text, pred);
  if (violations.empty()) return pred;

  const std::string prefix = "rollout " + std::to_string(rollout) + ": ";
  for (const auto& v : violations) flags.push_back(prefix + v);

  std::string listing;
  for (const auto& v : violations) listing += "- " + v + "\n";
  const std::string corrective = prompts::render(
      prompts::load("corrective"),
      {{"violations", listing}, {"skill_rule", need_skills ? " and at least one retrieved skill id" : ""}});
  req.messages.push_back({Role::Assistant, {ContentPart::text(first.text)}});
  req.messages.push_back({Role::User, {ContentPart::text(corrective)}});
  const ModelResponse second = gateway_.complete(req);
  transcripts.push_back({"corrective", rollout, temperature, "corrective", corrective, second.text});

  violations = check(second.text, pred);
  if (violations.empty()) return pred;
  for (const auto& v : violations) flags.push_back(prefix + v);
  throw GroundingError(violations);
}

InferenceRecord InferenceEngine::make_record(const PreparedQuery& q) const {
  InferenceRecord r;
  r.query_id = q.query_id;
  r.image = q.image;
  r.mode = params_.mode;
  r.seed = params_.seed;
  r.library_version = library_.version;
  r.scene = q.scene;
  r.retrieved = q.retrieved;
  r.candidate_count = q.candidate_count;
  r.graph = q.graph;
  r.plan = q.plan;
  r.transcripts = q.transcripts;
  for (const char* name : {"scene_parse", "reasoning", "corrective", "json_repair"}) {
    r.template_hashes[name] = prompts::template_hash(name);
  }
  r.template_hashes["task_prior"] =
      params_.task_prior.empty() ? prompts::template_hash("task_prior") : hex_digest(params_.task_prior);
  return r;
}

std::pair<GeoPrediction, InferenceRecord> InferenceEngine::infer(const std::string& query_id,
                                                                 const std::string& image) const {
  const std::string started = now();
  const PreparedQuery q = prepare(query_id, image);
  InferenceRecord rec = make_record(q);
  rec.started_at = started;
  GeoPrediction p = reason(q, params_.temperature, 0, rec.transcripts, rec.grounding_flags);
  rec.rollouts.push_back({0, params_.temperature, p, ""});
  rec.prediction = p;
  rec.finished_at = now();
  return {p, rec};
}

std::pair<GeoPrediction, InferenceRecord> InferenceEngine::vote(const std::string& query_id,
                                                                const std::string& image, std::size_t n) const {
  if (n == 0) throw std::invalid_argument("rollout count must be at least 1");
  if (n == 1) return infer(query_id, image);

  const std::string started = now();
  const PreparedQuery q = prepare(query_id, image);
  InferenceRecord rec = make_record(q);
  rec.started_at = started;

  std::vector<GeoPrediction> accepted;
  std::vector<std::size_t> accepted_index;
  std::vector<std::string> causes;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::min(2.0, params_.vote_base_temperature + params_.vote_jitter * static_cast<double>(i));
    RolloutSummary summary{i, t, std::nullopt, ""};
    try {
      GeoPrediction p = reason(q, t, static_cast<int>(i), rec.transcripts, rec.grounding_flags);
      summary.prediction = p;
      accepted.push_back(std::move(p));
      accepted_index.push_back(i);
    } catch (const GroundingError& e) {
      summary.error = e.what();
    } catch (const GatewayError& e) {
      // A bad key or missing route fails every rollout the same way.
      if (e.kind() == GatewayError::Kind::Authentication || e.kind() == GatewayError::Kind::Configuration) throw;
      summary.error = e.what();
    }
    if (!summary.error.empty()) causes.push_back("rollout " + std::to_string(i) + ": " + summary.error);
    rec.rollouts.push_back(std::move(summary));
  }
  if (accepted.empty()) throw RolloutsFailedError(causes);

  auto [p, medoid] = aggregate_votes(accepted);
  (void)medoid;
  rec.prediction = p;
  rec.finished_at = now();
  return {p, rec};
}

}  // namespace geoskill
