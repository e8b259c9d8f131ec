#include "geoskill/record_io.hpp"

#include "geoskill/errors.hpp"
#include "geoskill/jsonl.hpp"

namespace geoskill {

namespace {

nlohmann::ordered_json transcript_to_json(const Transcript& t) {
  nlohmann::ordered_json j;
  j["stage"] = t.stage;
  j["rollout"] = t.rollout;
  j["temperature"] = t.temperature;
  j["template"] = t.template_name;
  j["prompt"] = t.prompt;
  j["response"] = t.response;
  return j;
}

Transcript transcript_from_json(const nlohmann::json& j) {
  return {j.at("stage").get<std::string>(),   j.at("rollout").get<int>(),
          j.at("temperature").get<double>(), j.at("template").get<std::string>(),
          j.at("prompt").get<std::string>(),  j.at("response").get<std::string>()};
}

}  // namespace

nlohmann::ordered_json record_to_json(const InferenceRecord& r) {
  nlohmann::ordered_json j;
  j["query_id"] = r.query_id;
  j["image"] = r.image;
  j["mode"] = to_string(r.mode);
  j["seed"] = r.seed;
  j["library_version"] = r.library_version;
  j["prediction"] = prediction_to_json(r.prediction);
  j["scene"] = scene_to_json(r.scene);
  j["retrieved"] = nlohmann::ordered_json::array();
  for (const auto& s : r.retrieved) j["retrieved"].push_back({{"id", s.id}, {"score", s.score}});
  j["candidate_count"] = r.candidate_count;
  j["graph"] = graph_to_json(r.graph);
  j["plan"] = r.plan;
  j["rollouts"] = nlohmann::ordered_json::array();
  for (const auto& ro : r.rollouts) {
    nlohmann::ordered_json x;
    x["index"] = ro.index;
    x["temperature"] = ro.temperature;
    x["prediction"] = ro.prediction ? nlohmann::ordered_json(prediction_to_json(*ro.prediction)) : nlohmann::ordered_json();
    x["error"] = ro.error;
    j["rollouts"].push_back(std::move(x));
  }
  j["transcripts"] = nlohmann::ordered_json::array();
  for (const auto& t : r.transcripts) j["transcripts"].push_back(transcript_to_json(t));
  j["template_hashes"] = r.template_hashes;
  j["grounding_flags"] = r.grounding_flags;
  j["outcome"] = r.outcome ? nlohmann::ordered_json(*r.outcome) : nlohmann::ordered_json();
  if (r.ground_truth) {
    j["ground_truth"] = {{"lat", r.ground_truth->coordinates.lat()},
                         {"lon", r.ground_truth->coordinates.lon()},
                         {"country", r.ground_truth->country}};
  } else {
    j["ground_truth"] = nullptr;
  }
  j["started_at"] = r.started_at;
  j["finished_at"] = r.finished_at;
  j["external_verification"] = nullptr;
  return j;
}

InferenceRecord record_from_json(const nlohmann::json& j) {
  InferenceRecord r;
  r.query_id = j.at("query_id").get<std::string>();
  r.image = j.value("image", std::string());
  r.mode = parse_inference_mode(j.value("mode", std::string("full")));
  r.seed = j.value("seed", std::uint64_t{0});
  r.library_version = j.value("library_version", std::uint64_t{0});
  r.prediction = prediction_from_json(j.at("prediction"));
  if (j.contains("scene")) r.scene = scene_from_json(j["scene"]);
  for (const auto& s : j.value("retrieved", nlohmann::json::array())) {
    r.retrieved.push_back({s.at("id").get<std::string>(), s.value("score", 0.0)});
  }
  r.candidate_count = j.value("candidate_count", std::size_t{0});
  if (j.contains("graph") && !j["graph"].is_null()) r.graph = graph_from_json(j["graph"]);
  r.plan = j.value("plan", std::vector<std::string>{});
  for (const auto& x : j.value("rollouts", nlohmann::json::array())) {
    RolloutSummary ro;
    ro.index = x.at("index").get<std::size_t>();
    ro.temperature = x.at("temperature").get<double>();
    if (!x.at("prediction").is_null()) ro.prediction = prediction_from_json(x["prediction"]);
    ro.error = x.value("error", std::string());
    r.rollouts.push_back(std::move(ro));
  }
  for (const auto& t : j.value("transcripts", nlohmann::json::array())) r.transcripts.push_back(transcript_from_json(t));
  r.template_hashes = j.value("template_hashes", std::map<std::string, std::string>{});
  r.grounding_flags = j.value("grounding_flags", std::vector<std::string>{});
  if (j.contains("outcome") && !j["outcome"].is_null()) {
    const int e = j["outcome"].get<int>();
    if (e != 0 && e != 1) throw std::invalid_argument("outcome must be 0 or 1");
    r.outcome = e;
  }
  if (j.contains("ground_truth") && !j["ground_truth"].is_null()) {
    const auto& g = j["ground_truth"];
    r.ground_truth = GroundTruth{GeoCoordinate(g.at("lat").get<double>(), g.at("lon").get<double>()),
                                 g.value("country", std::string())};
  }
  if (r.outcome && !r.ground_truth) throw std::invalid_argument("outcome set without ground truth");
  r.started_at = j.value("started_at", std::string());
  r.finished_at = j.value("finished_at", std::string());
  return r;
}

std::vector<InferenceRecord> read_records(const std::filesystem::path& path) {
  std::vector<InferenceRecord> out;
  jsonl::for_each_object(path, [&](const nlohmann::json& j, const jsonl::Line& line) {
    try {
      out.push_back(record_from_json(j));
    } catch (const std::exception& e) {
      throw ParseError(path.string(), line.number, line.byte_offset, e.what());
    }
  });
  return out;
}

void RecordWriter::append(const InferenceRecord& r) {
  const auto j = record_to_json(r);
  std::lock_guard<std::mutex> lock(mu_);
  jsonl::append(path_, j);
}

}  // namespace geoskill
