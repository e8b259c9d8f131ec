#include "geoskill/config.hpp"

#include <cmath>
#include <cstdlib>

#include "geoskill/errors.hpp"
#include "geoskill/http_backend.hpp"
#include "geoskill/jsonl.hpp"

namespace geoskill {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

fs::path RunConfig::resolve(const std::string& p) const {
  if (p.empty()) return {};
  fs::path path(p);
  if (path.is_absolute() || base_dir.empty()) return path;
  return base_dir / path;
}

namespace {

ojson backend_json(const BackendConfig& b) {
  ojson j;
  j["kind"] = b.kind;
  j["url"] = b.url;
  j["model_name"] = b.model_name;
  j["timeout_s"] = b.timeout_s;
  j["max_retries"] = b.max_retries;
  j["backoff_ms"] = b.backoff_ms;
  j["rate_per_s"] = b.rate_per_s;
  j["script"] = b.script;
  return j;
}

void merge_into(nlohmann::json& dst, const nlohmann::json& src, const std::string& prefix) {
  if (!src.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
  for (const auto& [key, value] : src.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!dst.contains(key)) throw ConfigError(path, "unknown key");
    if (dst[key].is_object()) {
      merge_into(dst[key], value, path);
    } else {
      dst[key] = value;
    }
  }
}

// Typed access by dotted path, reporting type errors against the key.
class Reader {
 public:
  explicit Reader(const nlohmann::json& doc) : doc_(doc) {}

  const nlohmann::json& at(const std::string& path) const {
    const nlohmann::json* cur = &doc_;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      cur = &cur->at(path.substr(start, dot - start));
      if (dot == std::string::npos) return *cur;
      start = dot + 1;
    }
  }

  template <typename T>
  T get(const std::string& path) const {
    try {
      return at(path).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path, "has the wrong type");
    }
  }

  double number(const std::string& path) const {
    const auto& v = at(path);
    if (!v.is_number()) throw ConfigError(path, "must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(path, "must be finite");
    return d;
  }

  std::uint64_t count(const std::string& path) const {
    const auto& v = at(path);
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0)) {
      throw ConfigError(path, "must be a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

 private:
  const nlohmann::json& doc_;
};

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

BackendConfig read_backend(const Reader& r, const std::string& p) {
  BackendConfig b;
  b.kind = r.get<std::string>(p + ".kind");
  require(b.kind == "mock" || b.kind == "http", p + ".kind", "must be 'mock' or 'http'");
  b.url = r.get<std::string>(p + ".url");
  b.model_name = r.get<std::string>(p + ".model_name");
  b.timeout_s = r.number(p + ".timeout_s");
  require(b.timeout_s > 0.0, p + ".timeout_s", "must be positive");
  b.max_retries = static_cast<std::uint32_t>(r.count(p + ".max_retries"));
  b.backoff_ms = static_cast<std::uint32_t>(r.count(p + ".backoff_ms"));
  b.rate_per_s = r.number(p + ".rate_per_s");
  require(b.rate_per_s >= 0.0, p + ".rate_per_s", "must be non-negative");
  b.script = r.get<std::string>(p + ".script");
  if (b.kind == "http") require(!b.url.empty(), p + ".url", "is required for an http backend");
  return b;
}

void check_file(const RunConfig& c, const std::string& value, const std::string& key) {
  if (value.empty()) return;
  std::error_code ec;
  if (!fs::exists(c.resolve(value), ec)) throw ConfigError(key, "file not found: " + c.resolve(value).string());
}

}  // namespace

ojson config_to_json(const RunConfig& c) {
  ojson j;
  j["backend"]["online"] = backend_json(c.online);
  j["backend"]["offline"] = backend_json(c.offline);

  auto& e = j["embedding"];
  e["kind"] = c.embedding.kind;
  e["url"] = c.embedding.url;
  e["model_name"] = c.embedding.model_name;
  e["dimension"] = c.embedding.dimension;
  e["timeout_s"] = c.embedding.timeout_s;

  const auto& in = c.inference;
  auto& r = j["retrieval"];
  r["k"] = in.retrieval.k;
  r["score_threshold"] = in.retrieval.score_threshold;
  r["diversity_lambda"] = in.retrieval.diversity_lambda;
  r["lexical_weight"] = in.retrieval.lexical_weight;
  r["semantic_weight"] = in.retrieval.semantic_weight;
  r["bm25_k1"] = in.retrieval.bm25.k1;
  r["bm25_b"] = in.retrieval.bm25.b;
  r["task_prior_weight"] = in.task_prior_weight;
  r["scene_weight"] = in.scene_weight;

  auto& i = j["inference"];
  i["temperature"] = in.temperature;
  i["vote_base_temperature"] = in.vote_base_temperature;
  i["vote_jitter"] = in.vote_jitter;
  i["scene_temperature"] = in.scene_temperature;
  i["rollouts"] = in.rollouts;
  i["mode"] = to_string(in.mode);
  i["seed"] = in.seed;
  i["task_prior"] = in.task_prior;
  i["fixed_timestamp"] = in.fixed_timestamp ? ojson(*in.fixed_timestamp) : ojson();

  const auto& ev = c.evolution;
  auto& v = j["evolution"];
  v["batch_size"] = ev.batch_size;
  v["v_min"] = ev.v_min;
  v["relation_failure_rate"] = ev.relation_failure_rate;
  v["relation_min_observations"] = ev.relation_min_observations;
  v["merge_threshold"] = ev.merge_threshold;
  v["alpha"] = ev.alpha;
  v["max_synthesized_per_batch"] = ev.max_synthesized_per_batch;
  v["synthesized_confidence_cap"] = ev.synthesized_confidence_cap;
  v["success_radius_km"] = ev.success_radius_km;
  v["synthesis_temperature"] = ev.synthesis_temperature;
  v["continent_km"] = ev.continent_km;
  v["region_km"] = ev.region_km;
  v["retrieval_miss_min"] = ev.retrieval_miss_min;

  j["batch"]["checkpoint_every"] = c.batch.checkpoint_every;
  j["batch"]["parallelism"] = c.batch.parallelism;

  j["paths"]["library"] = c.paths.library;
  j["paths"]["records"] = c.paths.records;
  j["paths"]["lexicon"] = c.paths.lexicon;
  return j;
}

RunConfig config_from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  nlohmann::json full = config_to_json(RunConfig{});
  merge_into(full, doc, "");
  const Reader r(full);

  RunConfig c;
  c.base_dir = base_dir;
  c.online = read_backend(r, "backend.online");
  c.offline = read_backend(r, "backend.offline");

  c.embedding.kind = r.get<std::string>("embedding.kind");
  require(c.embedding.kind == "hashing" || c.embedding.kind == "http", "embedding.kind", "must be 'hashing' or 'http'");
  c.embedding.url = r.get<std::string>("embedding.url");
  c.embedding.model_name = r.get<std::string>("embedding.model_name");
  c.embedding.dimension = r.count("embedding.dimension");
  require(c.embedding.dimension > 0, "embedding.dimension", "must be positive");
  c.embedding.timeout_s = r.number("embedding.timeout_s");
  require(c.embedding.timeout_s > 0.0, "embedding.timeout_s", "must be positive");
  if (c.embedding.kind == "http") require(!c.embedding.url.empty(), "embedding.url", "is required for http embeddings");

  auto& in = c.inference;
  in.retrieval.k = r.count("retrieval.k");
  require(in.retrieval.k >= 1, "retrieval.k", "must be at least 1");
  in.retrieval.score_threshold = r.number("retrieval.score_threshold");
  in.retrieval.diversity_lambda = r.number("retrieval.diversity_lambda");
  require(in.retrieval.diversity_lambda >= 0.0 && in.retrieval.diversity_lambda <= 1.0, "retrieval.diversity_lambda",
          "must lie in [0, 1]");
  in.retrieval.lexical_weight = r.number("retrieval.lexical_weight");
  in.retrieval.semantic_weight = r.number("retrieval.semantic_weight");
  require(in.retrieval.lexical_weight >= 0.0, "retrieval.lexical_weight", "must be non-negative");
  require(in.retrieval.semantic_weight >= 0.0, "retrieval.semantic_weight", "must be non-negative");
  in.retrieval.bm25.k1 = r.number("retrieval.bm25_k1");
  require(in.retrieval.bm25.k1 >= 0.0, "retrieval.bm25_k1", "must be non-negative");
  in.retrieval.bm25.b = r.number("retrieval.bm25_b");
  require(in.retrieval.bm25.b >= 0.0 && in.retrieval.bm25.b <= 1.0, "retrieval.bm25_b", "must lie in [0, 1]");
  in.task_prior_weight = r.number("retrieval.task_prior_weight");
  in.scene_weight = r.number("retrieval.scene_weight");
  require(in.task_prior_weight >= 0.0 && in.scene_weight >= 0.0 && in.task_prior_weight + in.scene_weight > 0.0,
          "retrieval.scene_weight", "query weights must be non-negative with a positive sum");

  auto temp = [&](const std::string& key) {
    const double t = r.number(key);
    require(t >= 0.0 && t <= 2.0, key, "must lie in [0, 2]");
    return t;
  };
  in.temperature = temp("inference.temperature");
  in.vote_base_temperature = temp("inference.vote_base_temperature");
  in.vote_jitter = r.number("inference.vote_jitter");
  require(in.vote_jitter >= 0.0, "inference.vote_jitter", "must be non-negative");
  in.scene_temperature = temp("inference.scene_temperature");
  in.rollouts = r.count("inference.rollouts");
  require(in.rollouts >= 1, "inference.rollouts", "must be at least 1");
  try {
    in.mode = parse_inference_mode(r.get<std::string>("inference.mode"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("inference.mode", e.what());
  }
  in.seed = r.count("inference.seed");
  in.task_prior = r.get<std::string>("inference.task_prior");
  if (const auto& ts = r.at("inference.fixed_timestamp"); !ts.is_null()) {
    in.fixed_timestamp = r.get<std::string>("inference.fixed_timestamp");
  }

  auto& ev = c.evolution;
  ev.batch_size = r.count("evolution.batch_size");
  ev.v_min = r.number("evolution.v_min");
  ev.relation_failure_rate = r.number("evolution.relation_failure_rate");
  ev.relation_min_observations = r.count("evolution.relation_min_observations");
  ev.merge_threshold = r.number("evolution.merge_threshold");
  ev.alpha = r.number("evolution.alpha");
  ev.max_synthesized_per_batch = r.count("evolution.max_synthesized_per_batch");
  ev.synthesized_confidence_cap = r.number("evolution.synthesized_confidence_cap");
  ev.success_radius_km = r.number("evolution.success_radius_km");
  ev.synthesis_temperature = r.number("evolution.synthesis_temperature");
  ev.continent_km = r.number("evolution.continent_km");
  ev.region_km = r.number("evolution.region_km");
  ev.retrieval_miss_min = r.count("evolution.retrieval_miss_min");
  if (auto bad = ev.check(); !bad.empty()) throw ConfigError("evolution." + bad.front().substr(0, bad.front().find(' ')), bad.front());

  c.batch.checkpoint_every = r.count("batch.checkpoint_every");
  require(c.batch.checkpoint_every >= 1, "batch.checkpoint_every", "must be at least 1");
  c.batch.parallelism = r.count("batch.parallelism");
  require(c.batch.parallelism >= 1, "batch.parallelism", "must be at least 1");

  c.paths.library = r.get<std::string>("paths.library");
  c.paths.records = r.get<std::string>("paths.records");
  c.paths.lexicon = r.get<std::string>("paths.lexicon");

  check_file(c, c.online.script, "backend.online.script");
  check_file(c, c.offline.script, "backend.offline.script");
  check_file(c, c.paths.lexicon, "paths.lexicon");
  return c;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  nlohmann::json* cur = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError(key, "empty key segment");
    if (!cur->is_object()) throw ConfigError(key, "parent is not an object");
    if (dot == std::string::npos) {
      nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
      (*cur)[part] = value.is_discarded() ? nlohmann::json(raw) : value;
      return;
    }
    if (!cur->contains(part)) (*cur)[part] = nlohmann::json::object();
    cur = &(*cur)[part];
    start = dot + 1;
  }
}

RunConfig load_config(const std::optional<fs::path>& path, const std::vector<std::string>& overrides) {
  std::optional<fs::path> file = path;
  if (!file) {
    if (const char* env = std::getenv("GEOSKILL_CONFIG"); env && *env) file = fs::path(env);
  }
  nlohmann::json doc = nlohmann::json::object();
  fs::path base;
  if (file) {
    std::error_code ec;
    if (!fs::exists(*file, ec)) throw ConfigError("config", "file not found: " + file->string());
    try {
      doc = nlohmann::json::parse(jsonl::read_file(*file));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config", file->string() + ": " + e.what());
    }
    base = fs::absolute(*file).parent_path();
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return config_from_json(doc, base);
}

std::unique_ptr<ModelGateway> make_gateway(const RunConfig& c) {
  auto gw = std::make_unique<ModelGateway>();
  auto install = [&](const BackendConfig& b, ModelAlias alias, const std::string& key) {
    BackendPolicy policy{b.max_retries, b.backoff_ms, b.rate_per_s};
    if (b.kind == "http") {
      gw->set_backend(alias, std::make_shared<HttpBackend>(HttpEndpoint{b.url, b.model_name, b.timeout_s}), policy);
    } else if (!b.script.empty()) {
      try {
        gw->set_backend(alias, MockBackend::from_file(c.resolve(b.script)), policy);
      } catch (const Error& e) {
        throw ConfigError(key + ".script", e.what());
      }
    }
  };
  install(c.online, ModelAlias::OnlineInference, "backend.online");
  install(c.offline, ModelAlias::OfflineRefinement, "backend.offline");
  return gw;
}

std::unique_ptr<EmbeddingProvider> make_embedder(const RunConfig& c) {
  if (c.embedding.kind == "http") {
    return std::make_unique<HttpEmbeddingProvider>(
        HttpEndpoint{c.embedding.url, c.embedding.model_name, c.embedding.timeout_s}, c.embedding.dimension);
  }
  return std::make_unique<HashingEmbedder>(c.embedding.dimension);
}

}  // namespace geoskill
