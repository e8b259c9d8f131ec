#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoskill/embedding.hpp"
#include "geoskill/evolution.hpp"
#include "geoskill/gateway.hpp"
#include "geoskill/inference.hpp"

namespace geoskill {

struct BackendConfig {
  std::string kind = "mock";  // mock | http
  std::string url;
  std::string model_name;
  double timeout_s = 60.0;
  std::uint32_t max_retries = 3;
  std::uint32_t backoff_ms = 200;
  double rate_per_s = 0.0;
  std::string script;  // mock script path
};

struct EmbeddingConfig {
  std::string kind = "hashing";  // hashing | http
  std::string url;
  std::string model_name;
  std::size_t dimension = kDefaultEmbeddingDim;
  double timeout_s = 60.0;
};

struct BatchConfig {
  std::size_t checkpoint_every = 50;
  std::size_t parallelism = 1;
};

struct PathsConfig {
  std::string library;
  std::string records = "records.jsonl";
  std::string lexicon;
};

/// Effective configuration. Every field has an explicit default and the JSON
/// dump lists all of them.
struct RunConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  BackendConfig online;
  BackendConfig offline;
  EmbeddingConfig embedding;
  InferenceParams inference;
  EvolutionConfig evolution;
  BatchConfig batch;
  PathsConfig paths;

  std::filesystem::path resolve(const std::string& p) const;
};

nlohmann::ordered_json config_to_json(const RunConfig& c);

/// Reads a full or partial document over the defaults. Unknown keys, wrong
/// types and out-of-range values throw ConfigError naming the dotted key.
RunConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

/// Sets a dotted key inside `doc`. The value is read as JSON when it parses,
/// otherwise as a string. Throws ConfigError on a malformed assignment.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Defaults, then the file (explicit path, else GEOSKILL_CONFIG when set),
/// then overrides in order.
RunConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides);

/// Gateway with the configured online and offline backends.
std::unique_ptr<ModelGateway> make_gateway(const RunConfig& c);

std::unique_ptr<EmbeddingProvider> make_embedder(const RunConfig& c);

}  // namespace geoskill
