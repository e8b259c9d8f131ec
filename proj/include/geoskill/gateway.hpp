#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "geoskill/errors.hpp"

namespace geoskill {

enum class Role { System, User, Assistant };
std::string_view to_string(Role role);

struct ContentPart {
  enum class Kind { Text, Image };
  Kind kind = Kind::Text;
  std::string value;  // text, or an image URL / data URI

  static ContentPart text(std::string t) { return {Kind::Text, std::move(t)}; }
  static ContentPart image(std::string ref) { return {Kind::Image, std::move(ref)}; }
  bool operator==(const ContentPart&) const = default;
};

struct Message {
  Role role = Role::User;
  std::vector<ContentPart> parts;

  /// Concatenated text parts.
  std::string text() const;
  bool operator==(const Message&) const = default;
};

enum class ResponseFormat { FreeText, StrictJson };
enum class ModelAlias { OnlineInference, OfflineRefinement };
std::string_view to_string(ModelAlias alias);

struct ModelRequest {
  std::vector<Message> messages;
  double temperature = 0.2;
  ResponseFormat format = ResponseFormat::FreeText;
  std::uint32_t max_output_tokens = 2048;
  ModelAlias alias = ModelAlias::OnlineInference;
};

/// Throws std::invalid_argument when there is no message or the temperature
/// is outside [0, 2].
void validate_request(const ModelRequest& request);

struct ModelResponse {
  std::string text;
  std::string finish_reason = "stop";
  double latency_ms = 0.0;
  std::string backend;
};

class GatewayError : public Error {
 public:
  enum class Kind { Transport, Timeout, Authentication, MalformedJson, Unscripted, Protocol, Configuration };

  GatewayError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }
  bool transient() const noexcept { return kind_ == Kind::Transport || kind_ == Kind::Timeout; }

 private:
  Kind kind_;
};

std::string_view to_string(GatewayError::Kind kind);

/// Hex digest over roles and parts. Image parts contribute only a digest of
/// their reference, so large data URIs do not dominate the key.
std::string request_fingerprint(const ModelRequest& request);

class Backend {
 public:
  virtual ~Backend() = default;
  /// Raw completion. Failures are GatewayError.
  virtual ModelResponse complete(const ModelRequest& request) = 0;
  virtual std::string id() const = 0;
};

/// Deterministic scripted backend.
///
/// Script: `{"by_fingerprint": {fp: reply}, "ordinal": [reply, ...]}`; a bare
/// array is shorthand for ordinal only. A reply is a string, an object
/// `{"text":..,"finish_reason":..}`, `{"json": value}` (serialized compactly),
/// or `{"error":"transient|timeout|authentication"}`.
/// Fingerprint matches win; otherwise the next ordinal reply is consumed.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(const nlohmann::json& script, std::string name = "mock");
  static std::shared_ptr<MockBackend> from_file(const std::filesystem::path& path);

  ModelResponse complete(const ModelRequest& request) override;
  std::string id() const override { return name_; }

  std::vector<ModelRequest> calls() const;
  std::size_t remaining_ordinal() const;

 private:
  std::string name_;
  std::map<std::string, nlohmann::json> by_fingerprint_;
  std::vector<nlohmann::json> ordinal_;
  mutable std::mutex mu_;
  std::size_t cursor_ = 0;
  std::vector<ModelRequest> calls_;
};

/// Backend computed by a callback. Used to model backends that react to
/// prompt content.
class FunctionBackend final : public Backend {
 public:
  using Fn = std::function<std::string(const ModelRequest&)>;
  explicit FunctionBackend(Fn fn, std::string name = "function") : fn_(std::move(fn)), name_(std::move(name)) {}

  ModelResponse complete(const ModelRequest& request) override;
  std::string id() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

struct BackendPolicy {
  std::uint32_t max_retries = 3;
  std::uint32_t backoff_ms = 200;  // doubled after every failed attempt
  double rate_per_s = 0.0;         // token bucket refill; 0 disables limiting
};

/// Token bucket with capacity max(1, rate). acquire() blocks until a token is available.
class TokenBucket {
 public:
  explicit TokenBucket(double rate_per_s);
  void acquire();

 private:
  double rate_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mu_;
};

/// Strips surrounding whitespace and one Markdown code fence.
std::string strip_code_fence(std::string_view text);

/// Single choke point for model calls: routes by alias, retries transient
/// failures with exponential backoff, rate limits, and enforces StrictJson
/// with one repair re-prompt.
class ModelGateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  ModelGateway();

  void set_backend(ModelAlias alias, std::shared_ptr<Backend> backend, BackendPolicy policy = {});
  bool has_backend(ModelAlias alias) const;
  const Backend& backend(ModelAlias alias) const;

  /// Replaces the real sleep between retries (tests).
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

  /// For StrictJson the returned text is the bare JSON document.
  ModelResponse complete(const ModelRequest& request);

 private:
  struct Route {
    std::shared_ptr<Backend> backend;
    BackendPolicy policy;
    std::unique_ptr<TokenBucket> bucket;
  };

  ModelResponse call_with_retry(Route& route, const ModelRequest& request);
  Route& route(ModelAlias alias);

  std::map<ModelAlias, Route> routes_;
  Sleeper sleeper_;
};

}  // namespace geoskill
