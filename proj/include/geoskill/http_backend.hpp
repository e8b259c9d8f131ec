#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "geoskill/embedding.hpp"
#include "geoskill/gateway.hpp"

namespace geoskill {

struct HttpEndpoint {
  std::string url;  // scheme://host[:port]/path
  std::string model_name;
  double timeout_s = 60.0;
  std::string api_key_env = "GEOSKILL_API_KEY";
};

/// JSON-over-HTTP(S) POST with bearer auth. Maps failures onto GatewayError:
/// connection problems and 429/5xx are transient, 401/403 authentication,
/// expired deadlines timeout, anything else protocol.
class HttpTransport {
 public:
  explicit HttpTransport(HttpEndpoint endpoint);
  nlohmann::json post_json(const nlohmann::json& body) const;
  const HttpEndpoint& endpoint() const noexcept { return endpoint_; }

 private:
  HttpEndpoint endpoint_;
  std::string origin_;
  std::string path_;
};

/// Chat-completions style request body for `request`.
nlohmann::json chat_request_body(const ModelRequest& request, const std::string& model_name);

/// Chat-completions backend: reads `choices[0].message.content`.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpEndpoint endpoint) : transport_(std::move(endpoint)) {}
  ModelResponse complete(const ModelRequest& request) override;
  std::string id() const override { return "http:" + transport_.endpoint().model_name; }

 private:
  HttpTransport transport_;
};

/// Remote encoder: POST `{"texts":[...]}` and read `{"vectors":[[...]]}`.
/// Vectors are L2-normalized on receipt.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(HttpEndpoint endpoint, std::size_t dimension);
  std::size_t dimension() const override { return dimension_; }
  Vector embed(std::string_view text) const override;
  std::vector<Vector> embed_batch(std::span<const std::string> texts) const override;

 private:
  HttpTransport transport_;
  std::size_t dimension_;
};

}  // namespace geoskill
