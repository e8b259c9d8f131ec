#include "geoskill/http_backend.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>

#include <httplib.h>

namespace geoskill {

namespace {

void split_url(const std::string& url, std::string& origin, std::string& path) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw GatewayError(GatewayError::Kind::Configuration, "backend url needs a scheme: '" + url + "'");
  }
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw GatewayError(GatewayError::Kind::Configuration, "unsupported url scheme '" + scheme + "'");
  }
  const auto slash = url.find('/', scheme_end + 3);
  origin = url.substr(0, slash);
  path = slash == std::string::npos ? "/" : url.substr(slash);
}

}  // namespace

HttpTransport::HttpTransport(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {
  if (!(endpoint_.timeout_s > 0.0)) {
    throw GatewayError(GatewayError::Kind::Configuration, "timeout_s must be positive");
  }
  split_url(endpoint_.url, origin_, path_);
}

nlohmann::json HttpTransport::post_json(const nlohmann::json& body) const {
  httplib::Client client(origin_);
  const auto whole = static_cast<time_t>(endpoint_.timeout_s);
  const auto micros = static_cast<time_t>((endpoint_.timeout_s - static_cast<double>(whole)) * 1e6);
  client.set_connection_timeout(whole, micros);
  client.set_read_timeout(whole, micros);
  client.set_write_timeout(whole, micros);

  httplib::Headers headers;
  if (const char* key = std::getenv(endpoint_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const auto start = std::chrono::steady_clock::now();
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!res) {
    const auto err = res.error();
    const std::string what = endpoint_.url + ": " + httplib::to_string(err);
    if (err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read && elapsed >= 0.9 * endpoint_.timeout_s)) {
      throw GatewayError(GatewayError::Kind::Timeout, what);
    }
    throw GatewayError(GatewayError::Kind::Transport, what);
  }
  const int status = res->status;
  if (status == 401 || status == 403) {
    throw GatewayError(GatewayError::Kind::Authentication,
                       endpoint_.url + ": HTTP " + std::to_string(status));
  }
  if (status == 429 || status >= 500) {
    throw GatewayError(GatewayError::Kind::Transport, endpoint_.url + ": HTTP " + std::to_string(status));
  }
  if (status < 200 || status >= 300) {
    throw GatewayError(GatewayError::Kind::Protocol, endpoint_.url + ": HTTP " + std::to_string(status));
  }
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw GatewayError(GatewayError::Kind::Protocol, endpoint_.url + ": response body is not JSON");
  }
}

nlohmann::json chat_request_body(const ModelRequest& request, const std::string& model_name) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) {
    nlohmann::json content = nlohmann::json::array();
    for (const auto& p : m.parts) {
      if (p.kind == ContentPart::Kind::Text) {
        content.push_back({{"type", "text"}, {"text", p.value}});
      } else {
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", p.value}}}});
      }
    }
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", std::move(content)}});
  }
  nlohmann::json body;
  body["model"] = model_name;
  body["messages"] = std::move(messages);
  body["temperature"] = request.temperature;
  body["response_format"] = {
      {"type", request.format == ResponseFormat::StrictJson ? "json_object" : "text"}};
  body["max_tokens"] = request.max_output_tokens;
  return body;
}

ModelResponse HttpBackend::complete(const ModelRequest& request) {
  const auto start = std::chrono::steady_clock::now();
  const nlohmann::json reply = transport_.post_json(chat_request_body(request, transport_.endpoint().model_name));
  ModelResponse r;
  try {
    const auto& choice = reply.at("choices").at(0);
    r.text = choice.at("message").at("content").get<std::string>();
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
      r.finish_reason = choice["finish_reason"].get<std::string>();
    }
  } catch (const nlohmann::json::exception&) {
    throw GatewayError(GatewayError::Kind::Protocol, "completion response lacks choices[0].message.content");
  }
  r.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  r.backend = id();
  return r;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEndpoint endpoint, std::size_t dimension)
    : transport_(std::move(endpoint)), dimension_(dimension) {
  if (dimension_ == 0) throw GatewayError(GatewayError::Kind::Configuration, "embedding dimension must be positive");
}

Vector HttpEmbeddingProvider::embed(std::string_view text) const {
  const std::string t(text);
  return embed_batch(std::span<const std::string>(&t, 1)).front();
}

std::vector<Vector> HttpEmbeddingProvider::embed_batch(std::span<const std::string> texts) const {
  nlohmann::json body;
  body["texts"] = nlohmann::json::array();
  for (const auto& t : texts) body["texts"].push_back(t);
  const nlohmann::json reply = transport_.post_json(body);

  std::vector<Vector> out;
  try {
    const auto& vectors = reply.at("vectors");
    if (vectors.size() != texts.size()) {
      throw GatewayError(GatewayError::Kind::Protocol, "embedding response has " +
                                                           std::to_string(vectors.size()) + " vectors for " +
                                                           std::to_string(texts.size()) + " texts");
    }
    for (const auto& v : vectors) {
      Vector x = v.get<Vector>();
      if (x.size() != dimension_) {
        throw GatewayError(GatewayError::Kind::Protocol,
                           "embedding dimension " + std::to_string(x.size()) + " != " + std::to_string(dimension_));
      }
      const double n = std::sqrt(dot(x, x));
      if (!(n > 0.0)) throw GatewayError(GatewayError::Kind::Protocol, "embedding is a zero vector");
      for (double& c : x) c /= n;
      out.push_back(std::move(x));
    }
  } catch (const nlohmann::json::exception&) {
    throw GatewayError(GatewayError::Kind::Protocol, "embedding response lacks a numeric 'vectors' array");
  }
  return out;
}

}  // namespace geoskill
