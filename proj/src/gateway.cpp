#include "geoskill/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "geoskill/assets.hpp"
#include "geoskill/hashing.hpp"

namespace geoskill {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System:
      return "system";
    case Role::User:
      return "user";
    case Role::Assistant:
      return "assistant";
  }
  return "user";
}

std::string_view to_string(ModelAlias alias) {
  return alias == ModelAlias::OnlineInference ? "online" : "offline";
}

std::string_view to_string(GatewayError::Kind kind) {
  switch (kind) {
    case GatewayError::Kind::Transport:
      return "transport";
    case GatewayError::Kind::Timeout:
      return "timeout";
    case GatewayError::Kind::Authentication:
      return "authentication";
    case GatewayError::Kind::MalformedJson:
      return "malformed_json";
    case GatewayError::Kind::Unscripted:
      return "unscripted";
    case GatewayError::Kind::Protocol:
      return "protocol";
    case GatewayError::Kind::Configuration:
      return "configuration";
  }
  return "transport";
}

std::string Message::text() const {
  std::string out;
  for (const auto& p : parts) {
    if (p.kind == ContentPart::Kind::Text) out += p.value;
  }
  return out;
}

void validate_request(const ModelRequest& request) {
  if (request.messages.empty()) throw std::invalid_argument("model request has no messages");
  if (!(request.temperature >= 0.0 && request.temperature <= 2.0)) {
    throw std::invalid_argument("temperature must lie in [0, 2]");
  }
}

std::string request_fingerprint(const ModelRequest& request) {
  std::uint64_t h = kFnvOffsetBasis;
  for (const auto& m : request.messages) {
    h = fnv1a64(to_string(m.role), h);
    h = fnv1a64("\x1e", h);
    for (const auto& p : m.parts) {
      if (p.kind == ContentPart::Kind::Text) {
        h = fnv1a64("t:", h);
        h = fnv1a64(p.value, h);
      } else {
        h = fnv1a64("i:", h);
        h = fnv1a64(hex_digest(p.value), h);
      }
      h = fnv1a64("\x1f", h);
    }
  }
  return to_hex(h);
}

TokenBucket::TokenBucket(double rate_per_s)
    : rate_(rate_per_s),
      capacity_(std::max(1.0, rate_per_s)),
      tokens_(capacity_),
      last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
  if (!(rate_ > 0.0)) return;
  std::unique_lock<std::mutex> lock(mu_);
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(capacity_, tokens_ + elapsed * rate_);
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const double wait_s = (1.0 - tokens_) / rate_;
    lock.unlock();
    std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
    lock.lock();
  }
}

std::string strip_code_fence(std::string_view text) {
  auto trim = [](std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return std::string_view{};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  };
  std::string_view s = trim(text);
  if (s.substr(0, 3) == "```") {
    const auto first_nl = s.find('\n');
    const auto close = s.rfind("```");
    if (first_nl != std::string_view::npos && close != std::string_view::npos && close > first_nl) {
      s = trim(s.substr(first_nl + 1, close - first_nl - 1));
    }
  }
  return std::string(s);
}

ModelGateway::ModelGateway()
    : sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

void ModelGateway::set_backend(ModelAlias alias, std::shared_ptr<Backend> backend, BackendPolicy policy) {
  if (!backend) throw std::invalid_argument("backend must not be null");
  Route r;
  r.backend = std::move(backend);
  r.policy = policy;
  r.bucket = std::make_unique<TokenBucket>(policy.rate_per_s);
  routes_[alias] = std::move(r);
}

bool ModelGateway::has_backend(ModelAlias alias) const { return routes_.count(alias) > 0; }

ModelGateway::Route& ModelGateway::route(ModelAlias alias) {
  auto it = routes_.find(alias);
  if (it == routes_.end()) {
    throw GatewayError(GatewayError::Kind::Configuration,
                       "no backend configured for the " + std::string(to_string(alias)) + " model");
  }
  return it->second;
}

const Backend& ModelGateway::backend(ModelAlias alias) const {
  auto it = routes_.find(alias);
  if (it == routes_.end()) {
    throw GatewayError(GatewayError::Kind::Configuration,
                       "no backend configured for the " + std::string(to_string(alias)) + " model");
  }
  return *it->second.backend;
}

ModelResponse ModelGateway::call_with_retry(Route& r, const ModelRequest& request) {
  std::uint32_t delay = r.policy.backoff_ms;
  for (std::uint32_t attempt = 0;; ++attempt) {
    r.bucket->acquire();
    try {
      return r.backend->complete(request);
    } catch (const GatewayError& e) {
      if (!e.transient() || attempt >= r.policy.max_retries) {
        if (e.transient() && attempt > 0) {
          throw GatewayError(e.kind(), std::string(e.what()) + " (after " + std::to_string(attempt + 1) +
                                           " attempts)");
        }
        throw;
      }
    }
    sleeper_(std::chrono::milliseconds(delay));
    delay = delay > UINT32_MAX / 2 ? UINT32_MAX : delay * 2;
  }
}

ModelResponse ModelGateway::complete(const ModelRequest& request) {
  validate_request(request);
  Route& r = route(request.alias);
  ModelResponse first = call_with_retry(r, request);
  if (request.format != ResponseFormat::StrictJson) return first;

  std::string body = strip_code_fence(first.text);
  if (nlohmann::json::accept(body)) {
    first.text = std::move(body);
    return first;
  }

  ModelRequest repair = request;
  repair.messages.push_back({Role::Assistant, {ContentPart::text(first.text)}});
  repair.messages.push_back({Role::User, {ContentPart::text(std::string(assets::require("json_repair.txt")))}});
  ModelResponse second = call_with_retry(r, repair);
  body = strip_code_fence(second.text);
  if (!nlohmann::json::accept(body)) {
    throw GatewayError(GatewayError::Kind::MalformedJson,
                       "response is not valid JSON after one repair attempt");
  }
  second.text = std::move(body);
  second.latency_ms += first.latency_ms;
  return second;
}

}  // namespace geoskill
