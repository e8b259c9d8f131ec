#include "geoskill/gateway.hpp"

#include "geoskill/jsonl.hpp"

namespace geoskill {

namespace {

ModelResponse reply_to_response(const nlohmann::json& reply, const std::string& backend) {
  ModelResponse r;
  r.backend = backend;
  if (reply.is_string()) {
    r.text = reply.get<std::string>();
    return r;
  }
  if (!reply.is_object()) throw GatewayError(GatewayError::Kind::Protocol, "mock reply must be a string or object");
  if (reply.contains("error")) {
    const std::string e = reply.at("error").get<std::string>();
    if (e == "timeout") throw GatewayError(GatewayError::Kind::Timeout, "scripted timeout");
    if (e == "authentication") throw GatewayError(GatewayError::Kind::Authentication, "scripted authentication failure");
    throw GatewayError(GatewayError::Kind::Transport, "scripted transient failure");
  }
  if (reply.contains("json")) {
    r.text = reply.at("json").dump();
  } else {
    r.text = reply.at("text").get<std::string>();
  }
  r.finish_reason = reply.value("finish_reason", "stop");
  return r;
}

}  // namespace

MockBackend::MockBackend(const nlohmann::json& script, std::string name) : name_(std::move(name)) {
  if (script.is_array()) {
    ordinal_.assign(script.begin(), script.end());
    return;
  }
  if (!script.is_object()) throw DataError("mock script must be an object or an array");
  for (const auto& [key, value] : script.items()) {
    if (key != "ordinal" && key != "by_fingerprint") {
      throw DataError("mock script has unknown key '" + key + "'");
    }
  }
  if (script.contains("ordinal")) {
    if (!script["ordinal"].is_array()) throw DataError("mock script 'ordinal' must be an array");
    ordinal_.assign(script["ordinal"].begin(), script["ordinal"].end());
  }
  if (script.contains("by_fingerprint")) {
    if (!script["by_fingerprint"].is_object()) throw DataError("mock script 'by_fingerprint' must be an object");
    for (const auto& [fp, reply] : script["by_fingerprint"].items()) by_fingerprint_.emplace(fp, reply);
  }
}

std::shared_ptr<MockBackend> MockBackend::from_file(const std::filesystem::path& path) {
  nlohmann::json script;
  try {
    script = nlohmann::json::parse(jsonl::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 1, e.byte > 0 ? e.byte - 1 : 0, e.what());
  }
  return std::make_shared<MockBackend>(script, "mock:" + path.filename().string());
}

ModelResponse MockBackend::complete(const ModelRequest& request) {
  const std::string fp = request_fingerprint(request);
  nlohmann::json reply;
  {
    std::lock_guard<std::mutex> lock(mu_);
    calls_.push_back(request);
    if (auto it = by_fingerprint_.find(fp); it != by_fingerprint_.end()) {
      reply = it->second;
    } else if (cursor_ < ordinal_.size()) {
      reply = ordinal_[cursor_++];
    } else {
      throw GatewayError(GatewayError::Kind::Unscripted,
                         "unscripted request (fingerprint " + fp + ", call " +
                             std::to_string(calls_.size()) + ")");
    }
  }
  return reply_to_response(reply, name_);
}

std::vector<ModelRequest> MockBackend::calls() const {
  std::lock_guard<std::mutex> lock(mu_);
  return calls_;
}

std::size_t MockBackend::remaining_ordinal() const {
  std::lock_guard<std::mutex> lock(mu_);
  return ordinal_.size() - cursor_;
}

ModelResponse FunctionBackend::complete(const ModelRequest& request) {
  ModelResponse r;
  r.text = fn_(request);
  r.backend = name_;
  return r;
}

}  // namespace geoskill
