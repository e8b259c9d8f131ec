#include <doctest.h>

#include "geoskill/gateway.hpp"

using namespace geoskill;
using nlohmann::json;

namespace {

ModelRequest ask(std::string text, ResponseFormat format = ResponseFormat::FreeText) {
  ModelRequest r;
  r.messages.push_back({Role::User, {ContentPart::text(std::move(text))}});
  r.format = format;
  return r;
}

struct Harness {
  ModelGateway gateway;
  std::vector<long> sleeps;
  explicit Harness(std::shared_ptr<Backend> backend, BackendPolicy policy = {}) {
    gateway.set_backend(ModelAlias::OnlineInference, std::move(backend), policy);
    gateway.set_sleeper([this](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
  }
};

}  // namespace

TEST_SUITE("gateway") {
  TEST_CASE("request validation") {
    ModelRequest empty;
    CHECK_THROWS_AS(validate_request(empty), std::invalid_argument);
    auto r = ask("x");
    r.temperature = 2.5;
    CHECK_THROWS_AS(validate_request(r), std::invalid_argument);
    r.temperature = 0.0;
    CHECK_NOTHROW(validate_request(r));
  }

  TEST_CASE("fingerprint depends on roles and content, digests images") {
    auto a = ask("hello");
    auto b = ask("hello");
    CHECK(request_fingerprint(a) == request_fingerprint(b));
    b.messages[0].role = Role::System;
    CHECK(request_fingerprint(a) != request_fingerprint(b));
    a.messages[0].parts.push_back(ContentPart::image("data:image/png;base64,AAAA"));
    auto c = ask("hello");
    c.messages[0].parts.push_back(ContentPart::image("data:image/png;base64,AAAB"));
    CHECK(request_fingerprint(a) != request_fingerprint(c));
    CHECK(request_fingerprint(a).size() == 16);
  }

  TEST_CASE("mock: fingerprint replies win over ordinal ones") {
    const auto req = ask("special");
    auto mock = std::make_shared<MockBackend>(
        json{{"by_fingerprint", {{request_fingerprint(req), "pinned"}}}, {"ordinal", {"first", {{"json", {{"a", 1}}}}}}});
    CHECK(mock->complete(ask("other")).text == "first");
    CHECK(mock->complete(req).text == "pinned");
    CHECK(mock->complete(ask("other")).text == "{\"a\":1}");
    CHECK(mock->remaining_ordinal() == 0);
    CHECK(mock->calls().size() == 3);
    try {
      mock->complete(ask("more"));
      FAIL("expected unscripted error");
    } catch (const GatewayError& e) {
      CHECK(e.kind() == GatewayError::Kind::Unscripted);
    }
  }

  TEST_CASE("mock script shape errors") {
    CHECK_THROWS_AS(MockBackend(json{{"bogus", 1}}), DataError);
    CHECK_THROWS_AS(MockBackend(json{{"ordinal", 1}}), DataError);
    CHECK_THROWS_AS(MockBackend(json(3)), DataError);
  }

  TEST_CASE("transient failures are retried with doubling backoff") {
    auto mock = std::make_shared<MockBackend>(json::array({{{"error", "transient"}}, {{"error", "timeout"}}, "ok"}));
    Harness h(mock, BackendPolicy{3, 100, 0.0});
    CHECK(h.gateway.complete(ask("q")).text == "ok");
    CHECK(h.sleeps == std::vector<long>{100, 200});
  }

  TEST_CASE("retries are bounded and the error says how many attempts ran") {
    auto mock = std::make_shared<MockBackend>(json::array({{{"error", "transient"}}, {{"error", "transient"}}, "late"}));
    Harness h(mock, BackendPolicy{1, 10, 0.0});
    try {
      h.gateway.complete(ask("q"));
      FAIL("expected transport error");
    } catch (const GatewayError& e) {
      CHECK(e.kind() == GatewayError::Kind::Transport);
      CHECK(std::string(e.what()).find("after 2 attempts") != std::string::npos);
    }
    CHECK(mock->calls().size() == 2);
  }

  TEST_CASE("authentication errors are not retried") {
    auto mock = std::make_shared<MockBackend>(json::array({{{"error", "authentication"}}, "ok"}));
    Harness h(mock);
    try {
      h.gateway.complete(ask("q"));
      FAIL("expected authentication error");
    } catch (const GatewayError& e) {
      CHECK(e.kind() == GatewayError::Kind::Authentication);
      CHECK_FALSE(e.transient());
    }
    CHECK(h.sleeps.empty());
  }

  TEST_CASE("strict json: fences are stripped") {
    auto mock = std::make_shared<MockBackend>(json::array({"```json\n{\"x\": 1}\n```"}));
    Harness h(mock);
    CHECK(h.gateway.complete(ask("q", ResponseFormat::StrictJson)).text == "{\"x\": 1}");
  }

  TEST_CASE("strict json: one repair prompt, then failure") {
    auto mock = std::make_shared<MockBackend>(json::array({"not json", "{\"fixed\":true}"}));
    Harness h(mock);
    CHECK(h.gateway.complete(ask("q", ResponseFormat::StrictJson)).text == "{\"fixed\":true}");
    const auto calls = mock->calls();
    REQUIRE(calls.size() == 2);
    REQUIRE(calls[1].messages.size() == 3);
    CHECK(calls[1].messages[1].role == Role::Assistant);
    CHECK(calls[1].messages[1].text() == "not json");

    auto bad = std::make_shared<MockBackend>(json::array({"nope", "still nope", "unused"}));
    Harness h2(bad);
    try {
      h2.gateway.complete(ask("q", ResponseFormat::StrictJson));
      FAIL("expected malformed json");
    } catch (const GatewayError& e) {
      CHECK(e.kind() == GatewayError::Kind::MalformedJson);
    }
    CHECK(bad->remaining_ordinal() == 1);
  }

  TEST_CASE("free text is passed through untouched") {
    auto mock = std::make_shared<MockBackend>(json::array({"  ```raw```  "}));
    Harness h(mock);
    CHECK(h.gateway.complete(ask("q")).text == "  ```raw```  ");
  }

  TEST_CASE("aliases route to their own backends") {
    ModelGateway g;
    CHECK_FALSE(g.has_backend(ModelAlias::OfflineRefinement));
    g.set_backend(ModelAlias::OnlineInference, std::make_shared<FunctionBackend>([](const ModelRequest&) { return "on"; }));
    g.set_backend(ModelAlias::OfflineRefinement,
                  std::make_shared<FunctionBackend>([](const ModelRequest&) { return "off"; }, "offline"));
    auto r = ask("q");
    r.alias = ModelAlias::OfflineRefinement;
    CHECK(g.complete(r).text == "off");
    CHECK(g.backend(ModelAlias::OfflineRefinement).id() == "offline");
    ModelGateway none;
    try {
      none.complete(ask("q"));
      FAIL("expected configuration error");
    } catch (const GatewayError& e) {
      CHECK(e.kind() == GatewayError::Kind::Configuration);
    }
    CHECK_THROWS_AS(g.set_backend(ModelAlias::OnlineInference, nullptr), std::invalid_argument);
  }

  TEST_CASE("code fence stripping") {
    CHECK(strip_code_fence("  {}  ") == "{}");
    CHECK(strip_code_fence("```\n[1]\n```") == "[1]");
    CHECK(strip_code_fence("```json {}```") == "```json {}```");
  }

  TEST_CASE("token bucket with no rate never blocks") {
    TokenBucket b(0.0);
    for (int i = 0; i < 1000; ++i) b.acquire();
    TokenBucket fast(1000.0);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 1100; ++i) fast.acquire();
    // 1000 tokens are available up front; the remaining 100 need about 0.1 s.
    CHECK(std::chrono::steady_clock::now() - start >= std::chrono::milliseconds(80));
  }
}
