#include <doctest.h>

#include "geoskill/errors.hpp"
#include "geoskill/hashing.hpp"
#include "geoskill/prompts.hpp"

using namespace geoskill;

TEST_SUITE("prompts") {
  TEST_CASE("bundled templates load and hash stably") {
    for (const char* name : {"reasoning", "corrective", "scene_parse", "json_repair", "synthesis", "task_prior"}) {
      CHECK_FALSE(prompts::load(name).empty());
      CHECK(prompts::template_hash(name) == hex_digest(prompts::load(name)));
    }
    CHECK_THROWS(prompts::load("no_such_template"));
  }

  TEST_CASE("render substitutes every placeholder") {
    CHECK(prompts::render("a {{x}} b {{y}}{{x}}", {{"x", "1"}, {"y", "2"}, {"unused", "3"}}) == "a 1 b 21");
    CHECK(prompts::render("no placeholders", {}) == "no placeholders");
  }

  TEST_CASE("values are not re-expanded") {
    CHECK(prompts::render("{{x}}", {{"x", "{{y}}"}}) == "{{y}}");
  }

  TEST_CASE("unknown or unterminated placeholders are data errors") {
    CHECK_THROWS_AS(prompts::render("{{missing}}", {}), DataError);
    CHECK_THROWS_AS(prompts::render("{{open", {{"open", "x"}}), DataError);
  }

  TEST_CASE("reasoning template needs all its sections") {
    CHECK_THROWS_AS(prompts::render(prompts::load("reasoning"), {{"task_prior", "t"}}), DataError);
  }
}
