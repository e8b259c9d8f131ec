#include <doctest.h>

#include <cmath>

#include "geoskill/retrieval.hpp"
#include "geoskill/text.hpp"
#include "support.hpp"

using namespace geoskill;

namespace {

SkillLibrary three_skill_library() {
  SkillLibrary lib;
  for (auto s : {make_skill("yellow centre lines on rural roads", "Norway", 0.7, Stage::Country, {"NO"}, {}),
                 make_skill("white bollards with red caps", "France", 0.8, Stage::Country, {"FR"}, {}),
                 make_skill("kanji on shop signs", "Japan", 0.9, Stage::Country, {"JP"}, {})}) {
    lib.skills.emplace(s.id, s);
  }
  return lib;
}

/// Always returns the same vector, so only the lexical part discriminates.
class ConstantEmbedder final : public EmbeddingProvider {
 public:
  std::size_t dimension() const override { return 2; }
  Vector embed(std::string_view) const override { return {1.0, 0.0}; }
};

class BrokenEmbedder final : public EmbeddingProvider {
 public:
  std::size_t dimension() const override { return 2; }
  Vector embed(std::string_view) const override { return {0.0, 0.0}; }
};

}  // namespace

TEST_SUITE("retrieval") {
  TEST_CASE("index text joins instruction, heuristic and sorted regions") {
    const auto s = make_skill("Snow poles", "Pyrenees", 0.5, Stage::GlobalRegion, {}, {"pyrenees", "alps"});
    CHECK(index_text(s) == "Snow poles Pyrenees alps pyrenees");
  }

  TEST_CASE("index is sorted by id with unit-norm rows") {
    HashingEmbedder e;
    const auto idx = build_index(three_skill_library(), e);
    REQUIRE(idx.size() == 3);
    CHECK(std::is_sorted(idx.ids.begin(), idx.ids.end()));
    for (std::size_t d = 0; d < idx.size(); ++d) CHECK(dot(idx.embedding(d), idx.embedding(d)) == doctest::Approx(1.0));
    CHECK(idx.doc_freqs.at("with") == 1);
    CHECK_FALSE(idx.position("nope").has_value());
  }

  TEST_CASE("zero embedding is an index error naming the skill") {
    BrokenEmbedder e;
    CHECK_THROWS_AS(build_index(three_skill_library(), e), IndexError);
  }

  TEST_CASE("bm25 against a hand computation") {
    // Three docs; "bollards" appears once in one doc of length 6 (tokens incl. heuristic).
    HashingEmbedder e;
    const auto lib = three_skill_library();
    const auto idx = build_index(lib, e);
    const auto fr = skill_id("white bollards with red caps", "France");
    const std::vector<std::string> q = {"bollards", "bollards", "unknownterm"};
    const double avg = (7.0 + 6.0 + 5.0) / 3.0;
    const double idf = std::log(1.0 + (3.0 - 1.0 + 0.5) / (1.0 + 0.5));
    const double want = idf * (1.0 * 2.5) / (1.0 + 1.5 * (0.25 + 0.75 * 6.0 / avg));
    CHECK(bm25_score(idx, q, fr) == doctest::Approx(want).epsilon(1e-12));
    CHECK(bm25_score(idx, q, skill_id("kanji on shop signs", "Japan")) == 0.0);
    CHECK_THROWS_AS(bm25_score(idx, q, "ffff"), IndexError);
  }

  TEST_CASE("weighted query normalizes and rejects bad weights") {
    WeightedQuery q({{"a", 3.0}, {"b", 1.0}, {"c", 0.0}});
    REQUIRE(q.parts().size() == 2);
    CHECK(q.parts()[0].weight == doctest::Approx(0.75));
    CHECK_THROWS_AS(WeightedQuery({{"a", -1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(WeightedQuery({{"a", 0.0}}), std::invalid_argument);
    CHECK_THROWS_AS(WeightedQuery({{"a", NAN}}), std::invalid_argument);
  }

  TEST_CASE("lexical hit ranks first; constant semantics leaves a flat floor") {
    ConstantEmbedder e;
    const auto idx = build_index(three_skill_library(), e);
    const auto rel = hybrid_relevance(idx, WeightedQuery({{"red bollards"}}), e, {});
    const auto fr = *idx.position(skill_id("white bollards with red caps", "France"));
    for (std::size_t d = 0; d < idx.size(); ++d) {
      CHECK(rel[d] == doctest::Approx(d == fr ? 1.0 : 0.5));
    }
  }

  TEST_CASE("mmr: ties go to the smaller id and k bounds the result") {
    ConstantEmbedder e;
    const auto idx = build_index(three_skill_library(), e);
    RetrievalParams p;
    p.k = 2;
    const auto r = hybrid_retrieve(idx, WeightedQuery({{"nothing matches"}}), e, p);
    CHECK(r.candidate_count == 3);
    REQUIRE(r.selected.size() == 2);
    CHECK(r.selected[0].id == idx.ids[0]);
    CHECK(r.selected[1].id == idx.ids[1]);
    p.k = 0;
    CHECK_THROWS_AS(hybrid_retrieve(idx, WeightedQuery({{"x"}}), e, p), std::invalid_argument);
  }

  TEST_CASE("threshold excludes weak candidates") {
    HashingEmbedder e;
    const auto idx = build_index(three_skill_library(), e);
    RetrievalParams p;
    p.score_threshold = 0.9;
    const auto r = hybrid_retrieve(idx, WeightedQuery({{"white bollards with red caps France"}}), e, p);
    REQUIRE(r.selected.size() == 1);
    CHECK(r.selected[0].id == skill_id("white bollards with red caps", "France"));
    CHECK(r.candidate_count == 1);
  }

  TEST_CASE("diversity pushes out a near-duplicate") {
    SkillLibrary lib = three_skill_library();
    auto dup = make_skill("white bollards with red caps seen", "France", 0.8, Stage::Country, {"FR"}, {});
    lib.skills.emplace(dup.id, dup);
    HashingEmbedder e;
    const auto idx = build_index(lib, e);
    RetrievalParams p;
    p.k = 2;
    p.score_threshold = 0.0;
    p.diversity_lambda = 1.0;
    const auto greedy = hybrid_retrieve(idx, WeightedQuery({{"white bollards red caps"}}), e, p);
    p.diversity_lambda = 0.3;
    const auto diverse = hybrid_retrieve(idx, WeightedQuery({{"white bollards red caps"}}), e, p);
    REQUIRE(greedy.selected.size() == 2);
    REQUIRE(diverse.selected.size() == 2);
    CHECK(greedy.selected[0].id == diverse.selected[0].id);
    CHECK(greedy.selected[1].id != diverse.selected[1].id);
  }

  TEST_CASE("empty index retrieves nothing") {
    HashingEmbedder e;
    const auto idx = build_index(SkillLibrary{}, e);
    CHECK(hybrid_retrieve(idx, WeightedQuery({{"x"}}), e, {}).selected.empty());
  }
}
