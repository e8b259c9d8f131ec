#include <doctest.h>

#include "geoskill/evolution.hpp"
#include "geoskill/metrics.hpp"
#include "support.hpp"

using namespace geoskill;
using nlohmann::json;

namespace {

InferenceRecord record(const std::string& id, std::vector<SkillId> steps, const std::string& country, double lat,
                       double lon, GroundTruth truth) {
  InferenceRecord r;
  r.query_id = id;
  r.prediction.country = country;
  r.prediction.coordinates = GeoCoordinate(lat, lon);
  r.prediction.confidence = 0.5;
  r.prediction.trajectory.steps = steps;
  for (const auto& s : steps) r.retrieved.push_back({s, 0.5});
  r.ground_truth = truth;
  return r;
}

SkillLibrary small_library() {
  SkillLibrary lib;
  for (auto s : {make_skill("yellow and blue border posts", "Andorra", 0.9, Stage::Country, {"AD"}),
                 make_skill("Catalan street names", "Andorra la Vella", 0.8, Stage::Local, {"AD"}),
                 make_skill("conifers on steep slopes", "Pyrenees", 0.6, Stage::GlobalRegion, {}, {"pyrenees"})}) {
    s.prior_confidence = s.confidence;
    lib.skills.emplace(s.id, s);
  }
  return lib;
}

const GroundTruth kAndorra{GeoCoordinate(42.5063, 1.5218), "AD"};

}  // namespace

TEST_SUITE("evolution") {
  TEST_CASE("confidence update") {
    auto s = make_skill("x y", "z", 0.9, Stage::Country);
    s.prior_confidence = 0.9;
    CHECK(update_confidence(s, 5.0) == doctest::Approx(0.9));
    s.failure = 11;
    CHECK(update_confidence(s, 5.0) == doctest::Approx(4.5 / 16.0));
    s.success = 4;
    s.failure = 1;
    CHECK(update_confidence(s, 5.0) == doctest::Approx(8.5 / 10.0));
  }

  TEST_CASE("error classification chain") {
    EvolutionConfig c;
    const GroundTruth t = kAndorra;
    auto p = [](const std::string& country, double lat, double lon) {
      GeoPrediction g;
      g.country = country;
      g.coordinates = GeoCoordinate(lat, lon);
      return g;
    };
    CHECK(classify_error(t, p("AD", 42.5, 1.5), 5, true, c) == ErrorType::HallucinatedCue);
    CHECK(classify_error(t, p("AD", 42.5, 1.5), 1, false, c) == ErrorType::RetrievalMiss);
    CHECK(classify_error(t, p("JP", 35.7, 139.7), 2, false, c) == ErrorType::WrongContinent);
    CHECK(classify_error(t, p("ES", 41.4, 2.2), 2, false, c) == ErrorType::WrongCountry);
    CHECK(classify_error(t, p("AD", 45.5, 1.5), 2, false, c) == ErrorType::WrongRegion);
    CHECK(classify_error(t, p("AD", 42.9, 1.5), 2, false, c) == ErrorType::CoordinateOffset);
    for (auto e : {ErrorType::WrongContinent, ErrorType::WrongCountry, ErrorType::WrongRegion,
                   ErrorType::CoordinateOffset, ErrorType::HallucinatedCue, ErrorType::RetrievalMiss}) {
      CHECK(parse_error_type(to_string(e)) == e);
    }
  }

  TEST_CASE("outcome marking uses the success radius") {
    auto r = record("q", {}, "AD", 42.6, 1.52, kAndorra);
    CHECK(*mark_outcome(r, kAndorra, 25.0).outcome == 0);
    r.prediction.coordinates = GeoCoordinate(42.8, 1.52);
    CHECK(*mark_outcome(r, kAndorra, 25.0).outcome == 1);
  }

  TEST_CASE("invoked skills include claim refs, sorted and unique") {
    auto r = record("q", {"b", "a"}, "AD", 0, 0, kAndorra);
    r.prediction.evidence = {{"t", {"scene.driving_side"}, {"c", "a"}}};
    CHECK(invoked_skills(r) == std::vector<SkillId>{"a", "b", "c"});
  }

  TEST_CASE("synthesis parsing: validation, cap and limit") {
    EvolutionConfig c;
    c.max_synthesized_per_batch = 2;
    const json reply = {{"skills",
                         {{{"instruction", "red roofs"}, {"heuristic", "Spain"}, {"confidence", 0.95}, {"countries", {"ES"}}},
                          {{"instruction", ""}, {"heuristic", "empty"}},
                          {{"heuristic", "no instruction"}},
                          "not an object",
                          {{"instruction", "bad stage"}, {"stage", "planet"}},
                          {{"instruction", "white kerbs"}, {"stage", "local"}, {"confidence", 0.4}},
                          {{"instruction", "third valid"}}}}};
    const auto r = parse_synthesis(reply, c, 4, "src");
    CHECK(r.proposed == 7);
    CHECK(r.invalid == 4);
    CHECK(r.over_limit == 1);
    REQUIRE(r.candidates.size() == 2);
    CHECK(r.candidates[0].confidence == doctest::Approx(0.7));
    CHECK(r.candidates[0].provenance == Provenance{ProvenanceKind::Synthesized, "src"});
    CHECK(r.candidates[0].version_introduced == 4);
    CHECK(r.candidates[1].stage == Stage::Local);
    CHECK_THROWS_AS(parse_synthesis(json{{"skill", json::array()}}, c, 1, "s"), GatewayError);
  }

  TEST_CASE("merge folds near-duplicates into the more confident skill") {
    SkillLibrary lib = small_library();
    auto dup = make_skill("yellow and blue border post", "Andorra", 0.95, Stage::Country, {"AD", "ES"});
    dup.success = 2;
    lib.skills.emplace(dup.id, dup);
    const auto posts = skill_id("yellow and blue border posts", "Andorra");
    const auto street = skill_id("Catalan street names", "Andorra la Vella");
    lib.relation_priors = {{posts, street, 3, 1}};
    lib.failure_subset = {{"t", {posts, dup.id}, "x"}};
    HashingEmbedder e;
    CHECK(cosine(e.embed(index_text(dup)), e.embed(index_text(lib.skills.at(posts)))) >= 0.92);
    MergeStats stats;
    const auto merged = merge(lib, e, 0.92, &stats);
    CHECK(stats.merged == 1);
    CHECK(stats.absorbed == std::vector<std::pair<SkillId, SkillId>>{{posts, dup.id}});
    REQUIRE(merged.skills.size() == 3);
    const auto& survivor = merged.skills.at(dup.id);
    CHECK(survivor.countries == std::set<std::string>{"AD", "ES"});
    CHECK(survivor.success == 2);
    CHECK(merged.relation_priors == std::vector<RelationPrior>{{dup.id, street, 3, 1}});
    CHECK(merged.failure_subset[0].skills == std::vector<SkillId>{dup.id});
    CHECK(check_library(merged).empty());
  }

  TEST_CASE("merge_pair drops priors that collapse into a self loop") {
    SkillLibrary lib = small_library();
    std::vector<SkillId> ids;
    for (const auto& [id, s] : lib.skills) ids.push_back(id);
    lib.relation_priors = {{ids[0], ids[1], 1, 0}};
    canonicalize_relations(lib.relation_priors);
    merge_pair(lib, ids[0], ids[1]);
    CHECK(lib.relation_priors.empty());
    CHECK_THROWS_AS(merge_pair(lib, ids[0], ids[0]), std::invalid_argument);
  }

  TEST_CASE("prune removes unreliable skills and failing relations") {
    SkillLibrary lib = small_library();
    std::vector<SkillId> ids;
    for (const auto& [id, s] : lib.skills) ids.push_back(id);
    const auto posts = skill_id("yellow and blue border posts", "Andorra");
    lib.skills.at(posts).failure = 11;  // 4.5 / 16 < 0.30
    const auto street = skill_id("Catalan street names", "Andorra la Vella");
    const auto conifers = skill_id("conifers on steep slopes", "Pyrenees");
    lib.relation_priors = {{conifers, street, 1, 4}, {street, conifers, 1, 3}, {posts, street, 9, 0}};
    canonicalize_relations(lib.relation_priors);
    lib.failure_subset = {{"only", {posts}, "x"}, {"mixed", {posts, street}, "y"}, {"none", {}, "z"}};
    PruneStats stats;
    const auto out = prune(lib, EvolutionConfig{}, &stats);
    CHECK(stats.skills == 1);
    CHECK(stats.relations == 2);
    CHECK_FALSE(out.find(posts));
    REQUIRE(out.relation_priors.size() == 1);
    CHECK(out.relation_priors[0].from == street);
    REQUIRE(out.failure_subset.size() == 2);
    CHECK(out.failure_subset[0].skills == std::vector<SkillId>{street});
    CHECK(out.failure_subset[1].trajectory == "none");

    lib.skills.at(posts).failure = 10;  // exactly 0.30 stays
    CHECK(prune(lib, EvolutionConfig{}).find(posts));
  }

  TEST_CASE("config checks name every bad field") {
    EvolutionConfig c;
    CHECK(c.check().empty());
    c.batch_size = 0;
    c.v_min = 1.5;
    c.merge_threshold = -1.0;
    CHECK(c.check().size() == 3);
  }

  TEST_CASE("evolve step end to end on a small library") {
    const SkillLibrary lib = small_library();
    const auto posts = skill_id("yellow and blue border posts", "Andorra");
    const auto street = skill_id("Catalan street names", "Andorra la Vella");
    const SkillLibrary before = lib;
    std::vector<InferenceRecord> recs = {
        record("ok", {posts, street}, "AD", 42.51, 1.52, kAndorra),
        record("far", {posts}, "ES", 40.4, -3.7, kAndorra),
        record("nolabel", {posts}, "AD", 0, 0, kAndorra),
    };
    recs[2].ground_truth.reset();
    auto offline = std::make_shared<MockBackend>(json::array(
        {{{"json", {{"skills", {{{"instruction", "Spanish plates have a blue EU band"}, {"heuristic", "Spain"},
                                 {"countries", {"ES"}}, {"confidence", 0.9}}}}}}}}));
    ModelGateway g;
    g.set_backend(ModelAlias::OfflineRefinement, offline);
    HashingEmbedder e;
    const auto step = evolve_step(lib, recs, EvolutionConfig{}, g, e);
    CHECK(lib == before);
    const auto& rep = step.report;
    CHECK(rep.records == 2);
    CHECK(rep.unlabeled == 1);
    CHECK(rep.successes == 1);
    CHECK(rep.failures == 1);
    CHECK(rep.success_increments == 2);
    CHECK(rep.failure_increments == 1);
    CHECK(rep.error_types == std::map<std::string, std::uint64_t>{{"retrieval_miss", 1}});
    CHECK(rep.batches == 1);
    CHECK(rep.added == 1);
    CHECK(rep.version_after == 1);
    CHECK(rep.balances());
    CHECK(step.library.version == 1);
    CHECK(step.library.skills.size() == 4);
    CHECK(step.index.library_version == 1);
    CHECK(step.index.size() == 4);
    const auto& p = step.library.skills.at(posts);
    CHECK(p.success == 1);
    CHECK(p.failure == 1);
    CHECK(p.confidence == doctest::Approx((5 * 0.9 + 1) / 7.0));
    const auto synth = skill_id("Spanish plates have a blue EU band", "Spain");
    CHECK(step.library.skills.at(synth).confidence == doctest::Approx(0.7));
    REQUIRE(step.library.failure_subset.size() == 1);
    CHECK(step.library.failure_subset[0].reason == "inference:retrieval_miss");
  }

  TEST_CASE("no failures means no model calls") {
    const SkillLibrary lib = small_library();
    const auto posts = skill_id("yellow and blue border posts", "Andorra");
    std::vector<InferenceRecord> recs = {record("ok", {posts}, "AD", 42.51, 1.52, kAndorra)};
    ModelGateway g;  // no backend configured
    HashingEmbedder e;
    const auto step = evolve_step(lib, recs, EvolutionConfig{}, g, e);
    CHECK(step.report.batches == 0);
    CHECK(step.library.skills.size() == 3);
  }

  TEST_CASE("history round trip") {
    geoskill::testing::TempDir root;
    LibraryStore store(root.path());
    SkillLibrary lib = small_library();
    store.commit(lib);
    EvolutionStep step;
    step.library = lib;
    step.library.version = 1;
    step.report.version_before = 0;
    step.report.version_after = 1;
    step.report.size_before = 3;
    step.report.size_after = 3;
    commit_step(store, step);
    const auto hist = read_history(store.history_path());
    REQUIRE(hist.size() == 1);
    CHECK(hist[0] == step.report);
    CHECK(store.load_head().version == 1);
  }
}
