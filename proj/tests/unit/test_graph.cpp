#include <doctest.h>

#include <map>

#include "geoskill/graph.hpp"
#include "support.hpp"

using namespace geoskill;

namespace {

AtomicSkill node(const std::string& text, Stage stage, std::set<std::string> countries,
                 std::set<std::string> regions = {}, double conf = 0.6) {
  return make_skill(text, "", conf, stage, std::move(countries), std::move(regions));
}

RelationPrior prior(const AtomicSkill& a, const AtomicSkill& b, std::uint64_t s, std::uint64_t f) {
  RelationPrior p;
  p.from = a.id;
  p.to = b.id;
  p.support = s;
  p.failure = f;
  return p;
}

}  // namespace

TEST_SUITE("graph") {
  TEST_CASE("edge rules") {
    const auto g = node("g", Stage::GlobalRegion, {});
    const auto ad = node("ad", Stage::Country, {"AD"});
    const auto es = node("es", Stage::Country, {"ES"});
    const auto local_ad = node("local", Stage::Local, {"AD"});
    const auto local_fr = node("localfr", Stage::Local, {"FR"}, {"alps"});
    const std::vector<AtomicSkill> skills = {g, ad, es, local_ad, local_fr};
    const std::vector<RelationPrior> priors = {prior(ad, es, 2, 1), prior(es, local_fr, 1, 1),
                                               prior(local_ad, ad, 5, 0)};
    const auto graph = compose_graph(skills, priors);
    CHECK(graph.has_edge(ad.id, es.id));             // prior, same stage
    CHECK_FALSE(graph.has_edge(es.id, local_fr.id));  // prior not supported, no shared constraint
    CHECK_FALSE(graph.has_edge(local_ad.id, ad.id));  // prior against the stage order
    CHECK(graph.has_edge(ad.id, local_ad.id));        // shared country
    CHECK_FALSE(graph.has_edge(ad.id, local_fr.id));
    CHECK(graph.has_edge(g.id, ad.id));               // unconstrained source
    CHECK(graph.has_edge(g.id, local_fr.id));
    CHECK_FALSE(graph.has_edge(es.id, ad.id));
    CHECK(check_graph(graph).empty());
  }

  TEST_CASE("shared region links across stages") {
    const auto a = node("a", Stage::GlobalRegion, {"FR"}, {"alps"});
    const auto b = node("b", Stage::Country, {"CH"}, {"alps"});
    const std::vector<AtomicSkill> skills = {a, b};
    CHECK(compose_graph(skills, {}).has_edge(a.id, b.id));
  }

  TEST_CASE("same-stage prior cycle loses its weakest edge") {
    const auto a = node("a", Stage::Country, {"AD"});
    const auto b = node("b", Stage::Country, {"ES"});
    const auto c = node("c", Stage::Country, {"FR"});
    const std::vector<AtomicSkill> skills = {a, b, c};
    const std::vector<RelationPrior> priors = {prior(a, b, 5, 0), prior(b, c, 4, 0), prior(c, a, 2, 0)};
    const auto graph = compose_graph(skills, priors);
    CHECK(graph.edges.size() == 2);
    CHECK_FALSE(graph.has_edge(c.id, a.id));
    CHECK(order_plan(graph) == std::vector<SkillId>{a.id, b.id, c.id});
  }

  TEST_CASE("priors outside the retrieved set are ignored") {
    const auto a = node("a", Stage::Country, {"AD"});
    const auto b = node("b", Stage::Country, {"ES"});
    const std::vector<AtomicSkill> skills = {a};
    const std::vector<RelationPrior> priors = {prior(a, b, 5, 0)};
    const auto graph = compose_graph(skills, priors);
    CHECK(graph.nodes.size() == 1);
    CHECK(graph.edges.empty());
  }

  TEST_CASE("plan order prefers stage, then confidence, then id") {
    const auto lo = node("low", Stage::Country, {"AD"}, {}, 0.4);
    const auto hi = node("high", Stage::Country, {"ES"}, {}, 0.9);
    const auto g = node("g", Stage::GlobalRegion, {"JP"});
    const std::vector<AtomicSkill> skills = {lo, hi, g};
    const auto graph = compose_graph(skills, {});
    CHECK(graph.edges.empty());
    CHECK(order_plan(graph) == std::vector<SkillId>{g.id, hi.id, lo.id});
  }

  TEST_CASE("order_plan rejects a cycle") {
    TaskSkillGraph g;
    g.nodes = {{"a", Stage::Country, 0.5}, {"b", Stage::Country, 0.5}};
    g.edges = {{"a", "b"}, {"b", "a"}};
    CHECK_THROWS_AS(order_plan(g), std::logic_error);
    CHECK_FALSE(check_graph(g).empty());
  }

  TEST_CASE("fixture graph orders as the reference topological sort") {
    const auto fx = geoskill::testing::read_json(geoskill::testing::data_dir() / "graph_fixture.json");
    const auto g = graph_from_json(fx["graph"]);
    CHECK(order_plan(g) == fx["order"].get<std::vector<SkillId>>());
    CHECK(graph_from_json(nlohmann::json::parse(graph_to_json(g).dump())) == g);
  }

  TEST_CASE("trajectory validation reports the first break") {
    TaskSkillGraph g;
    g.nodes = {{"a", Stage::GlobalRegion, 0.5}, {"b", Stage::Country, 0.5}, {"c", Stage::Local, 0.5}};
    g.edges = {{"a", "b"}, {"b", "c"}};
    const std::vector<SkillId> ok = {"a", "b", "c"};
    const std::vector<SkillId> skip = {"a", "c"};
    const std::vector<SkillId> unknown = {"a", "b", "zz"};
    const std::vector<SkillId> single = {"b"};
    CHECK_FALSE(validate_trajectory(g, ok).has_value());
    CHECK(validate_trajectory(g, skip) == std::optional<std::size_t>(1));
    CHECK(validate_trajectory(g, unknown) == std::optional<std::size_t>(2));
    CHECK_FALSE(validate_trajectory(g, single).has_value());
    CHECK(validate_trajectory(g, std::vector<SkillId>{"zz"}) == std::optional<std::size_t>(0));
  }

  TEST_CASE("shuffled edges keep nodes and count, and are seeded") {
    Rng rng(7);
    const auto lib = geoskill::testing::random_library(rng, 12, 20);
    std::vector<AtomicSkill> skills;
    for (const auto& [id, s] : lib.skills) skills.push_back(s);
    const auto g = compose_graph(skills, lib.relation_priors);
    REQUIRE(g.edges.size() > 3);
    const auto s1 = shuffle_edges(g, 1);
    CHECK(s1.nodes == g.nodes);
    CHECK(s1.edges.size() == g.edges.size());
    CHECK(check_graph(s1, false).empty());
    CHECK(shuffle_edges(g, 1) == s1);
    CHECK(shuffle_edges(g, 2).edges != s1.edges);
  }

  TEST_CASE("check_graph reports dangling endpoints and stage inversions") {
    TaskSkillGraph g;
    g.nodes = {{"a", Stage::Local, 0.5}, {"b", Stage::Country, 0.5}};
    g.edges = {{"a", "b"}};
    CHECK(check_graph(g).size() == 1);
    CHECK(check_graph(g, false).empty());
    g.edges.insert({"a", "zz"});
    CHECK(check_graph(g, false).size() == 1);
  }
}
