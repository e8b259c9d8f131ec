#include <doctest.h>

#include <sstream>

#include "geoskill/expert_compiler.hpp"
#include "geoskill/library_io.hpp"
#include "geoskill/jsonl.hpp"
#include "support.hpp"

using namespace geoskill;

namespace {

ExpertTrajectoryRecord make_record(std::string id, std::vector<TrajectoryRound> rounds,
                                   TrajectoryOutcome outcome = TrajectoryOutcome::Success) {
  ExpertTrajectoryRecord r;
  r.trajectory_id = std::move(id);
  r.rounds = std::move(rounds);
  r.outcome = outcome;
  return r;
}

}  // namespace

TEST_SUITE("expert_compiler") {
  TEST_CASE("parser reports malformed lines and keeps good ones") {
    std::istringstream in(
        "{\"trajectory_id\":\"a\",\"rounds\":[{\"reasoning\":\"r\",\"conclusion\":\"c\"}],\"outcome\":\"success\"}\n"
        "{oops\n"
        "{\"rounds\":[],\"outcome\":\"success\"}\n"
        "{\"trajectory_id\":\"b\",\"rounds\":[],\"outcome\":\"success\"}\n"
        "{\"trajectory_id\":\"c\",\"rounds\":[{\"reasoning\":\"r\"}],\"outcome\":\"success\"}\n"
        "{\"trajectory_id\":\"d\",\"rounds\":[{\"reasoning\":\"r\",\"conclusion\":\"c\"}],\"outcome\":\"meh\"}\n"
        "{\"trajectory_id\":\"e\",\"rounds\":[{\"reasoning\":\"r\",\"conclusion\":\"c\"}],\"outcome\":\"brittle\","
        "\"ground_truth\":{\"lat\":42.5,\"lon\":1.5,\"country\":\"AD\"}}\n");
    const auto res = parse_trajectory_records(in);
    REQUIRE(res.records.size() == 2);
    CHECK(res.records[1].truth_country == "AD");
    CHECK(res.records[1].outcome == TrajectoryOutcome::Brittle);
    REQUIRE(res.diagnostics.size() == 5);
    CHECK(res.diagnostics[0].line == 2);
    CHECK(res.diagnostics[1].message.find("trajectory_id") != std::string::npos);
    CHECK(res.diagnostics[2].message.find("rounds") != std::string::npos);
    CHECK(res.diagnostics[3].message.find("conclusion") != std::string::npos);
    CHECK(res.diagnostics[4].message.find("outcome") != std::string::npos);
  }

  TEST_CASE("empty input yields nothing") {
    std::istringstream in("");
    const auto res = parse_trajectory_records(in);
    CHECK(res.records.empty());
    CHECK(res.diagnostics.empty());
  }

  TEST_CASE("lexicon picks the strongest marker and honours phrase boundaries") {
    const auto lex = CertaintyLexicon::defaults();
    CHECK(lex.calibrate("definitely Spain") == doctest::Approx(0.9));
    CHECK(lex.calibrate("probably Spain, possibly Andorra") == doctest::Approx(0.7));
    CHECK(lex.calibrate("I am not sure, maybe Chile") == doctest::Approx(0.5));
    CHECK(lex.calibrate("not sure at all") == doctest::Approx(0.35));
    CHECK(lex.calibrate("no marker here") == doctest::Approx(0.6));
    CHECK(lex.calibrate("indefinitely") == doctest::Approx(0.6));
    CHECK_THROWS_AS(CertaintyLexicon({{"x", 1.5}}, 0.5), std::invalid_argument);
  }

  TEST_CASE("longer markers shadow the shorter markers they contain") {
    const CertaintyLexicon lex({{"sure", 0.95}, {"not sure", 0.2}}, 0.6);
    CHECK(lex.calibrate("not sure") == doctest::Approx(0.2));
    CHECK(lex.calibrate("quite sure") == doctest::Approx(0.95));
  }

  TEST_CASE("semantic emptiness filter") {
    const ExpertCompiler c;
    CHECK(c.is_semantically_empty("Hmm, let me look again."));
    CHECK(c.is_semantically_empty("I think so."));
    CHECK_FALSE(c.is_semantically_empty("Andorra"));
    CHECK_FALSE(c.is_semantically_empty("Maybe the Pyrenees"));
    CHECK_FALSE(c.is_semantically_empty("yellow center lines tall snow markers"));
    // A certainty marker plus a geographic token always survives.
    CHECK_FALSE(c.is_semantically_empty("definitely Norway"));
  }

  TEST_CASE("stage heuristic") {
    const ExpertCompiler c;
    CHECK(c.assign_stage("temperate climate of southern Europe") == Stage::GlobalRegion);
    CHECK(c.assign_stage("temperate climate, so probably Spain") == Stage::Country);
    CHECK(c.assign_stage("street names in Catalan suggest Andorra") == Stage::Local);
    CHECK(c.assign_stage("white bollards with red caps, France") == Stage::Country);
  }

  TEST_CASE("extraction keeps order, drops empty steps and links consecutive survivors") {
    const ExpertCompiler c;
    const auto rec = make_record("t1", {{"Snow and conifers suggest a temperate climate.", "Probably the Pyrenees"},
                                        {"Hmm.", ""},
                                        {"Plates are white with a blue crest.", "Definitely Andorra"}});
    const auto x = c.extract(rec);
    REQUIRE(x.skills.size() == 2);
    CHECK(x.skills[0].stage == Stage::GlobalRegion);
    CHECK(x.skills[0].regions == std::set<std::string>{"pyrenees"});
    CHECK(x.skills[1].countries == std::set<std::string>{"AD"});
    CHECK(x.skills[1].confidence == doctest::Approx(0.9));
    CHECK(x.skills[1].instruction == "Plates are white with a blue crest.");
    CHECK(x.skills[1].heuristic == "Definitely Andorra");
    REQUIRE(x.edges.size() == 1);
    CHECK(x.edges[0] == std::pair{x.skills[0].id, x.skills[1].id});
  }

  TEST_CASE("conclusion without a place falls back to the reasoning for constraints") {
    const auto x = extract_skills(make_record("t", {{"Signs in Norwegian with yellow centre lines", "fits well"}}));
    REQUIRE(x.skills.size() == 1);
    CHECK(x.skills[0].countries == std::set<std::string>{"NO"});
  }

  TEST_CASE("compile deduplicates, aggregates priors and records brittle traces") {
    const TrajectoryRound a{"Plates are white with a blue crest.", "Possibly Andorra"};
    const TrajectoryRound a_strong{"Plates are white with a blue crest.", "possibly   andorra"};
    const TrajectoryRound b{"Street names say Carrer.", "Likely Andorra la Vella in Andorra"};
    const TrajectoryRound n{"Yellow centre lines and snow markers.", "Likely Norway"};
    std::vector<ExpertTrajectoryRecord> recs = {
        make_record("t1", {a, b}),
        make_record("t2", {a_strong, b}),
        make_record("t3", {a, b}, TrajectoryOutcome::Brittle),
        make_record("t4", {n, a}, TrajectoryOutcome::Brittle),
    };
    const SkillLibrary lib = compile_library(recs);
    CHECK(lib.version == 0);
    REQUIRE(lib.skills.size() == 2);
    const auto& sa = lib.skills.at(skill_id(a.reasoning, a.conclusion));
    CHECK(sa.provenance.source == "t1,t2");
    REQUIRE(lib.relation_priors.size() == 1);
    CHECK(lib.relation_priors[0].support == 2);
    CHECK(lib.relation_priors[0].failure == 1);
    REQUIRE(lib.failure_subset.size() == 2);
    CHECK(lib.failure_subset[0].trajectory == "t3");
    CHECK(lib.failure_subset[0].skills.size() == 2);
    // Skills only seen in brittle traces never enter the library.
    CHECK(lib.failure_subset[1].skills == std::vector<SkillId>{sa.id});
    CHECK(check_library(lib).empty());
  }

  TEST_CASE("fixture corpus compiles to the manifest ids") {
    const auto dir = geoskill::testing::data_dir();
    const auto manifest = geoskill::testing::read_json(dir / "expert_manifest.json");
    const auto parsed = parse_trajectory_records(dir / "expert_corpus.jsonl");
    CHECK(parsed.diagnostics.empty());
    const SkillLibrary lib = compile_library(parsed.records);
    REQUIRE(lib.skills.size() == manifest["skill_count"].get<std::size_t>());
    std::vector<std::string> ids;
    std::map<std::string, std::size_t> countries;
    std::map<std::string, std::size_t> stages;
    for (const auto& [id, s] : lib.skills) {
      ids.push_back(id);
      for (const auto& c : s.countries) ++countries[c];
      ++stages[std::string(to_string(s.stage))];
      CHECK(s.confidence == doctest::Approx(manifest["confidence"][id].get<double>()));
    }
    CHECK(ids == manifest["ids"].get<std::vector<std::string>>());
    CHECK(countries == manifest["countries"].get<std::map<std::string, std::size_t>>());
    CHECK(stages == manifest["stages"].get<std::map<std::string, std::size_t>>());
  }
}
