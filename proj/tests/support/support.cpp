#include "support.hpp"

#include <cstdlib>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

#include "geoskill/errors.hpp"

namespace geoskill::testing {

namespace fs = std::filesystem;

fs::path data_dir() { return fs::path(GEOSKILL_TEST_DATA_DIR); }

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "geoskill-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

namespace {

const std::vector<std::string>& word_pool() {
  static const std::vector<std::string> pool = {
      "bollard", "pole",   "sign",    "plate",   "script", "marking", "curb",   "roof",   "tile",  "fence",
      "yellow",  "white",  "red",     "blue",    "dashed", "solid",   "double", "single", "tall",  "short",
      "cyrillic", "latin", "arabic",  "thai",    "kanji",  "hangul",  "palm",   "pine",   "birch", "desert",
      "snow",    "river",  "bridge",  "tunnel",  "lane",   "shoulder", "reflector", "chevron", "arrow", "stripe"};
  return pool;
}

const std::vector<std::string>& country_pool() {
  static const std::vector<std::string> pool = {"AD", "ES", "FR", "DE", "JP", "BR", "NO", "ZA"};
  return pool;
}

}  // namespace

std::string random_text(Rng& rng, std::size_t words) {
  const auto& pool = word_pool();
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) out += ' ';
    out += pool[uniform_index(rng, pool.size())];
  }
  return out;
}

SkillLibrary random_library(Rng& rng, std::size_t skills, std::size_t priors) {
  SkillLibrary lib;
  const auto& countries = country_pool();
  static const std::vector<std::string> regions = {"pyrenees", "alps", "scandinavia", "iberia"};
  while (lib.skills.size() < skills) {
    const auto stage = static_cast<Stage>(uniform_index(rng, 3));
    std::set<std::string> cs;
    std::set<std::string> rs;
    const auto n_countries = uniform_index(rng, 3);
    for (std::uint64_t i = 0; i < n_countries; ++i) cs.insert(countries[uniform_index(rng, countries.size())]);
    if (uniform_index(rng, 3) == 0) rs.insert(regions[uniform_index(rng, regions.size())]);
    const double conf = 0.35 + 0.6 * uniform_real(rng);
    AtomicSkill s = make_skill(random_text(rng, 4 + uniform_index(rng, 6)), random_text(rng, 2 + uniform_index(rng, 3)),
                               conf, stage, cs, rs);
    lib.skills.emplace(s.id, s);
  }
  std::vector<SkillId> ids;
  for (const auto& [id, s] : lib.skills) ids.push_back(id);
  for (std::size_t i = 0; i < priors && ids.size() > 1; ++i) {
    RelationPrior p;
    p.from = ids[uniform_index(rng, ids.size())];
    p.to = ids[uniform_index(rng, ids.size())];
    if (p.from == p.to) continue;
    p.support = uniform_index(rng, 6);
    p.failure = uniform_index(rng, 6);
    lib.relation_priors.push_back(p);
  }
  canonicalize_relations(lib.relation_priors);
  return lib;
}

nlohmann::json sample_scene_json() {
  return {{"script_language_patterns", {"Catalan"}},
          {"driving_side", "right"},
          {"road_marking_style", "white dashed center line"},
          {"pole_signage", "yellow border post"},
          {"vegetation_climate", "conifers"},
          {"built_environment", "stone houses"},
          {"ocr_snippets", {"Carrer Major"}}};
}

namespace {

std::string section_body(const std::string& prompt, const std::string& heading) {
  const std::string marker = "\n## " + heading + "\n";
  const auto start = prompt.find(marker);
  if (start == std::string::npos) return {};
  const auto body = start + marker.size();
  const auto end = prompt.find("\n## ", body);
  return prompt.substr(body, end == std::string::npos ? std::string::npos : end - body);
}

}  // namespace

bool has_section(const std::string& prompt, const std::string& heading) {
  return prompt.find("\n## " + heading + "\n") != std::string::npos;
}

std::vector<std::string> section_skill_refs(const std::string& prompt, const std::string& heading) {
  static const std::regex ref(R"(\[skill:([0-9a-f]+)\])");
  const std::string body = section_body(prompt, heading);
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(body.begin(), body.end(), ref); it != std::sregex_iterator(); ++it) {
    out.push_back((*it)[1].str());
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> section_edges(const std::string& prompt) {
  static const std::regex edge(R"(^([0-9a-f]+) -> ([0-9a-f]+)$)");
  std::istringstream in(section_body(prompt, "Skill-Graph"));
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::smatch m;
  while (std::getline(in, line)) {
    if (std::regex_match(line, m, edge)) out.emplace_back(m[1].str(), m[2].str());
  }
  return out;
}

ModelResponse PromptReactiveBackend::complete(const ModelRequest& request) {
  const std::string prompt = request.messages.front().text();
  prompts_.push_back(prompt);
  ModelResponse r;
  r.backend = id();
  if (!has_section(prompt, "Answer format")) {
    r.text = sample_scene_json().dump();
    return r;
  }
  const auto skills = section_skill_refs(prompt, "Skills");
  const auto plan = section_skill_refs(prompt, "Plan");
  nlohmann::json claim = {{"text", "right-hand traffic"}, {"evidence", {"scene.driving_side"}},
                          {"skills", nlohmann::json::array()}};
  if (!skills.empty()) claim["skills"].push_back(skills.front());
  nlohmann::json traj = nlohmann::json::array();
  if (!plan.empty()) traj.push_back({{"skill", plan.front()}, {"conclusion", "first step"}});
  r.text = nlohmann::json{{"country", "AD"},        {"region", ""},      {"lat", 42.5},
                          {"lon", 1.52},            {"confidence", 0.6}, {"trajectory", traj},
                          {"claims", {claim}}}
               .dump();
  return r;
}

}  // namespace geoskill::testing
