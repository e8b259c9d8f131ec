#include "geoskill/gazetteer.hpp"

#include <algorithm>
#include <sstream>

#include "geoskill/assets.hpp"
#include "geoskill/errors.hpp"
#include "geoskill/text.hpp"

namespace geoskill {

namespace {

struct TableRow {
  std::string key;
  std::vector<std::string> forms;
};

std::vector<TableRow> parse_table(std::string_view tsv) {
  std::vector<TableRow> rows;
  std::istringstream in{std::string(tsv)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("table line " + std::to_string(number) + ": missing tab separator");
    }
    TableRow row;
    row.key = line.substr(0, tab);
    std::string rest = line.substr(tab + 1);
    std::size_t start = 0;
    while (start <= rest.size()) {
      const auto bar = rest.find('|', start);
      const auto form = rest.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
      if (!form.empty()) row.forms.push_back(form);
      if (bar == std::string::npos) break;
      start = bar + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

bool matches_at(const std::vector<std::string>& tokens, std::size_t i,
                const std::vector<std::string>& phrase) {
  if (i + phrase.size() > tokens.size()) return false;
  for (std::size_t k = 0; k < phrase.size(); ++k) {
    if (tokens[i + k] != phrase[k]) return false;
  }
  return true;
}

}  // namespace

void Gazetteer::add(Kind kind, const std::string& value, std::string_view form) {
  auto tokens = text::tokenize(form);
  if (tokens.empty()) return;
  auto& bucket = by_first_token_[tokens.front()];
  bucket.push_back(Phrase{std::move(tokens), kind, value});
}

Gazetteer Gazetteer::from_tables(std::string_view countries_tsv, std::string_view regions_tsv) {
  Gazetteer g;
  for (const auto& row : parse_table(countries_tsv)) {
    if (!text::is_iso2(row.key)) throw DataError("gazetteer key '" + row.key + "' is not ISO-2");
    g.country_codes_.insert(row.key);
    for (const auto& form : row.forms) g.add(Kind::Country, row.key, form);
  }
  for (const auto& row : parse_table(regions_tsv)) {
    for (const auto& form : row.forms) g.add(Kind::Region, row.key, form);
  }
  for (auto& [first, phrases] : g.by_first_token_) {
    std::stable_sort(phrases.begin(), phrases.end(), [](const Phrase& a, const Phrase& b) {
      if (a.tokens.size() != b.tokens.size()) return a.tokens.size() > b.tokens.size();
      return a.kind == Kind::Country && b.kind == Kind::Region;
    });
  }
  return g;
}

const Gazetteer& Gazetteer::bundled() {
  static const Gazetteer g =
      from_tables(assets::require("gazetteer.tsv"), assets::require("regions.tsv"));
  return g;
}

std::vector<Gazetteer::Hit> Gazetteer::scan(const std::vector<std::string>& tokens) const {
  std::vector<Hit> hits;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const Phrase* best = nullptr;
    if (auto it = by_first_token_.find(tokens[i]); it != by_first_token_.end()) {
      for (const auto& phrase : it->second) {
        if (matches_at(tokens, i, phrase.tokens)) {
          best = &phrase;
          break;
        }
      }
    }
    if (best) {
      hits.push_back(Hit{best->kind, best->value, i, best->tokens.size()});
      i += best->tokens.size();
    } else {
      ++i;
    }
  }
  return hits;
}

std::vector<Gazetteer::Hit> Gazetteer::scan(std::string_view text) const {
  return scan(text::tokenize(text));
}

RegionMapping Gazetteer::map(std::string_view text) const {
  RegionMapping out;
  for (const auto& hit : scan(text)) {
    (hit.kind == Kind::Country ? out.countries : out.regions).insert(hit.value);
  }
  return out;
}

RegionMapping map_regions(std::string_view conclusion, const Gazetteer& gazetteer) {
  return gazetteer.map(conclusion);
}

StageVocabulary StageVocabulary::from_table(std::string_view tsv) {
  StageVocabulary v;
  for (const auto& row : parse_table(tsv)) {
    for (const auto& form : row.forms) {
      auto tokens = text::tokenize(form);
      if (tokens.empty()) continue;
      if (row.key == "global") {
        v.global_.push_back(std::move(tokens));
      } else if (row.key == "local") {
        v.local_.push_back(std::move(tokens));
      } else if (row.key == "stop") {
        v.stop_.insert(tokens.front());
      } else {
        throw DataError("unknown stage vocabulary class '" + row.key + "'");
      }
    }
  }
  return v;
}

const StageVocabulary& StageVocabulary::bundled() {
  static const StageVocabulary v = from_table(assets::require("stage_vocab.tsv"));
  return v;
}

bool StageVocabulary::contains_phrase(const std::vector<std::vector<std::string>>& phrases,
                                      const std::vector<std::string>& tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (const auto& p : phrases) {
      if (matches_at(tokens, i, p)) return true;
    }
  }
  return false;
}

bool StageVocabulary::has_global(const std::vector<std::string>& tokens) const {
  return contains_phrase(global_, tokens);
}

bool StageVocabulary::has_local(const std::vector<std::string>& tokens) const {
  return contains_phrase(local_, tokens);
}

bool StageVocabulary::is_stopword(const std::string& token) const { return stop_.count(token) > 0; }

}  // namespace geoskill
