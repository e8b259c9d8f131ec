#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace geoskill {

/// Result of mapping free text onto applicability constraints.
struct RegionMapping {
  std::set<std::string> countries;  // ISO-2
  std::set<std::string> regions;    // normalized coarse-region tags

  bool empty() const noexcept { return countries.empty() && regions.empty(); }
  bool operator==(const RegionMapping&) const = default;
};

/// Static country/region lexicon with longest-match phrase lookup over
/// tokenized text. Countries win ties against regions of equal length.
class Gazetteer {
 public:
  enum class Kind { Country, Region };

  struct Hit {
    Kind kind;
    std::string value;  // ISO-2 or region tag
    std::size_t first_token;
    std::size_t token_count;
  };

  /// Tables in the bundled TSV format: `key<TAB>form|form|...`, '#' comments.
  static Gazetteer from_tables(std::string_view countries_tsv, std::string_view regions_tsv);
  static const Gazetteer& bundled();

  /// Non-overlapping hits scanning left to right, longest phrase first.
  std::vector<Hit> scan(const std::vector<std::string>& tokens) const;
  std::vector<Hit> scan(std::string_view text) const;

  RegionMapping map(std::string_view text) const;

  std::size_t country_count() const noexcept { return country_codes_.size(); }

 private:
  struct Phrase {
    std::vector<std::string> tokens;
    Kind kind;
    std::string value;
  };
  void add(Kind kind, const std::string& value, std::string_view form);

  std::map<std::string, std::vector<Phrase>> by_first_token_;  // each list sorted longest first
  std::set<std::string> country_codes_;
};

/// Word classes used by the step filter and stage heuristic.
class StageVocabulary {
 public:
  static StageVocabulary from_table(std::string_view tsv);
  static const StageVocabulary& bundled();

  /// Count of phrase occurrences from the class present in the token stream.
  bool has_global(const std::vector<std::string>& tokens) const;
  bool has_local(const std::vector<std::string>& tokens) const;
  bool is_stopword(const std::string& token) const;

 private:
  static bool contains_phrase(const std::vector<std::vector<std::string>>& phrases,
                              const std::vector<std::string>& tokens);
  std::vector<std::vector<std::string>> global_;
  std::vector<std::vector<std::string>> local_;
  std::set<std::string> stop_;
};

RegionMapping map_regions(std::string_view conclusion, const Gazetteer& gazetteer);

}  // namespace geoskill
