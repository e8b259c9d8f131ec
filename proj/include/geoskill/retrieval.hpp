#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "geoskill/embedding.hpp"
#include "geoskill/errors.hpp"
#include "geoskill/skill.hpp"

namespace geoskill {

class IndexError : public Error {
 public:
  IndexError(std::string skill, const std::string& what)
      : Error("indexing skill " + skill + ": " + what), skill_(std::move(skill)) {}
  const std::string& skill() const noexcept { return skill_; }

 private:
  std::string skill_;
};

/// Lexical statistics and unit-norm embeddings for one library version.
/// Documents are stored in ascending id order.
struct SkillIndex {
  std::uint64_t library_version = 0;
  std::size_t dimension = 0;
  std::vector<SkillId> ids;
  std::vector<std::unordered_map<std::string, std::uint32_t>> term_freqs;
  std::vector<std::uint32_t> doc_lengths;
  std::unordered_map<std::string, std::uint32_t> doc_freqs;
  double avg_doc_length = 0.0;
  std::vector<double> embeddings;  // ids.size() x dimension, row-major

  std::size_t size() const noexcept { return ids.size(); }
  std::optional<std::size_t> position(std::string_view id) const;
  std::span<const double> embedding(std::size_t doc) const {
    return {embeddings.data() + doc * dimension, dimension};
  }
};

/// Text indexed for a skill: instruction, heuristic and region tags.
std::string index_text(const AtomicSkill& skill);

SkillIndex build_index(const SkillLibrary& lib, const EmbeddingProvider& provider);

struct Bm25Params {
  double k1 = 1.5;
  double b = 0.75;
};

/// Okapi BM25 over distinct query terms with the non-negative IDF
/// ln(1 + (N - df + 0.5) / (df + 0.5)). Throws IndexError for unknown ids.
double bm25_score(const SkillIndex& index, std::span<const std::string> query_terms,
                  std::string_view skill_id, const Bm25Params& params = {});

/// BM25 for every document, in index order.
std::vector<double> bm25_scores(const SkillIndex& index, std::span<const std::string> query_terms,
                                const Bm25Params& params = {});

struct QueryPart {
  std::string text;
  double weight = 1.0;
};

/// Query parts with non-negative weights normalized to sum to one.
class WeightedQuery {
 public:
  explicit WeightedQuery(std::vector<QueryPart> parts);  // throws std::invalid_argument
  const std::vector<QueryPart>& parts() const noexcept { return parts_; }

 private:
  std::vector<QueryPart> parts_;
};

struct RetrievalParams {
  std::size_t k = 7;
  double score_threshold = 0.05;
  double diversity_lambda = 0.7;
  double lexical_weight = 0.5;
  double semantic_weight = 0.5;
  Bm25Params bm25;
};

struct ScoredSkill {
  SkillId id;
  double score = 0.0;

  bool operator==(const ScoredSkill&) const = default;
};

struct RetrievalResult {
  std::vector<ScoredSkill> selected;  // MMR selection order
  std::size_t candidate_count = 0;    // documents at or above the score threshold
};

/// Per-document hybrid relevance: over query parts, weight x
/// (w_lex * minmax(BM25) + w_sem * cosine). Index order.
std::vector<double> hybrid_relevance(const SkillIndex& index, const WeightedQuery& query,
                                     const EmbeddingProvider& provider,
                                     const RetrievalParams& params);

/// Thresholds the hybrid relevance, then picks up to k documents greedily by
/// maximal marginal relevance; ties go to the smaller id.
RetrievalResult hybrid_retrieve(const SkillIndex& index, const WeightedQuery& query,
                                const EmbeddingProvider& provider, const RetrievalParams& params);

}  // namespace geoskill
