#include "geoskill/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "geoskill/text.hpp"

namespace geoskill {

std::optional<std::size_t> SkillIndex::position(std::string_view id) const {
  auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - ids.begin());
}

std::string index_text(const AtomicSkill& skill) {
  std::string out = skill.instruction;
  if (!skill.heuristic.empty()) out += " " + skill.heuristic;
  for (const auto& r : skill.regions) out += " " + r;
  return out;
}

SkillIndex build_index(const SkillLibrary& lib, const EmbeddingProvider& provider) {
  SkillIndex index;
  index.library_version = lib.version;
  index.dimension = provider.dimension();
  index.ids.reserve(lib.skills.size());
  index.embeddings.reserve(lib.skills.size() * index.dimension);

  std::uint64_t total_length = 0;
  for (const auto& [id, skill] : lib.skills) {
    const std::string doc = index_text(skill);
    const auto tokens = text::tokenize(doc);
    std::unordered_map<std::string, std::uint32_t> tf;
    for (const auto& t : tokens) ++tf[t];
    for (const auto& [term, count] : tf) ++index.doc_freqs[term];

    Vector v;
    try {
      v = provider.embed(doc);
    } catch (const std::exception& e) {
      throw IndexError(id, e.what());
    }
    if (v.size() != index.dimension) {
      throw IndexError(id, "provider returned dimension " + std::to_string(v.size()));
    }
    double norm = std::sqrt(dot(v, v));
    if (!(norm > 0.0)) throw IndexError(id, "provider returned a zero vector");
    for (double& x : v) x /= norm;

    index.ids.push_back(id);
    index.term_freqs.push_back(std::move(tf));
    index.doc_lengths.push_back(static_cast<std::uint32_t>(tokens.size()));
    index.embeddings.insert(index.embeddings.end(), v.begin(), v.end());
    total_length += tokens.size();
  }
  index.avg_doc_length =
      index.ids.empty() ? 0.0 : static_cast<double>(total_length) / static_cast<double>(index.ids.size());
  return index;
}

namespace {

struct TermWeight {
  std::string term;
  double idf;
};

std::vector<TermWeight> query_weights(const SkillIndex& index,
                                      std::span<const std::string> query_terms) {
  std::set<std::string> distinct(query_terms.begin(), query_terms.end());
  std::vector<TermWeight> out;
  const double n = static_cast<double>(index.size());
  for (const auto& term : distinct) {
    auto it = index.doc_freqs.find(term);
    if (it == index.doc_freqs.end()) continue;
    const double df = it->second;
    out.push_back({term, std::log(1.0 + (n - df + 0.5) / (df + 0.5))});
  }
  return out;
}

double score_doc(const SkillIndex& index, const std::vector<TermWeight>& weights, std::size_t doc,
                 const Bm25Params& p) {
  if (weights.empty()) return 0.0;
  const auto& tf = index.term_freqs[doc];
  const double norm_len =
      index.avg_doc_length > 0.0 ? index.doc_lengths[doc] / index.avg_doc_length : 0.0;
  double score = 0.0;
  for (const auto& w : weights) {
    auto it = tf.find(w.term);
    if (it == tf.end()) continue;
    const double f = it->second;
    score += w.idf * (f * (p.k1 + 1.0)) / (f + p.k1 * (1.0 - p.b + p.b * norm_len));
  }
  return score;
}

}  // namespace

double bm25_score(const SkillIndex& index, std::span<const std::string> query_terms,
                  std::string_view skill_id, const Bm25Params& params) {
  auto pos = index.position(skill_id);
  if (!pos) throw IndexError(std::string(skill_id), "unknown skill id");
  return score_doc(index, query_weights(index, query_terms), *pos, params);
}

std::vector<double> bm25_scores(const SkillIndex& index, std::span<const std::string> query_terms,
                                const Bm25Params& params) {
  const auto weights = query_weights(index, query_terms);
  std::vector<double> out(index.size());
  for (std::size_t d = 0; d < index.size(); ++d) out[d] = score_doc(index, weights, d, params);
  return out;
}

WeightedQuery::WeightedQuery(std::vector<QueryPart> parts) {
  double total = 0.0;
  for (const auto& p : parts) {
    if (!(p.weight >= 0.0) || !std::isfinite(p.weight)) {
      throw std::invalid_argument("query weight must be a non-negative number");
    }
    total += p.weight;
  }
  if (!(total > 0.0)) throw std::invalid_argument("query needs a part with positive weight");
  for (auto& p : parts) {
    if (p.weight == 0.0) continue;
    p.weight /= total;
    parts_.push_back(std::move(p));
  }
}

std::vector<double> hybrid_relevance(const SkillIndex& index, const WeightedQuery& query,
                                     const EmbeddingProvider& provider,
                                     const RetrievalParams& params) {
  std::vector<double> relevance(index.size(), 0.0);
  if (index.size() == 0) return relevance;
  for (const auto& part : query.parts()) {
    const auto lexical = bm25_scores(index, text::tokenize(part.text), params.bm25);
    const auto [lo_it, hi_it] = std::minmax_element(lexical.begin(), lexical.end());
    const double lo = *lo_it;
    const double span = *hi_it - lo;

    Vector q = provider.embed(part.text);
    const double qn = std::sqrt(dot(q, q));
    if (qn > 0.0) {
      for (double& x : q) x /= qn;
    }
    for (std::size_t d = 0; d < index.size(); ++d) {
      const double lex = span > 0.0 ? (lexical[d] - lo) / span : 0.0;
      const double sem = dot(q, index.embedding(d));
      relevance[d] += part.weight * (params.lexical_weight * lex + params.semantic_weight * sem);
    }
  }
  return relevance;
}

RetrievalResult hybrid_retrieve(const SkillIndex& index, const WeightedQuery& query,
                                const EmbeddingProvider& provider, const RetrievalParams& params) {
  if (params.k == 0) throw std::invalid_argument("k must be at least 1");
  RetrievalResult result;
  if (index.size() == 0) return result;

  const auto relevance = hybrid_relevance(index, query, provider, params);
  std::vector<std::size_t> pool;
  for (std::size_t d = 0; d < index.size(); ++d) {
    if (relevance[d] >= params.score_threshold) pool.push_back(d);
  }
  result.candidate_count = pool.size();

  const double lambda = params.diversity_lambda;
  std::vector<double> max_sim(index.size(), -std::numeric_limits<double>::infinity());
  std::vector<bool> taken(index.size(), false);
  bool first = true;
  while (result.selected.size() < params.k) {
    std::size_t best = index.size();
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t d : pool) {  // pool is in ascending id order
      if (taken[d]) continue;
      const double redundancy = first ? 0.0 : max_sim[d];
      const double value = lambda * relevance[d] - (1.0 - lambda) * redundancy;
      if (value > best_value) {
        best_value = value;
        best = d;
      }
    }
    if (best == index.size()) break;
    taken[best] = true;
    first = false;
    result.selected.push_back({index.ids[best], relevance[best]});
    for (std::size_t d : pool) {
      if (taken[d]) continue;
      max_sim[d] = std::max(max_sim[d], dot(index.embedding(d), index.embedding(best)));
    }
  }
  return result;
}

}  // namespace geoskill
