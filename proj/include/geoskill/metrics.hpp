#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "geoskill/embedding.hpp"
#include "geoskill/errors.hpp"
#include "geoskill/evolution_report.hpp"
#include "geoskill/skill.hpp"

namespace geoskill {

inline constexpr double kEarthRadiusKm = 6371.0;

/// Great-circle distance on a sphere of radius kEarthRadiusKm.
double haversine_km(const GeoCoordinate& a, const GeoCoordinate& b);

inline const std::vector<double> kDefaultThresholdsKm = {10.0, 25.0, 200.0, 750.0, 2000.0};

struct ThresholdReport {
  std::vector<double> thresholds_km;
  std::vector<double> accuracy;  // fraction with distance <= threshold
  std::size_t samples = 0;
  double mean_km = 0.0;
  bool empty = false;  // no samples: accuracies and mean are reported as 0
};

/// Throws std::invalid_argument on a negative or non-finite distance.
ThresholdReport threshold_accuracy(std::span<const double> distances_km,
                                   std::span<const double> thresholds_km = kDefaultThresholdsKm);

struct SampleMatch {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (predicted, gold)
};

/// Similarity matrix: exact string equality short-circuits to 1, otherwise
/// cosine of the provider's embeddings.
std::vector<std::vector<double>> similarity_matrix(std::span<const std::string> predicted,
                                                   std::span<const std::string> gold,
                                                   const EmbeddingProvider& provider);

/// One-to-one greedy matching by descending similarity; ties by predicted
/// index then gold index. Pairs below theta never match.
SampleMatch greedy_match(const std::vector<std::vector<double>>& sim, std::size_t n_pred,
                         std::size_t n_gold, double theta);

struct FaithfulnessReport {
  double precision = 0.0;  // micro
  double recall = 0.0;
  double f1 = 0.0;
  double macro_f1 = 0.0;  // mean of per_sample_f1
  std::vector<double> per_sample_f1;
  double theta_match = 0.8;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// P/R/F1 of a (tp, fp, fn) triple. Empty denominators score 1 when the other
/// side is also empty and 0 otherwise.
void prf(std::size_t tp, std::size_t fp, std::size_t fn, double& p, double& r, double& f1);

FaithfulnessReport faithfulness_prf(const std::vector<std::vector<std::string>>& predicted,
                                    const std::vector<std::vector<std::string>>& gold,
                                    const EmbeddingProvider& provider, double theta_match = 0.8);

struct EvolutionRow {
  std::size_t iteration = 0;  // 1-based
  std::uint64_t version = 0;
  std::uint64_t skills = 0;
  std::int64_t delta = 0;
  std::uint64_t added = 0;
  std::uint64_t merged = 0;
  std::uint64_t pruned = 0;
};

struct EvolutionTable {
  std::uint64_t initial_skills = 0;
  std::uint64_t initial_version = 0;
  std::vector<EvolutionRow> rows;

  /// Skill counts starting with the initial library.
  std::vector<std::uint64_t> counts() const;
};

/// Chains reports into per-iteration rows. Throws DataError naming the first
/// iteration whose arithmetic does not balance or does not continue the
/// previous one. Throws std::invalid_argument on an empty history.
EvolutionTable evolution_report(std::span<const EvolutionReport> history);

}  // namespace geoskill
