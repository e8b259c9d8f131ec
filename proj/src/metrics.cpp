#include "geoskill/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <tuple>

namespace geoskill {

double haversine_km(const GeoCoordinate& a, const GeoCoordinate& b) {
  constexpr double kRad = std::numbers::pi / 180.0;
  const double phi1 = a.lat() * kRad;
  const double phi2 = b.lat() * kRad;
  const double dphi = (b.lat() - a.lat()) * kRad;
  const double dlambda = (b.lon() - a.lon()) * kRad;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
}

ThresholdReport threshold_accuracy(std::span<const double> distances_km,
                                   std::span<const double> thresholds_km) {
  ThresholdReport r;
  r.thresholds_km.assign(thresholds_km.begin(), thresholds_km.end());
  r.accuracy.assign(thresholds_km.size(), 0.0);
  r.samples = distances_km.size();
  r.empty = distances_km.empty();
  if (r.empty) return r;

  double sum = 0.0;
  for (double d : distances_km) {
    if (!std::isfinite(d) || d < 0.0) throw std::invalid_argument("distance must be finite and non-negative");
    sum += d;
    for (std::size_t t = 0; t < thresholds_km.size(); ++t) {
      if (d <= thresholds_km[t]) r.accuracy[t] += 1.0;
    }
  }
  for (double& a : r.accuracy) a /= static_cast<double>(r.samples);
  r.mean_km = sum / static_cast<double>(r.samples);
  return r;
}

std::vector<std::vector<double>> similarity_matrix(std::span<const std::string> predicted,
                                                   std::span<const std::string> gold,
                                                   const EmbeddingProvider& provider) {
  std::vector<Vector> pe;
  std::vector<Vector> ge;
  pe.reserve(predicted.size());
  ge.reserve(gold.size());
  for (const auto& p : predicted) pe.push_back(provider.embed(p));
  for (const auto& g : gold) ge.push_back(provider.embed(g));

  std::vector<std::vector<double>> sim(predicted.size(), std::vector<double>(gold.size(), 0.0));
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    for (std::size_t j = 0; j < gold.size(); ++j) {
      sim[i][j] = predicted[i] == gold[j] ? 1.0 : cosine(pe[i], ge[j]);
    }
  }
  return sim;
}

SampleMatch greedy_match(const std::vector<std::vector<double>>& sim, std::size_t n_pred,
                         std::size_t n_gold, double theta) {
  std::vector<std::tuple<double, std::size_t, std::size_t>> cands;
  for (std::size_t i = 0; i < n_pred; ++i) {
    for (std::size_t j = 0; j < n_gold; ++j) {
      if (sim[i][j] >= theta) cands.emplace_back(sim[i][j], i, j);
    }
  }
  std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  });

  SampleMatch m;
  std::vector<bool> used_p(n_pred, false);
  std::vector<bool> used_g(n_gold, false);
  for (const auto& [s, i, j] : cands) {
    if (used_p[i] || used_g[j]) continue;
    used_p[i] = used_g[j] = true;
    m.pairs.emplace_back(i, j);
  }
  m.tp = m.pairs.size();
  m.fp = n_pred - m.tp;
  m.fn = n_gold - m.tp;
  return m;
}

void prf(std::size_t tp, std::size_t fp, std::size_t fn, double& p, double& r, double& f1) {
  p = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : (fn == 0 ? 1.0 : 0.0);
  r = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : (fp == 0 ? 1.0 : 0.0);
  f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

FaithfulnessReport faithfulness_prf(const std::vector<std::vector<std::string>>& predicted,
                                    const std::vector<std::vector<std::string>>& gold,
                                    const EmbeddingProvider& provider, double theta_match) {
  if (predicted.size() != gold.size()) {
    throw std::invalid_argument("predicted and gold sample counts differ");
  }
  FaithfulnessReport rep;
  rep.theta_match = theta_match;
  double macro = 0.0;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    const auto sim = similarity_matrix(predicted[s], gold[s], provider);
    const SampleMatch m = greedy_match(sim, predicted[s].size(), gold[s].size(), theta_match);
    rep.tp += m.tp;
    rep.fp += m.fp;
    rep.fn += m.fn;
    double p = 0, r = 0, f = 0;
    prf(m.tp, m.fp, m.fn, p, r, f);
    rep.per_sample_f1.push_back(f);
    macro += f;
  }
  prf(rep.tp, rep.fp, rep.fn, rep.precision, rep.recall, rep.f1);
  rep.macro_f1 = predicted.empty() ? 0.0 : macro / static_cast<double>(predicted.size());
  return rep;
}

std::vector<std::uint64_t> EvolutionTable::counts() const {
  std::vector<std::uint64_t> out{initial_skills};
  for (const auto& r : rows) out.push_back(r.skills);
  return out;
}

EvolutionTable evolution_report(std::span<const EvolutionReport> history) {
  if (history.empty()) throw std::invalid_argument("evolution history is empty");
  EvolutionTable t;
  t.initial_skills = history.front().size_before;
  t.initial_version = history.front().version_before;
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& r = history[i];
    const std::string where = "evolution iteration " + std::to_string(i + 1);
    if (!r.balances()) {
      throw DataError(where + ": " + std::to_string(r.size_before) + " + " + std::to_string(r.added) +
                      " added - " + std::to_string(r.merged) + " merged - " +
                      std::to_string(r.pruned_skills) + " pruned != " + std::to_string(r.size_after));
    }
    if (r.version_after != r.version_before + 1) {
      throw DataError(where + ": version " + std::to_string(r.version_before) + " -> " +
                      std::to_string(r.version_after) + " is not a single step");
    }
    if (i > 0) {
      const auto& prev = history[i - 1];
      if (r.size_before != prev.size_after) {
        throw DataError(where + ": starts at " + std::to_string(r.size_before) + " skills but the previous ended at " +
                        std::to_string(prev.size_after));
      }
      if (r.version_before != prev.version_after) {
        throw DataError(where + ": starts at version " + std::to_string(r.version_before) +
                        " but the previous produced " + std::to_string(prev.version_after));
      }
    }
    EvolutionRow row;
    row.iteration = i + 1;
    row.version = r.version_after;
    row.skills = r.size_after;
    row.delta = static_cast<std::int64_t>(r.size_after) - static_cast<std::int64_t>(r.size_before);
    row.added = r.added;
    row.merged = r.merged;
    row.pruned = r.pruned_skills;
    t.rows.push_back(row);
  }
  return t;
}

}  // namespace geoskill
