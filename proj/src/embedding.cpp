#include "geoskill/embedding.hpp"

#include <cmath>
#include <stdexcept>

#include "geoskill/hashing.hpp"
#include "geoskill/text.hpp"

namespace geoskill {

std::vector<Vector> EmbeddingProvider::embed_batch(std::span<const std::string> texts) const {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

Vector fallback_embed(std::string_view text, std::size_t dimension) {
  if (dimension == 0) throw std::invalid_argument("embedding dimension must be positive");
  Vector v(dimension, 0.0);
  for (const auto& token : text::tokenize(text)) {
    std::u32string padded = U"#" + text::decode_utf8(token) + U"#";
    for (std::size_t n = 3; n <= 4; ++n) {
      if (padded.size() < n) continue;
      for (std::size_t i = 0; i + n <= padded.size(); ++i) {
        const std::string gram = text::encode_utf8(padded.substr(i, n));
        const std::uint64_t h = fnv1a64(gram, kFnvOffsetBasis ^ n);
        const double sign = (h >> 63) ? -1.0 : 1.0;
        v[static_cast<std::size_t>(h % dimension)] += sign;
      }
    }
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm == 0.0) {
    v[0] = 1.0;
    return v;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

HashingEmbedder::HashingEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension == 0) throw std::invalid_argument("embedding dimension must be positive");
}

Vector HashingEmbedder::embed(std::string_view text) const { return fallback_embed(text, dimension_); }

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

}  // namespace geoskill
