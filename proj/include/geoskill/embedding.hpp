#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace geoskill {

using Vector = std::vector<double>;

/// Dense text encoder. Implementations are deterministic per text and return
/// unit-norm vectors of a fixed dimension.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  virtual Vector embed(std::string_view text) const = 0;
  virtual std::vector<Vector> embed_batch(std::span<const std::string> texts) const;
};

inline constexpr std::size_t kDefaultEmbeddingDim = 384;

/// Signed feature hashing of character 3- and 4-grams taken inside
/// boundary-marked word tokens, L2-normalized. Text without any token maps
/// to the first basis vector so the output always has unit norm.
Vector fallback_embed(std::string_view text, std::size_t dimension = kDefaultEmbeddingDim);

class HashingEmbedder final : public EmbeddingProvider {
 public:
  explicit HashingEmbedder(std::size_t dimension = kDefaultEmbeddingDim);
  std::size_t dimension() const override { return dimension_; }
  Vector embed(std::string_view text) const override;

 private:
  std::size_t dimension_;
};

double dot(std::span<const double> a, std::span<const double> b);
double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace geoskill
