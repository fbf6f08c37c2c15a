#pragma once

#include <span>
#include <string>
#include <vector>

namespace malsum {

class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  /// Throws Error(BadResponse) if empty or any value is not finite.
  explicit EmbeddingVector(std::vector<double> values);

  std::size_t dimension() const noexcept { return values_.size(); }
  const std::vector<double>& values() const noexcept { return values_; }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

/// Cosine similarity clamped to [-1, 1]; 0 when either vector has zero norm.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Maps a cosine from [-1, 1] onto [0, 1].
inline double unit_interval(double cosine_similarity) {
  return (cosine_similarity + 1.0) / 2.0;
}

/// Embeds many strings at once, one vector per input, in input order.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<EmbeddingVector> embed_many(std::span<const std::string> inputs) = 0;
  virtual EmbeddingVector embed_one(const std::string& input);
};

}  // namespace malsum
