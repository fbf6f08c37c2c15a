#include "malsum/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "malsum/error.hpp"

namespace malsum {

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw Error(ErrorCode::BadResponse, "embedding has dimension 0");
  if (!std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); })) {
    throw Error(ErrorCode::BadResponse, "embedding contains a non-finite value");
  }
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    throw Error(ErrorCode::BadResponse, "cannot compare embeddings of different dimension");
  }
  double dot = 0, na = 0, nb = 0;
  const auto& x = a.values();
  const auto& y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    na += x[i] * x[i];
    nb += y[i] * y[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

EmbeddingVector Embedder::embed_one(const std::string& input) {
  auto v = embed_many(std::span<const std::string>(&input, 1));
  if (v.size() != 1) throw Error(ErrorCode::BadResponse, "embedder returned the wrong number of vectors");
  return std::move(v.front());
}

}  // namespace malsum
