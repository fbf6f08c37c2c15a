#pragma once

// The eleven summary-quality metrics: ROUGE-1/2/L, BERTScore P/R/F1,
// semantic similarity, Flesch reading ease, Distinct-1/2 and keyphrase
// matching. Everything except readability lies in [0, 1].
//
// BERTScore here embeds every token on its own (no context), uses no IDF
// weighting and no baseline rescaling, and maps cosines onto [0, 1] with
// (s + 1) / 2. Readability is the Flesch Reading Ease formula clamped to
// [0, 100].

#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "malsum/embedding.hpp"

namespace malsum {

struct BehaviorSummary;

struct TokenSequence {
  std::vector<std::string> tokens;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }
  bool operator==(const TokenSequence&) const = default;
};

/// Lowercases ASCII and splits on maximal runs of characters that are
/// neither ASCII alphanumerics nor bytes >= 0x80 (so UTF-8 letters stay
/// inside words).
TokenSequence tokenize(std::string_view text);

struct MetricVector {
  double rouge1_f = 0;
  double rouge2_f = 0;
  double rougeL_f = 0;
  double bertscore_p = 0;
  double bertscore_r = 0;
  double bertscore_f1 = 0;
  double semantic_similarity = 0;
  double readability = 0;
  double distinct1 = 0;
  double distinct2 = 0;
  double keyphrase_match = 0;

  /// Empty when every field is inside its declared range.
  std::vector<std::string> range_violations() const;

  bool operator==(const MetricVector&) const = default;
};

/// Field names in results-table column order.
const std::vector<std::string>& metric_field_names();
/// Column abbreviations matching metric_field_names().
const std::vector<std::string>& metric_column_names();
double metric_value(const MetricVector& m, std::size_t index);

nlohmann::json to_json(const MetricVector& m);
MetricVector metric_vector_from_json(const nlohmann::json& j);

/// F1 of clipped n-gram overlap; 0 when either side has no n-grams.
/// Throws Error(InvalidArgument) unless n is 1 or 2.
double rouge_n(const TokenSequence& candidate, const TokenSequence& reference, int n);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);
double rouge_l(const TokenSequence& candidate, const TokenSequence& reference);

struct BertScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Greedy max matching of per-token embeddings. Throws Error(EmptyInput)
/// when either side is empty; embedder errors propagate.
BertScore bertscore(const TokenSequence& candidate, const TokenSequence& reference,
                    Embedder& token_embedder);

/// Throws Error(EmptyInput) for empty text.
double semantic_similarity(const std::string& candidate, const std::string& reference,
                           Embedder& text_embedder);

/// Clamped Flesch Reading Ease from raw counts.
double flesch_from_counts(std::size_t words, std::size_t sentences, std::size_t syllables);
double flesch_raw(std::size_t words, std::size_t sentences, std::size_t syllables);

struct ReadabilityCounts {
  std::size_t words = 0;
  std::size_t sentences = 0;
  std::size_t syllables = 0;
};
ReadabilityCounts readability_counts(std::string_view text);

/// Throws Error(EmptyInput) when the text has no words.
double flesch_reading_ease(std::string_view text);

/// Vowel groups over "aeiouy", minus one for a trailing silent 'e', at
/// least 1. Throws Error(InvalidArgument) for an empty word.
int count_syllables(std::string_view word);

/// |unique n-grams| / |n-grams|. Throws Error(EmptyInput) when the sequence
/// is shorter than n.
double distinct_n(const TokenSequence& tokens, int n);

const std::vector<std::string>& english_stopwords();
bool is_stopword(std::string_view token);

/// Non-stopword unigrams plus bigrams whose two tokens are both non-stopwords,
/// deduplicated and sorted.
std::vector<std::string> candidate_phrases(const TokenSequence& tokens);

/// Top-k phrases ranked by mapped cosine to the whole-text embedding;
/// ties broken lexicographically.
std::vector<std::string> top_keyphrases(const std::string& text, Embedder& text_embedder,
                                        std::size_t k);

/// Jaccard similarity of the two top-k keyphrase sets (1 when both are empty).
double keyphrase_match(const std::string& candidate, const std::string& reference,
                       Embedder& text_embedder, std::size_t k = 10);

struct MetricProviders {
  Embedder& token_embedder;
  Embedder& text_embedder;
  std::size_t keyphrase_k = 10;
};

struct PairEvaluation {
  MetricVector metrics;
  // Degenerate-input notes, e.g. "distinct2:too_short"; the metric is 0.
  std::vector<std::string> flags;
  // Metric group -> provider error message; the affected fields are 0.
  std::map<std::string, std::string> failures;

  bool complete() const { return failures.empty(); }
};

/// Computes all eleven metrics for one (generated, reference) pair. The
/// lexical metrics never fail; provider errors are collected per metric
/// group instead of thrown. Throws Error(EmptyInput) for an empty reference.
PairEvaluation evaluate_texts(const std::string& generated, const std::string& reference,
                              const MetricProviders& providers);

/// evaluate_texts over the summary's paragraph text.
PairEvaluation evaluate_pair(const BehaviorSummary& generated, const std::string& reference,
                             const MetricProviders& providers);

/// Memoizing decorator; thread-safe.
class CachingEmbedder final : public Embedder {
 public:
  explicit CachingEmbedder(Embedder& inner) : inner_(inner) {}
  std::vector<EmbeddingVector> embed_many(std::span<const std::string> inputs) override;

 private:
  Embedder& inner_;
  std::mutex mutex_;
  std::map<std::string, EmbeddingVector, std::less<>> cache_;
};

}  // namespace malsum
