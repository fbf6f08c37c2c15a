#include "malsum/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "malsum/error.hpp"
#include "malsum/summarizer.hpp"
#include "malsum/text.hpp"

namespace malsum {
namespace {

using nlohmann::json;

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

double f1(double p, double r) { return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0; }

// n-grams joined with a unit separator so they can key a hash map.
std::vector<std::string> ngrams(const TokenSequence& seq, int n) {
  std::vector<std::string> out;
  const auto un = static_cast<std::size_t>(n);
  if (seq.size() < un) return out;
  out.reserve(seq.size() - un + 1);
  for (std::size_t i = 0; i + un <= seq.size(); ++i) {
    std::string g = seq.tokens[i];
    for (std::size_t k = 1; k < un; ++k) {
      g += '\x1f';
      g += seq.tokens[i + k];
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::unordered_map<std::string, std::size_t> count(const std::vector<std::string>& items) {
  std::unordered_map<std::string, std::size_t> m;
  for (const auto& s : items) ++m[s];
  return m;
}

bool in_range(double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; }

}  // namespace

TokenSequence tokenize(std::string_view text) {
  TokenSequence seq;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!cur.empty()) {
      seq.tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) seq.tokens.push_back(std::move(cur));
  return seq;
}

const std::vector<std::string>& metric_field_names() {
  static const std::vector<std::string> names = {
      "rouge1_f",    "rouge2_f",  "rougeL_f",  "bertscore_p", "bertscore_r",    "bertscore_f1",
      "semantic_similarity", "readability", "distinct1", "distinct2", "keyphrase_match"};
  return names;
}

const std::vector<std::string>& metric_column_names() {
  static const std::vector<std::string> names = {"R-1", "R-2", "R-L", "BS-P", "BS-R", "BS-F1",
                                                 "SS",  "FKR", "D-1", "D-2",  "KM"};
  return names;
}

double metric_value(const MetricVector& m, std::size_t index) {
  switch (index) {
    case 0: return m.rouge1_f;
    case 1: return m.rouge2_f;
    case 2: return m.rougeL_f;
    case 3: return m.bertscore_p;
    case 4: return m.bertscore_r;
    case 5: return m.bertscore_f1;
    case 6: return m.semantic_similarity;
    case 7: return m.readability;
    case 8: return m.distinct1;
    case 9: return m.distinct2;
    case 10: return m.keyphrase_match;
    default: throw Error(ErrorCode::InvalidArgument, "metric index out of range");
  }
}

namespace {
double* metric_slot(MetricVector& m, std::size_t index) {
  double* slots[] = {&m.rouge1_f,     &m.rouge2_f,    &m.rougeL_f,
                     &m.bertscore_p,  &m.bertscore_r, &m.bertscore_f1,
                     &m.semantic_similarity, &m.readability, &m.distinct1,
                     &m.distinct2,    &m.keyphrase_match};
  return slots[index];
}
}  // namespace

std::vector<std::string> MetricVector::range_violations() const {
  std::vector<std::string> out;
  const auto& names = metric_field_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double hi = i == 7 ? 100.0 : 1.0;
    if (!in_range(metric_value(*this, i), 0.0, hi)) out.push_back(names[i]);
  }
  return out;
}

json to_json(const MetricVector& m) {
  json j = json::object();
  const auto& names = metric_field_names();
  for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = metric_value(m, i);
  return j;
}

MetricVector metric_vector_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::MalformedLine, "metrics: expected an object");
  MetricVector m;
  const auto& names = metric_field_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto it = j.find(names[i]);
    if (it == j.end() || !it->is_number()) {
      throw Error(ErrorCode::MalformedLine, "metrics: missing or non-numeric '" + names[i] + "'");
    }
    *metric_slot(m, i) = it->get<double>();
  }
  return m;
}

double rouge_n(const TokenSequence& candidate, const TokenSequence& reference, int n) {
  if (n != 1 && n != 2) throw Error(ErrorCode::InvalidArgument, "rouge_n: n must be 1 or 2");
  const auto cand = ngrams(candidate, n);
  const auto ref = ngrams(reference, n);
  if (cand.empty() || ref.empty()) return 0.0;
  const auto cand_counts = count(cand);
  const auto ref_counts = count(ref);
  std::size_t overlap = 0;
  for (const auto& [g, c] : cand_counts) {
    auto it = ref_counts.find(g);
    if (it != ref_counts.end()) overlap += std::min(c, it->second);
  }
  const double p = static_cast<double>(overlap) / static_cast<double>(cand.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
  return f1(p, r);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const TokenSequence& candidate, const TokenSequence& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const auto lcs = static_cast<double>(lcs_length(candidate.tokens, reference.tokens));
  return f1(lcs / static_cast<double>(candidate.size()), lcs / static_cast<double>(reference.size()));
}

BertScore bertscore(const TokenSequence& candidate, const TokenSequence& reference,
                    Embedder& token_embedder) {
  if (candidate.empty() || reference.empty()) {
    throw Error(ErrorCode::EmptyInput, "bertscore: empty token sequence");
  }
  std::set<std::string> unique(candidate.tokens.begin(), candidate.tokens.end());
  unique.insert(reference.tokens.begin(), reference.tokens.end());
  const std::vector<std::string> vocab(unique.begin(), unique.end());
  const auto vectors = token_embedder.embed_many(vocab);
  if (vectors.size() != vocab.size()) {
    throw Error(ErrorCode::BadResponse, "bertscore: embedder returned the wrong number of vectors");
  }
  auto index_of = [&](const std::string& t) {
    return static_cast<std::size_t>(std::lower_bound(vocab.begin(), vocab.end(), t) - vocab.begin());
  };
  std::vector<std::size_t> ci, ri;
  for (const auto& t : candidate.tokens) ci.push_back(index_of(t));
  for (const auto& t : reference.tokens) ri.push_back(index_of(t));

  std::vector<std::vector<double>> sim(ci.size(), std::vector<double>(ri.size()));
  for (std::size_t i = 0; i < ci.size(); ++i) {
    for (std::size_t j = 0; j < ri.size(); ++j) {
      sim[i][j] = unit_interval(cosine(vectors[ci[i]], vectors[ri[j]]));
    }
  }
  double p = 0;
  for (std::size_t i = 0; i < ci.size(); ++i) p += *std::max_element(sim[i].begin(), sim[i].end());
  p /= static_cast<double>(ci.size());
  double r = 0;
  for (std::size_t j = 0; j < ri.size(); ++j) {
    double best = 0;
    for (std::size_t i = 0; i < ci.size(); ++i) best = std::max(best, sim[i][j]);
    r += best;
  }
  r /= static_cast<double>(ri.size());
  return {p, r, f1(p, r)};
}

double semantic_similarity(const std::string& candidate, const std::string& reference,
                           Embedder& text_embedder) {
  if (text::trim(candidate).empty() || text::trim(reference).empty()) {
    throw Error(ErrorCode::EmptyInput, "semantic_similarity: empty text");
  }
  const std::vector<std::string> inputs = {candidate, reference};
  const auto v = text_embedder.embed_many(inputs);
  if (v.size() != 2) throw Error(ErrorCode::BadResponse, "semantic_similarity: expected two vectors");
  return unit_interval(cosine(v[0], v[1]));
}

double flesch_raw(std::size_t words, std::size_t sentences, std::size_t syllables) {
  if (words == 0 || sentences == 0) throw Error(ErrorCode::EmptyInput, "readability: no words or sentences");
  const auto w = static_cast<double>(words);
  return 206.835 - 1.015 * (w / static_cast<double>(sentences)) -
         84.6 * (static_cast<double>(syllables) / w);
}

double flesch_from_counts(std::size_t words, std::size_t sentences, std::size_t syllables) {
  return std::clamp(flesch_raw(words, sentences, syllables), 0.0, 100.0);
}

int count_syllables(std::string_view word) {
  if (word.empty()) throw Error(ErrorCode::InvalidArgument, "count_syllables: empty word");
  const std::string w = text::to_lower_ascii(word);
  auto vowel = [](char c) { return std::string_view("aeiouy").find(c) != std::string_view::npos; };
  int groups = 0;
  bool in_group = false;
  for (char c : w) {
    const bool v = vowel(c);
    if (v && !in_group) ++groups;
    in_group = v;
  }
  if (w.back() == 'e' && groups > 1) --groups;
  return std::max(groups, 1);
}

ReadabilityCounts readability_counts(std::string_view text) {
  ReadabilityCounts c;
  const auto tokens = tokenize(text);
  c.words = tokens.size();
  c.sentences = text::split_sentences(text).size();
  for (const auto& t : tokens.tokens) c.syllables += static_cast<std::size_t>(count_syllables(t));
  return c;
}

double flesch_reading_ease(std::string_view text) {
  const auto c = readability_counts(text);
  if (c.words == 0) throw Error(ErrorCode::EmptyInput, "readability: text has no words");
  return flesch_from_counts(c.words, std::max<std::size_t>(c.sentences, 1), c.syllables);
}

double distinct_n(const TokenSequence& tokens, int n) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "distinct_n: n must be positive");
  const auto grams = ngrams(tokens, n);
  if (grams.empty()) throw Error(ErrorCode::EmptyInput, "distinct_n: sequence shorter than n");
  const std::set<std::string> unique(grams.begin(), grams.end());
  return static_cast<double>(unique.size()) / static_cast<double>(grams.size());
}

const std::vector<std::string>& english_stopwords() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w = {
    "a", "about", "above", "across", "after", "afterwards", "again", "against",
    "all", "almost", "alone", "along", "already", "also", "although", "always",
    "am", "among", "amongst", "amoungst", "amount", "an", "and", "another",
    "any", "anyhow", "anyone", "anything", "anyway", "anywhere", "are",
    "around", "as", "at", "back", "be", "became", "because", "become",
    "becomes", "becoming", "been", "before", "beforehand", "behind", "being",
    "below", "beside", "besides", "between", "beyond", "bill", "both",
    "bottom", "but", "by", "call", "can", "cannot", "cant", "co", "con",
    "could", "couldnt", "cry", "de", "describe", "detail", "do", "done",
    "down", "due", "during", "each", "eg", "eight", "either", "eleven", "else",
    "elsewhere", "empty", "enough", "etc", "even", "ever", "every", "everyone",
    "everything", "everywhere", "except", "few", "fifteen", "fifty", "fill",
    "find", "fire", "first", "five", "for", "former", "formerly", "forty",
    "found", "four", "from", "front", "full", "further", "get", "give", "go",
    "had", "has", "hasnt", "have", "he", "hence", "her", "here", "hereafter",
    "hereby", "herein", "hereupon", "hers", "herself", "him", "himself", "his",
    "how", "however", "hundred", "i", "ie", "if", "in", "inc", "indeed",
    "interest", "into", "is", "it", "its", "itself", "keep", "last", "latter",
    "latterly", "least", "less", "ltd", "made", "many", "may", "me",
    "meanwhile", "might", "mill", "mine", "more", "moreover", "most", "mostly",
    "move", "much", "must", "my", "myself", "name", "namely", "neither",
    "never", "nevertheless", "next", "nine", "no", "nobody", "none", "noone",
    "nor", "not", "nothing", "now", "nowhere", "of", "off", "often", "on",
    "once", "one", "only", "onto", "or", "other", "others", "otherwise", "our",
    "ours", "ourselves", "out", "over", "own", "part", "per", "perhaps",
    "please", "put", "rather", "re", "same", "see", "seem", "seemed",
    "seeming", "seems", "serious", "several", "she", "should", "show", "side",
    "since", "sincere", "six", "sixty", "so", "some", "somehow", "someone",
    "something", "sometime", "sometimes", "somewhere", "still", "such",
    "system", "take", "ten", "than", "that", "the", "their", "them",
    "themselves", "then", "thence", "there", "thereafter", "thereby",
    "therefore", "therein", "thereupon", "these", "they", "thick", "thin",
    "third", "this", "those", "though", "three", "through", "throughout",
    "thru", "thus", "to", "together", "too", "top", "toward", "towards",
    "twelve", "twenty", "two", "un", "under", "until", "up", "upon", "us",
    "very", "via", "was", "we", "well", "were", "what", "whatever", "when",
    "whence", "whenever", "where", "whereafter", "whereas", "whereby",
    "wherein", "whereupon", "wherever", "whether", "which", "while", "whither",
    "who", "whoever", "whole", "whom", "whose", "why", "will", "with",
    "within", "without", "would", "yet", "you", "your", "yours", "yourself",
    "yourselves",
    };
    std::sort(w.begin(), w.end());
    return w;
  }();
  return words;
}

bool is_stopword(std::string_view token) {
  const auto& w = english_stopwords();
  return std::binary_search(w.begin(), w.end(), token, std::less<>{});
}

std::vector<std::string> candidate_phrases(const TokenSequence& tokens) {
  std::set<std::string> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (is_stopword(tokens.tokens[i])) continue;
    out.insert(tokens.tokens[i]);
    if (i + 1 < tokens.size() && !is_stopword(tokens.tokens[i + 1])) {
      out.insert(tokens.tokens[i] + " " + tokens.tokens[i + 1]);
    }
  }
  return {out.begin(), out.end()};
}

std::vector<std::string> top_keyphrases(const std::string& text, Embedder& text_embedder,
                                        std::size_t k) {
  const auto candidates = candidate_phrases(tokenize(text));
  if (candidates.empty() || k == 0) return {};
  std::vector<std::string> inputs;
  inputs.reserve(candidates.size() + 1);
  inputs.push_back(text);
  inputs.insert(inputs.end(), candidates.begin(), candidates.end());
  const auto vectors = text_embedder.embed_many(inputs);
  if (vectors.size() != inputs.size()) {
    throw Error(ErrorCode::BadResponse, "keyphrases: embedder returned the wrong number of vectors");
  }
  std::vector<std::pair<double, std::string>> scored;
  scored.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scored.emplace_back(unit_interval(cosine(vectors[0], vectors[i + 1])), candidates[i]);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < scored.size() && i < k; ++i) out.push_back(scored[i].second);
  return out;
}

double keyphrase_match(const std::string& candidate, const std::string& reference,
                       Embedder& text_embedder, std::size_t k) {
  const auto a = top_keyphrases(candidate, text_embedder, k);
  const auto b = top_keyphrases(reference, text_embedder, k);
  const std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::size_t inter = 0;
  for (const auto& s : sa) inter += sb.count(s);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

PairEvaluation evaluate_texts(const std::string& generated, const std::string& reference,
                              const MetricProviders& providers) {
  if (text::trim(reference).empty()) throw Error(ErrorCode::EmptyInput, "reference summary is empty");
  PairEvaluation ev;
  MetricVector& m = ev.metrics;
  const auto gen_tokens = tokenize(generated);
  const auto ref_tokens = tokenize(reference);

  m.rouge1_f = rouge_n(gen_tokens, ref_tokens, 1);
  m.rouge2_f = rouge_n(gen_tokens, ref_tokens, 2);
  m.rougeL_f = rouge_l(gen_tokens, ref_tokens);

  // Runs one provider-backed metric group; degenerate input becomes a flag,
  // any other failure is recorded against the group.
  auto guarded = [&](const std::string& group, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::EmptyInput) ev.flags.push_back(group + ":empty");
      else ev.failures[group] = e.what();
    } catch (const std::exception& e) {
      ev.failures[group] = e.what();
    }
  };

  guarded("bertscore", [&] {
    const auto bs = bertscore(gen_tokens, ref_tokens, providers.token_embedder);
    m.bertscore_p = bs.precision;
    m.bertscore_r = bs.recall;
    m.bertscore_f1 = bs.f1;
  });
  guarded("semantic_similarity", [&] {
    m.semantic_similarity = semantic_similarity(generated, reference, providers.text_embedder);
  });

  try {
    m.readability = flesch_reading_ease(generated);
  } catch (const Error&) {
    ev.flags.push_back("readability:empty");
  }
  for (int n : {1, 2}) {
    try {
      (n == 1 ? m.distinct1 : m.distinct2) = distinct_n(gen_tokens, n);
    } catch (const Error&) {
      ev.flags.push_back("distinct" + std::to_string(n) + ":too_short");
    }
  }

  guarded("keyphrase_match", [&] {
    m.keyphrase_match =
        keyphrase_match(generated, reference, providers.text_embedder, providers.keyphrase_k);
  });
  return ev;
}

PairEvaluation evaluate_pair(const BehaviorSummary& generated, const std::string& reference,
                             const MetricProviders& providers) {
  return evaluate_texts(generated.body_text(), reference, providers);
}

std::vector<EmbeddingVector> CachingEmbedder::embed_many(std::span<const std::string> inputs) {
  std::vector<std::string> misses;
  {
    std::lock_guard lock(mutex_);
    std::set<std::string_view> queued;
    for (const auto& s : inputs) {
      if (!cache_.contains(s) && queued.insert(s).second) misses.push_back(s);
    }
  }
  if (!misses.empty()) {
    auto fresh = inner_.embed_many(misses);
    if (fresh.size() != misses.size()) {
      throw Error(ErrorCode::BadResponse, "embedder returned the wrong number of vectors");
    }
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < misses.size(); ++i) cache_.emplace(misses[i], std::move(fresh[i]));
  }
  std::lock_guard lock(mutex_);
  std::vector<EmbeddingVector> out;
  out.reserve(inputs.size());
  for (const auto& s : inputs) out.push_back(cache_.find(s)->second);
  return out;
}

}  // namespace malsum
