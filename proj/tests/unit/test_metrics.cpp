#include <doctest.h>

#include <algorithm>
#include <random>

#include "malsum/error.hpp"
#include "malsum/metrics.hpp"
#include "malsum/summarizer.hpp"
#include "support.hpp"

using namespace malsum;
using doctest::Approx;

namespace {

TokenSequence seq(std::initializer_list<const char*> words) {
  TokenSequence t;
  for (const char* w : words) t.tokens.emplace_back(w);
  return t;
}

std::vector<double> basis(int i, int dim = 4) {
  std::vector<double> v(dim, 0.0);
  v[i] = 1.0;
  return v;
}

// Longest common subsequence by enumerating every subsequence of a.
std::size_t brute_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
    const auto len = static_cast<std::size_t>(__builtin_popcount(mask));
    if (len <= best) continue;
    std::size_t j = 0;
    bool ok = true;
    for (std::size_t i = 0; i < a.size() && ok; ++i) {
      if (!(mask & (1u << i))) continue;
      while (j < b.size() && b[j] != a[i]) ++j;
      if (j == b.size()) ok = false;
      else ++j;
    }
    if (ok) best = len;
  }
  return best;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("tokenize") {
  CHECK(tokenize("").empty());
  CHECK(tokenize("Deletes system-files.") == seq({"deletes", "system", "files"}));
  CHECK(tokenize("C2 at 10.0.0.1") == seq({"c2", "at", "10", "0", "0", "1"}));
  CHECK(tokenize("Zoë's café") == seq({"zoë", "s", "café"}));
}

TEST_CASE("rouge worked examples") {
  const auto cand = seq({"the", "malware", "deletes", "files"});
  const auto ref = seq({"malware", "deletes", "system", "files"});
  CHECK(rouge_n(cand, ref, 1) == Approx(0.75).epsilon(1e-12));
  CHECK(rouge_n(cand, ref, 2) == Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(lcs_length(cand.tokens, ref.tokens) == 3);
  CHECK(rouge_l(cand, ref) == Approx(0.75).epsilon(1e-12));
  CHECK(rouge_n(cand, cand, 1) == 1.0);
  CHECK(rouge_n(cand, cand, 2) == 1.0);
  CHECK(rouge_l(cand, cand) == 1.0);
  CHECK(rouge_l(seq({"a", "b"}), seq({"c", "d"})) == 0.0);
  CHECK(rouge_n(seq({"a"}), seq({"a"}), 2) == 0.0);
  CHECK(rouge_n(seq({}), seq({"a"}), 1) == 0.0);
  CHECK_THROWS_AS(rouge_n(cand, ref, 3), Error);
}

TEST_CASE("rouge uses clipped counts") {
  CHECK(rouge_n(seq({"a", "a", "a"}), seq({"a"}), 1) == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("bertscore") {
  testing::DigestEmbedder digest;
  const auto a = seq({"malware", "writes", "registry"});
  const auto self = bertscore(a, a, digest);
  CHECK(self.precision == Approx(1.0).epsilon(1e-9));
  CHECK(self.f1 == Approx(1.0).epsilon(1e-9));

  testing::TableEmbedder table;
  table.set("x", basis(0));
  table.set("y", basis(1));
  table.set("p", basis(2));
  table.set("q", basis(3));
  const auto ortho = bertscore(seq({"x", "y"}), seq({"p", "q"}), table);
  CHECK(ortho.precision == Approx(0.5));
  CHECK(ortho.recall == Approx(0.5));
  CHECK(ortho.f1 == Approx(0.5));

  const auto half = bertscore(seq({"x", "y"}), seq({"x", "p"}), table);
  CHECK(half.precision == Approx(0.75));
  CHECK(half.recall == Approx(0.75));
  CHECK(table.calls() == 2);  // one batched call per score

  CHECK_THROWS_AS(bertscore(seq({}), a, digest), Error);
}

TEST_CASE("semantic similarity") {
  testing::TableEmbedder table;
  table.set("north", {1, 0, 0, 0});
  table.set("east", {0, 1, 0, 0});
  table.set("south", {-1, 0, 0, 0});
  CHECK(semantic_similarity("north", "north", table) == Approx(1.0));
  CHECK(semantic_similarity("north", "east", table) == Approx(0.5));
  CHECK(semantic_similarity("north", "south", table) == Approx(0.0));
  CHECK_THROWS_AS(semantic_similarity("", "north", table), Error);
}

TEST_CASE("readability") {
  CHECK(flesch_raw(10, 2, 14) == Approx(83.32).epsilon(1e-12));
  CHECK(flesch_from_counts(10, 2, 14) == Approx(83.32).epsilon(1e-12));
  CHECK(flesch_raw(3, 1, 3) == Approx(119.19).epsilon(1e-12));
  CHECK(flesch_reading_ease("The cat sat.") == 100.0);
  const auto counts = readability_counts("The cat sat.");
  CHECK(counts.words == 3);
  CHECK(counts.sentences == 1);
  CHECK(counts.syllables == 3);
  CHECK(flesch_reading_ease(
            "Incomprehensibility characterizes institutionalization internationalization "
            "counterrevolutionaries electroencephalography") == 0.0);
  CHECK_THROWS_AS(flesch_reading_ease("..."), Error);
}

TEST_CASE("syllables") {
  CHECK(count_syllables("cat") == 1);
  CHECK(count_syllables("behavior") == 3);
  CHECK(count_syllables("code") == 1);
  CHECK(count_syllables("the") == 1);
  CHECK(count_syllables("rhythm") == 1);
  CHECK(count_syllables("xyz") == 1);
  CHECK_THROWS_AS(count_syllables(""), Error);
}

TEST_CASE("distinct-n") {
  const auto t = seq({"scan", "scan", "delete"});
  CHECK(distinct_n(t, 1) == Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(distinct_n(t, 2) == 1.0);
  CHECK(distinct_n(seq({"a", "b", "c"}), 1) == 1.0);
  CHECK_THROWS_AS(distinct_n(seq({"a"}), 2), Error);
}

TEST_CASE("stopwords and candidate phrases") {
  CHECK(is_stopword("the"));
  CHECK(is_stopword("and"));
  CHECK_FALSE(is_stopword("malware"));
  CHECK(std::is_sorted(english_stopwords().begin(), english_stopwords().end()));
  CHECK(candidate_phrases(tokenize("The malware deletes shadow copies")) ==
        std::vector<std::string>{"copies", "deletes", "deletes shadow", "malware", "malware deletes",
                                 "shadow", "shadow copies"});
}

TEST_CASE("keyphrase match") {
  testing::DigestEmbedder digest;
  CHECK(keyphrase_match("ransomware encrypts user documents", "ransomware encrypts user documents", digest) == 1.0);
  CHECK(keyphrase_match("alpha beta", "gamma delta", digest) == 0.0);
  // Three phrases on each side, one shared: 1 / 5.
  CHECK(keyphrase_match("alpha beta", "beta gamma", digest, 10) == Approx(0.2));
  CHECK(keyphrase_match("the and of", "it is", digest) == 1.0);
  const auto top = top_keyphrases("alpha beta", digest, 2);
  CHECK(top.size() == 2);
}

TEST_CASE("evaluate identical texts") {
  testing::DigestEmbedder digest;
  const std::string text = "The sample encrypts documents and deletes shadow copies. It drops a ransom note.";
  const auto e = evaluate_texts(text, text, {digest, digest, 10});
  CHECK(e.complete());
  CHECK(e.flags.empty());
  CHECK(e.metrics.rouge1_f == 1.0);
  CHECK(e.metrics.rouge2_f == 1.0);
  CHECK(e.metrics.rougeL_f == 1.0);
  CHECK(e.metrics.bertscore_f1 == Approx(1.0).epsilon(1e-9));
  CHECK(e.metrics.semantic_similarity == Approx(1.0).epsilon(1e-9));
  CHECK(e.metrics.keyphrase_match == 1.0);
  CHECK(e.metrics.range_violations().empty());
}

TEST_CASE("evaluate disjoint texts") {
  testing::DigestEmbedder digest;
  const auto e = evaluate_texts("alpha beta gamma", "delta epsilon zeta", {digest, digest, 10});
  CHECK(e.metrics.rouge1_f == 0.0);
  CHECK(e.metrics.rouge2_f == 0.0);
  CHECK(e.metrics.rougeL_f == 0.0);
  CHECK(e.metrics.keyphrase_match == 0.0);
}

TEST_CASE("provider failures are contained") {
  testing::FailingEmbedder failing;
  const auto e = evaluate_texts("the host is infected", "the host was infected", {failing, failing, 10});
  CHECK_FALSE(e.complete());
  CHECK(e.failures.count("bertscore") == 1);
  CHECK(e.failures.count("semantic_similarity") == 1);
  CHECK(e.failures.count("keyphrase_match") == 1);
  CHECK(e.metrics.rouge1_f > 0.5);
  CHECK(e.metrics.bertscore_f1 == 0.0);

  testing::DigestEmbedder digest;
  CHECK_THROWS_AS(evaluate_texts("x", "", {digest, digest, 10}), Error);
  const auto short_gen = evaluate_texts("word", "reference text here", {digest, digest, 10});
  CHECK(std::find(short_gen.flags.begin(), short_gen.flags.end(), "distinct2:too_short") != short_gen.flags.end());
}

TEST_CASE("evaluate_pair uses the paragraph text") {
  testing::DigestEmbedder digest;
  BehaviorSummary s;
  s.sections = {{"Overview", "Drops a file."}, {"Impact", "Persistence."}};
  const auto e = evaluate_pair(s, "Drops a file.\n\nPersistence.", {digest, digest, 10});
  CHECK(e.metrics.rouge1_f == 1.0);
}

TEST_CASE("caching embedder") {
  testing::TableEmbedder inner;
  CachingEmbedder cache(inner);
  const std::vector<std::string> a{"x", "y"}, b{"y", "z", "x"};
  const auto first = cache.embed_many(a);
  const auto second = cache.embed_many(b);
  CHECK(inner.calls() == 2);
  CHECK(second[0] == first[1]);
  CHECK(second[2] == first[0]);
  cache.embed_many(a);
  CHECK(inner.calls() == 2);
}

TEST_CASE("metric vector json and names") {
  CHECK(metric_column_names() == std::vector<std::string>{"R-1", "R-2", "R-L", "BS-P", "BS-R", "BS-F1", "SS",
                                                          "FKR", "D-1", "D-2", "KM"});
  MetricVector m{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 55.5, 0.9, 1.0, 0.25};
  CHECK(metric_vector_from_json(to_json(m)) == m);
  CHECK(metric_value(m, 7) == 55.5);
  m.readability = 101;
  m.rouge1_f = -0.1;
  CHECK(m.range_violations().size() == 2);
}

TEST_CASE("property: rouge-l DP equals brute-force LCS") {
  std::mt19937 rng(3);
  const std::vector<std::string> vocab{"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> a, b;
    for (int i = static_cast<int>(rng() % 13); i > 0; --i) a.push_back(vocab[rng() % vocab.size()]);
    for (int i = static_cast<int>(rng() % 13); i > 0; --i) b.push_back(vocab[rng() % vocab.size()]);
    CHECK(lcs_length(a, b) == brute_lcs(a, b));
  }
}

TEST_CASE("property: ranges, identities and distinct-1") {
  std::mt19937 rng(8);
  testing::DigestEmbedder digest;
  CachingEmbedder cached(digest);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = testing::random_text(rng, 1, 40);
    const auto b = testing::random_text(rng, 1, 40);
    const auto e = evaluate_texts(a, b, {cached, cached, 10});
    CHECK(e.metrics.range_violations().empty());

    const auto ta = tokenize(a);
    if (ta.size() >= 2) CHECK(rouge_n(ta, ta, 2) == 1.0);
    CHECK(rouge_n(ta, ta, 1) == 1.0);
    const auto self = bertscore(ta, ta, cached);
    CHECK(self.f1 == Approx(1.0).epsilon(1e-9));

    auto shuffled = ta;
    std::shuffle(shuffled.tokens.begin(), shuffled.tokens.end(), rng);
    CHECK(distinct_n(shuffled, 1) == distinct_n(ta, 1));
    auto longer = ta;
    longer.tokens.push_back(ta.tokens[rng() % ta.size()]);
    CHECK(distinct_n(longer, 1) <= distinct_n(ta, 1));
  }
}

}
