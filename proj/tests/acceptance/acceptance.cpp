// Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "malsum/batch.hpp"
#include "malsum/distiller.hpp"
#include "malsum/error.hpp"
#include "malsum/metrics.hpp"
#include "malsum/report.hpp"
#include "malsum/text.hpp"
#include "support.hpp"

using namespace malsum;
namespace fs = std::filesystem;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict = Verdict::Pass;
  std::string detail;
};

// Collects failure notes; the first few are kept for the report line.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (notes_.size() < 3) notes_.push_back(what);
  }
  int failures() const { return failures_; }
  Outcome outcome(const std::string& pass_detail) const {
    if (failures_ == 0) return {Verdict::Pass, pass_detail};
    std::string d = std::to_string(failures_) + " failed check(s): ";
    for (std::size_t i = 0; i < notes_.size(); ++i) d += (i ? "; " : "") + notes_[i];
    return {Verdict::Fail, d};
  }

 private:
  int failures_ = 0;
  std::vector<std::string> notes_;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

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

std::unique_ptr<LlmGateway> mock_embedder() {
  const auto cfg = RunConfig::defaults();
  return std::make_unique<LlmGateway>(cfg.embedder_profile, make_transport(cfg.embedder_profile, true),
                                      cfg.gateway_options());
}

// 1: ROUGE oracles and the LCS brute-force check.
Outcome metric_oracles() {
  struct Case {
    const char* candidate;
    const char* reference;
    double r1, r2, rl;
  };
  const Case cases[] = {
      {"the malware deletes files", "malware deletes system files", 0.75, 1.0 / 3.0, 0.75},
      {"a a a", "a", 0.5, 0.0, 0.5},
      {"x y z", "x y z", 1.0, 1.0, 1.0},
      {"a b", "c d", 0.0, 0.0, 0.0},
      {"a b c d", "d c b a", 1.0, 0.0, 0.25},
      {"a b", "a b c d", 2.0 / 3.0, 0.5, 2.0 / 3.0},
      {"the cat sat on the mat", "the cat on the mat", 10.0 / 11.0, 2.0 / 3.0, 10.0 / 11.0},
      {"a b a b", "b a b a", 1.0, 2.0 / 3.0, 0.75},
      {"x", "x y", 2.0 / 3.0, 0.0, 2.0 / 3.0},
      {"k l m n o", "k m o", 0.75, 0.0, 0.75},
      {"p q r s", "p q x r s", 8.0 / 9.0, 4.0 / 7.0, 8.0 / 9.0},
      {"", "a", 0.0, 0.0, 0.0},
  };
  Checker c;
  for (const auto& k : cases) {
    const auto cand = tokenize(k.candidate), ref = tokenize(k.reference);
    const double r1 = rouge_n(cand, ref, 1), r2 = rouge_n(cand, ref, 2), rl = rouge_l(cand, ref);
    const std::string tag = std::string("'") + k.candidate + "' vs '" + k.reference + "'";
    c.expect(near(r1, k.r1, 1e-12), tag + " R-1 " + fmt(r1) + " != " + fmt(k.r1));
    c.expect(near(r2, k.r2, 1e-12), tag + " R-2 " + fmt(r2) + " != " + fmt(k.r2));
    c.expect(near(rl, k.rl, 1e-12), tag + " R-L " + fmt(rl) + " != " + fmt(k.rl));
  }
  std::mt19937 rng(2024);
  const std::vector<std::string> vocab{"a", "b", "c", "d", "e", "f"};
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> a, b;
    for (int n = static_cast<int>(rng() % 13); n > 0; --n) a.push_back(vocab[rng() % vocab.size()]);
    for (int n = static_cast<int>(rng() % 13); n > 0; --n) b.push_back(vocab[rng() % vocab.size()]);
    const auto dp = lcs_length(a, b), brute = brute_lcs(a, b);
    c.expect(dp == brute, "LCS " + std::to_string(dp) + " != brute force " + std::to_string(brute));
  }
  return c.outcome(std::to_string(std::size(cases)) + " oracle pairs, 200 LCS pairs");
}

// 2: ranges over random pairs and identity values.
Outcome ranges_and_identity() {
  auto gateway = mock_embedder();
  CachingEmbedder embedder(*gateway);
  const MetricProviders providers{embedder, embedder, 10};
  std::mt19937 rng(77);
  Checker c;
  for (int i = 0; i < 1000; ++i) {
    const auto a = testing::random_text(rng, 1, 60);
    const auto b = testing::random_text(rng, 1, 60);
    const auto e = evaluate_texts(a, b, providers);
    c.expect(e.complete(), "provider failure on a random pair");
    for (const auto& v : e.metrics.range_violations()) c.expect(false, "range: " + v);

    const auto self = evaluate_texts(a, a, providers);
    const auto& m = self.metrics;
    c.expect(near(m.rouge1_f, 1, 1e-9), "identity rouge1 " + fmt(m.rouge1_f));
    if (tokenize(a).size() >= 2) c.expect(near(m.rouge2_f, 1, 1e-9), "identity rouge2 " + fmt(m.rouge2_f));
    c.expect(near(m.rougeL_f, 1, 1e-9), "identity rougeL " + fmt(m.rougeL_f));
    c.expect(near(m.bertscore_p, 1, 1e-6), "identity BS-P " + fmt(m.bertscore_p));
    c.expect(near(m.bertscore_r, 1, 1e-6), "identity BS-R " + fmt(m.bertscore_r));
    c.expect(near(m.bertscore_f1, 1, 1e-6), "identity BS-F1 " + fmt(m.bertscore_f1));
    c.expect(near(m.semantic_similarity, 1, 1e-6), "identity SS " + fmt(m.semantic_similarity));
    c.expect(near(m.keyphrase_match, 1, 1e-6), "identity KM " + fmt(m.keyphrase_match));
  }
  return c.outcome("1000 random pairs in range, identity pairs at 1.0");
}

// 3: Flesch Reading Ease against frozen formula values.
Outcome readability() {
  struct Case {
    std::size_t words, sentences, syllables;
    double expected;
  };
  const Case cases[] = {
      {10, 2, 14, 83.32},   {3, 1, 3, 100.0},     {100, 5, 140, 68.095}, {100, 5, 150, 59.635},
      {50, 1, 100, 0.0},    {12, 1, 40, 0.0},     {20, 4, 25, 96.01},    {20, 1, 20, 100.0},
      {7, 7, 7, 100.0},     {30, 2, 45, 64.71},   {45, 3, 70, 60.01},    {18, 1, 30, 47.565},
      {25, 5, 30, 100.0},   {60, 2, 110, 21.285}, {9, 3, 13, 81.59},     {40, 4, 52, 86.705},
      {15, 1, 35, 0.0},     {200, 10, 300, 59.635}, {80, 4, 100, 80.785}, {6, 1, 12, 31.545},
  };
  Checker c;
  int upper = 0, lower = 0;
  for (const auto& k : cases) {
    const double got = flesch_from_counts(k.words, k.sentences, k.syllables);
    c.expect(near(got, k.expected, 1e-9), "(" + std::to_string(k.words) + "," + std::to_string(k.sentences) +
                                             "," + std::to_string(k.syllables) + ") gave " + fmt(got) +
                                             ", expected " + fmt(k.expected));
    upper += k.expected == 100.0;
    lower += k.expected == 0.0;
  }
  c.expect(upper > 0 && lower > 0, "fixtures must exercise both clamps");
  c.expect(flesch_reading_ease("The cat sat.") == 100.0, "'The cat sat.' is not 100");
  return c.outcome(std::to_string(std::size(cases)) + " count fixtures, " + std::to_string(upper) +
                   " at the upper clamp, " + std::to_string(lower) + " at the lower clamp");
}

// 4: planted provenance strings never survive distillation.
Outcome distillation() {
  std::mt19937 rng(4242);
  Checker c;
  std::size_t planted_total = 0;
  for (int i = 0; i < 500; ++i) {
    const auto planted = testing::random_planted_report(rng);
    const auto report = parse_report(planted.doc.dump());
    DistillationConfig cfg;
    cfg.token_budget = std::uniform_int_distribution<std::size_t>(60, 4000)(rng);
    DistilledReport d;
    try {
      d = distill(report, cfg);
    } catch (const Error& e) {
      c.expect(false, std::string("distill threw: ") + e.what());
      continue;
    }
    const std::string out = d.render();
    c.expect(d.estimated_tokens <= cfg.token_budget,
             "tokens " + std::to_string(d.estimated_tokens) + " > budget " + std::to_string(cfg.token_budget));
    c.expect(d.estimated_tokens == estimate_tokens(out), "estimated_tokens disagrees with the text");
    for (const auto& s : planted.planted) c.expect(out.find(s) == std::string::npos, "planted '" + s + "' survived");
    planted_total += planted.planted.size();
  }
  return c.outcome("500 reports, " + std::to_string(planted_total) + " planted strings, none survived");
}

std::string without_timestamps(const std::string& s) {
  static const std::regex ts(R"("timestamp":"[^"]*")");
  return std::regex_replace(s, ts, R"("timestamp":"")");
}

// 5: offline batch over the fixture corpus.
Outcome end_to_end(const fs::path& scratch) {
  auto cfg = testing::fixture_config("run_offline.json", scratch / "e2e");
  cfg.offline = true;
  const auto gt = load_ground_truth(cfg.ground_truth);
  Checker c;
  const auto first = run_batch(cfg, cfg.reports_dir, gt);
  const std::string first_bytes = testing::read_text(first.records_path);
  const auto second = run_batch(cfg, cfg.reports_dir, gt);
  const std::string second_bytes = testing::read_text(second.records_path);

  c.expect(first.records.size() == 10, "expected 10 records, got " + std::to_string(first.records.size()));
  for (const auto& r : first.records) {
    c.expect(r.ok(), r.sample_id.substr(0, 8) + "/" + r.model_name + " failed");
    c.expect(r.metrics.has_value(), "record without metrics");
    if (r.metrics) c.expect(r.metrics->range_violations().empty(), "metric out of range");
  }
  for (const auto& line : lines(first_bytes)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    std::size_t present = 0;
    for (const auto& name : metric_field_names()) present += j["metrics"].contains(name) && j["metrics"][name].is_number();
    c.expect(present == 11, "record with " + std::to_string(present) + " metric fields");
  }
  c.expect(without_timestamps(first_bytes) == without_timestamps(second_bytes), "rerun differs beyond timestamps");

  const std::string table = testing::read_text(first.table_path);
  const std::string header = "| Model | R-1 | R-2 | R-L | BS-P | BS-R | BS-F1 | SS | FKR | D-1 | D-2 | KM |";
  c.expect(table.starts_with(header + "\n"), "table header mismatch");
  static const std::regex row(R"(\| [^|]+ \|( (\*\*)?\d+\.\d{4}(\*\*)? \|){11})");
  std::size_t rows = 0;
  for (const auto& line : lines(table)) {
    if (line.starts_with("| mock-")) {
      ++rows;
      c.expect(std::regex_match(std::string(line), row), "malformed row: " + std::string(line));
    }
  }
  c.expect(rows == 2, "expected 2 table rows");
  return c.outcome("10 records, rerun identical modulo timestamps, table header and 4-decimal cells ok");
}

// 6: one scripted failure is contained.
Outcome failure_containment(const fs::path& scratch) {
  const auto cfg = testing::fixture_config("run_failing.json", scratch / "failing");
  const auto gt = load_ground_truth(cfg.ground_truth);
  Checker c;
  BatchResult result;
  try {
    result = run_batch(cfg, cfg.reports_dir, gt);
  } catch (const Error& e) {
    return {Verdict::Fail, std::string("batch aborted: ") + e.what()};
  }
  const std::size_t n = gt.size() * cfg.profiles.size();
  std::size_t ok = 0;
  for (const auto& r : result.records) ok += r.ok();
  c.expect(result.records.size() == n, "expected " + std::to_string(n) + " records");
  c.expect(ok == n - 1, "expected " + std::to_string(n - 1) + " successes, got " + std::to_string(ok));
  c.expect(result.partial_failure(), "partial failure not signalled");
  c.expect(load_records(result.records_path).size() == n, "records.jsonl incomplete");
  return c.outcome(std::to_string(ok) + "/" + std::to_string(n) + " succeeded, partial failure signalled");
}

// 7: optional live endpoint.
Outcome live_smoke() {
  const char* endpoint = std::getenv("MALSUM_LIVE_ENDPOINT");
  const char* model = std::getenv("MALSUM_LIVE_MODEL");
  if (!endpoint || !*endpoint || !model || !*model) {
    return {Verdict::Skip, "set MALSUM_LIVE_ENDPOINT and MALSUM_LIVE_MODEL to run"};
  }
  auto cfg = RunConfig::defaults();
  ModelProfile p;
  p.model_name = model;
  p.endpoint_url = endpoint;
  p.timeout = std::chrono::milliseconds(120000);
  cfg.profiles = {p};
  cfg.retry_base_delay_ms = 1000;
  const auto report = testing::fixture("reports/" + testing::fixture_sample_ids().front() + ".json");
  try {
    const auto out = summarize_report_file(cfg, report, std::nullopt);
    Checker c;
    const std::string raw = text::to_lower_ascii(out.summary.raw_completion);
    for (const auto& h : cfg.prompt.required_sections) {
      c.expect(raw.find(text::to_lower_ascii(h)) != std::string::npos, "heading '" + h + "' missing");
    }
    c.expect(out.summary.sections.size() == 4, "not four sections");
    return c.outcome("four headings returned by " + std::string(model));
  } catch (const Error& e) {
    return {Verdict::Fail, std::string(error_code_name(e.code())) + ": " + e.what()};
  }
}

}  // namespace

int main() {
  testing::TempDir scratch;
  struct Criterion {
    int id;
    const char* name;
    double limit_s;  // 0 for none
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "metric oracle suite", 5, metric_oracles},
      {2, "range and identity properties", 30, ranges_and_identity},
      {3, "readability formula", 0, readability},
      {4, "distillation guarantee", 0, distillation},
      {5, "end-to-end offline run", 10, [&] { return end_to_end(scratch.path()); }},
      {6, "failure containment", 0, [&] { return failure_containment(scratch.path()); }},
      {7, "live endpoint smoke", 0, live_smoke},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Verdict::Fail, std::string("unexpected exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (o.verdict == Verdict::Pass && c.limit_s > 0 && secs >= c.limit_s) {
      o = {Verdict::Fail, "took " + fmt(secs) + " s, limit " + fmt(c.limit_s) + " s"};
    }
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
    failed += o.verdict == Verdict::Fail;
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.2f s", secs);
    std::cout << "criterion " << c.id << " " << tag << " [" << c.name << "] (" << timing << ") " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
