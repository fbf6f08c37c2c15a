#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "malsum/error.hpp"
#include "malsum/mock_backend.hpp"
#include "malsum/summarizer.hpp"
#include "malsum/text.hpp"
#include "support.hpp"

using namespace malsum;
using nlohmann::json;

namespace {

const PromptTemplate kTmpl = PromptTemplate::default_template();

std::string text_of(const std::vector<SummarySection>& s, std::string_view heading) {
  for (const auto& sec : s) {
    if (sec.heading == heading) return sec.text;
  }
  FAIL("missing section");
  return {};
}

ModelProfile echo_profile(const std::string& text) {
  ModelProfile p;
  p.model_name = "echo-model";
  p.endpoint_url = "mock://local";
  p.api_key_env = "";
  p.mock = json{{"mode", "echo"}, {"echo_text", text}, {"latency_ms", 0}};
  return p;
}

std::set<std::string> words(std::string_view s) {
  std::set<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) {
    std::string clean;
    for (char c : w) {
      if (std::isalnum(static_cast<unsigned char>(c))) clean += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (!clean.empty()) out.insert(clean);
  }
  return out;
}

}  // namespace

TEST_SUITE("summarizer") {

TEST_CASE("default template") {
  CHECK(kTmpl.required_sections ==
        std::vector<std::string>{"Overview", "Observed Behaviors", "Impact", "Recommended Actions"});
  CHECK_NOTHROW(kTmpl.validate());
  CHECK(prompt_template_from_json(to_json(kTmpl)) == kTmpl);
}

TEST_CASE("template validation") {
  auto t = kTmpl;
  t.user_scaffold = "no placeholder";
  CHECK_THROWS_WITH(t.validate(), doctest::Contains("template"));
  t = kTmpl;
  t.user_scaffold += std::string(kEvidencePlaceholder);
  CHECK_THROWS_AS(t.validate(), Error);
  t = kTmpl;
  t.required_sections.clear();
  CHECK_THROWS_AS(t.validate(), Error);
  t = kTmpl;
  t.required_sections.push_back("overview");
  CHECK_THROWS_AS(t.validate(), Error);
}

TEST_CASE("prompt composition") {
  DistilledReport d;
  d.sections.push_back({"signatures", "### Triggered signatures\n- a (severity 1)"});
  const auto p = build_prompt(kTmpl, d);
  CHECK(p.system == kTmpl.system_text);
  CHECK(p.user.find("### Triggered signatures\n- a (severity 1)") != std::string::npos);
  CHECK(p.user.find(kEvidencePlaceholder) == std::string::npos);
  for (const auto& h : kTmpl.required_sections) CHECK(p.user.find(h) != std::string::npos);

  const auto empty = build_prompt(kTmpl, DistilledReport{});
  CHECK(empty.user.find(kNoEvidenceMarker) != std::string::npos);
}

TEST_CASE("all four headings present") {
  const auto s = post_process(
      "## Overview\nA dropper.\n\n## Observed Behaviors\n- Writes a file.\n- Sets a run key.\n\n"
      "## Impact\nPersistence.\n\n## Recommended Actions\nReimage the host.\n",
      kTmpl);
  REQUIRE(s.size() == 4);
  CHECK(s[0] == SummarySection{"Overview", "A dropper."});
  CHECK(s[1] == SummarySection{"Observed Behaviors", "Writes a file. Sets a run key."});
  CHECK(s[2] == SummarySection{"Impact", "Persistence."});
  CHECK(s[3] == SummarySection{"Recommended Actions", "Reimage the host."});
}

TEST_CASE("missing section gets the placeholder") {
  const auto s = post_process("Overview: Steals data.\nObserved Behaviors: Reads cookies.\nImpact: Loss.", kTmpl);
  REQUIRE(s.size() == 4);
  CHECK(s[0].text == "Steals data.");
  CHECK(s[3].heading == "Recommended Actions");
  CHECK(s[3].text == kMissingSectionText);
}

TEST_CASE("heading styles") {
  const auto s = post_process(
      "Sure, here is the summary.\n**Overview:**\nx1.\n# OBSERVED BEHAVIORS\nx2.\n"
      "3. *Impact*\nx3.\n- __Recommended Actions__:\nx4.",
      kTmpl);
  CHECK(text_of(s, "Overview") == "x1.");
  CHECK(text_of(s, "Observed Behaviors") == "x2.");
  CHECK(text_of(s, "Impact") == "x3.");
  CHECK(text_of(s, "Recommended Actions") == "x4.");
}

TEST_CASE("duplicate sentences are removed") {
  const auto s = post_process("## Overview\nIt encrypts files. It encrypts files. Then it exits.", kTmpl);
  CHECK(s[0].text == "It encrypts files. Then it exits.");
}

TEST_CASE("text without headings goes to the first section") {
  const auto s = post_process("Just a paragraph\r\nof text.", kTmpl);
  CHECK(s[0].text == "Just a paragraph of text.");
  CHECK(s[1].text == kMissingSectionText);
}

TEST_CASE("whitespace-only completion") {
  try {
    post_process(" \n\t ", kTmpl);
    FAIL("expected EmptyCompletion");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyCompletion);
  }
}

TEST_CASE("end to end through the echo mock") {
  const std::string completion =
      "## Overview\nEcho.\n## Observed Behaviors\nNothing.\n## Impact\nNone.\n## Recommended Actions\nNone.";
  auto profile = echo_profile(completion);
  LlmGateway gw(profile, make_transport(profile, false));
  const auto r = load_report_file(testing::fixture("reports/85f1745f031f63a54fe5e422a10dcc2b68fbc35c22a02c9292849ba66011a417.json").string());
  const auto out = summarize(r, {}, kTmpl, gw);
  CHECK(out.summary.sample_id == r.sample_id);
  CHECK(out.summary.model_name == "echo-model");
  CHECK(out.summary.raw_completion == completion);
  CHECK(out.summary.sections[0].text == "Echo.");
  CHECK(out.summary.word_count == 4);
  CHECK(out.exchange.user_prompt.find("### Triggered signatures") != std::string::npos);
}

TEST_CASE("synthesized summaries are deterministic") {
  ModelProfile p;
  p.model_name = "mock-llama-7b";
  p.endpoint_url = "mock://local";
  p.api_key_env = "";
  const auto r = load_report_file(testing::fixture("reports/45dc70927f025d1f15755849534c2ea8255b2797dd4f3c8d6b6acbb9529f6467.json").string());
  LlmGateway a(p, make_transport(p, false)), b(p, make_transport(p, false));
  const auto first = summarize(r, {}, kTmpl, a).summary;
  const auto second = summarize(r, {}, kTmpl, b).summary;
  CHECK(first == second);
  for (const auto& s : first.sections) CHECK(s.text != kMissingSectionText);
}

TEST_CASE("json round trip") {
  BehaviorSummary s{"id", "m", {{"Overview", "A."}, {"Impact", "B."}}, "raw", 2};
  CHECK(behavior_summary_from_json(to_json(s)) == s);
  CHECK(s.body_text() == "A.\n\nB.");
  CHECK(s.render_markdown() == "## Overview\n\nA.\n\n## Impact\n\nB.\n\n");
}

TEST_CASE("property: post-processing is idempotent and invents nothing") {
  std::mt19937 rng(21);
  const std::vector<std::string> styles = {"## {}", "**{}:**", "{}:", "# {}", "- {}", "1. {}", "### {}"};
  const std::set<std::string> fallback = words(kMissingSectionText);
  for (int trial = 0; trial < 200; ++trial) {
    std::string raw;
    if (rng() % 3 == 0) raw += testing::random_text(rng, 1, 8) + "\n";
    for (const auto& h : kTmpl.required_sections) {
      if (rng() % 5 == 0) continue;
      std::string style = styles[rng() % styles.size()];
      style.replace(style.find("{}"), 2, rng() % 2 ? h : text::to_lower_ascii(h));
      raw += style + "\n";
      const int paras = static_cast<int>(rng() % 3);
      for (int i = 0; i < paras; ++i) {
        raw += (rng() % 2 ? "- " : "") + testing::random_text(rng, 1, 25) + (rng() % 2 ? "\n" : "\r\n");
      }
      if (rng() % 4 == 0) raw += "\n\n";
    }
    if (text::trim(raw).empty()) continue;
    CAPTURE(raw);

    const auto once = post_process(raw, kTmpl);
    REQUIRE(once.size() == kTmpl.required_sections.size());
    BehaviorSummary s;
    s.sections = once;
    CHECK(post_process(s.render_markdown(), kTmpl) == once);

    const auto source = words(raw);
    for (const auto& sec : once) {
      for (const auto& w : words(sec.text)) {
        CAPTURE(w);
        CHECK((source.count(w) || fallback.count(w)));
      }
    }
  }
}

}
