#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "malsum/distiller.hpp"
#include "malsum/gateway.hpp"
#include "malsum/report.hpp"

namespace malsum {

inline constexpr std::string_view kEvidencePlaceholder = "{{evidence}}";
inline constexpr std::string_view kNoEvidenceMarker = "(no behavioral evidence)";
inline constexpr std::string_view kMissingSectionText = "Not determined from available evidence.";

struct PromptTemplate {
  std::string system_text;
  std::string user_scaffold;  // exactly one kEvidencePlaceholder
  std::vector<std::string> required_sections;

  static PromptTemplate default_template();

  /// Throws Error(Config).
  void validate() const;

  bool operator==(const PromptTemplate&) const = default;
};

nlohmann::json to_json(const PromptTemplate& t);
PromptTemplate prompt_template_from_json(const nlohmann::json& j);

struct SummarySection {
  std::string heading;
  std::string text;

  bool operator==(const SummarySection&) const = default;
};

struct BehaviorSummary {
  std::string sample_id;
  std::string model_name;
  std::vector<SummarySection> sections;
  std::string raw_completion;
  std::size_t word_count = 0;

  /// Paragraphs joined by a blank line, headings excluded.
  std::string body_text() const;
  /// "## Heading" blocks; feeding this back to post_process is a fixed point.
  std::string render_markdown() const;

  bool operator==(const BehaviorSummary&) const = default;
};

nlohmann::json to_json(const BehaviorSummary& s);
BehaviorSummary behavior_summary_from_json(const nlohmann::json& j);

struct Prompt {
  std::string system;
  std::string user;
};

Prompt build_prompt(const PromptTemplate& tmpl, const DistilledReport& distilled);

/// Splits a completion into tmpl.required_sections, in order.
///
/// Line endings and whitespace are normalized, headings are recognized
/// case-insensitively at line start (markdown '#', bullets, numbering, bold
/// and a trailing ':' are tolerated, as is inline text after "Heading:"),
/// consecutive duplicate sentences are dropped, and every missing or empty
/// section gets kMissingSectionText. Text before the first heading is
/// discarded unless no heading is present at all, in which case it becomes
/// the first section. Throws Error(EmptyCompletion) on whitespace-only input.
std::vector<SummarySection> post_process(std::string_view raw, const PromptTemplate& tmpl);

struct SummaryOutcome {
  BehaviorSummary summary;
  ChatExchange exchange;
};

/// distill -> build_prompt -> complete -> post_process. Errors from each
/// stage propagate unchanged.
SummaryOutcome summarize(const SandboxReport& report, const DistillationConfig& cfg,
                         const PromptTemplate& tmpl, LlmGateway& gateway);

}  // namespace malsum
