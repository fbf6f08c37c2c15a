#include "malsum/summarizer.hpp"

#include <algorithm>
#include <optional>
#include <set>

#include "malsum/error.hpp"
#include "malsum/text.hpp"

namespace malsum {
namespace {

using nlohmann::json;

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Strips "- ", "* ", "+ ", "• ", "1. ", "2) " prefixes, repeatedly.
std::string_view strip_list_markers(std::string_view s) {
  while (true) {
    s = text::trim(s);
    if (s.size() >= 2 && (s[0] == '-' || s[0] == '*' || s[0] == '+') && s[1] == ' ') {
      s.remove_prefix(2);
      continue;
    }
    if (s.starts_with("• ")) {
      s.remove_prefix(std::string_view("• ").size());
      continue;
    }
    std::size_t d = 0;
    while (d < s.size() && is_digit(s[d])) ++d;
    if (d > 0 && d + 1 < s.size() && (s[d] == '.' || s[d] == ')') && s[d + 1] == ' ') {
      s.remove_prefix(d + 2);
      continue;
    }
    return s;
  }
}

std::string_view skip_emphasis(std::string_view s) {
  while (!s.empty() && (s.front() == '*' || s.front() == '_')) s.remove_prefix(1);
  return s;
}

struct HeadingMatch {
  std::size_t index;
  std::string inline_text;
};

std::optional<HeadingMatch> match_heading(std::string_view line,
                                          const std::vector<std::string>& headings,
                                          const std::vector<std::size_t>& longest_first) {
  std::string_view s = text::trim(line);
  while (!s.empty() && s.front() == '#') s.remove_prefix(1);
  s = strip_list_markers(s);
  s = skip_emphasis(s);
  const std::string lowered = text::to_lower_ascii(s);

  for (std::size_t idx : longest_first) {
    const std::string h = text::to_lower_ascii(headings[idx]);
    if (!std::string_view(lowered).starts_with(h)) continue;
    std::string_view rest = s.substr(h.size());
    rest = skip_emphasis(rest);
    bool colon = false;
    if (!rest.empty() && rest.front() == ':') {
      colon = true;
      rest.remove_prefix(1);
      rest = skip_emphasis(rest);
    }
    rest = text::trim(rest);
    if (rest.empty()) return HeadingMatch{idx, {}};
    if (colon) return HeadingMatch{idx, std::string(rest)};
  }
  return std::nullopt;
}

std::string normalize_section(const std::vector<std::string>& lines) {
  std::string joined;
  for (const auto& l : lines) {
    std::string_view content = strip_list_markers(l);
    if (content.empty()) continue;
    joined += content;
    joined += ' ';
  }
  const std::string collapsed = text::collapse_whitespace(joined);
  std::string out;
  std::string_view previous;
  for (std::string_view sentence : text::split_sentences(collapsed)) {
    if (sentence == previous) continue;
    if (!out.empty()) out += ' ';
    out += sentence;
    previous = sentence;
  }
  return out;
}

}  // namespace

PromptTemplate PromptTemplate::default_template() {
  PromptTemplate t;
  t.system_text =
      "You are an experienced malware analyst. You receive filtered evidence from a dynamic "
      "analysis sandbox run of one Windows executable. Connect related events into an account "
      "of what the program does, in what order, and why it matters. Write for incident "
      "responders and for readers without a reverse-engineering background. Do not invent "
      "behavior that the evidence does not support.";
  t.user_scaffold =
      "Sandbox evidence for the sample:\n\n"
      "{{evidence}}\n\n"
      "Write a behavior summary in plain prose with exactly these four sections, each "
      "introduced by its heading on a line of its own: Overview, Observed Behaviors, Impact, "
      "Recommended Actions.";
  t.required_sections = {"Overview", "Observed Behaviors", "Impact", "Recommended Actions"};
  return t;
}

void PromptTemplate::validate() const {
  if (text::trim(system_text).empty()) throw Error(ErrorCode::Config, "template.system_text: must not be empty");
  if (count_occurrences(user_scaffold, kEvidencePlaceholder) != 1) {
    throw Error(ErrorCode::Config, "template.user_scaffold: must contain exactly one " +
                                       std::string(kEvidencePlaceholder) + " placeholder");
  }
  if (required_sections.empty()) {
    throw Error(ErrorCode::Config, "template.required_sections: must not be empty");
  }
  std::set<std::string> seen;
  for (const auto& h : required_sections) {
    if (text::trim(h).empty() || h != text::trim(h) || h.find('\n') != std::string::npos) {
      throw Error(ErrorCode::Config, "template.required_sections: invalid heading '" + h + "'");
    }
    if (!seen.insert(text::to_lower_ascii(h)).second) {
      throw Error(ErrorCode::Config, "template.required_sections: duplicate heading '" + h + "'");
    }
  }
}

json to_json(const PromptTemplate& t) {
  return json{{"system_text", t.system_text},
              {"user_scaffold", t.user_scaffold},
              {"required_sections", t.required_sections}};
}

PromptTemplate prompt_template_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::Config, "template: expected an object");
  PromptTemplate t = PromptTemplate::default_template();
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "system_text") t.system_text = value.get<std::string>();
      else if (key == "user_scaffold") t.user_scaffold = value.get<std::string>();
      else if (key == "required_sections") t.required_sections = value.get<std::vector<std::string>>();
      else throw Error(ErrorCode::Config, "template: unknown key '" + key + "'");
    } catch (const json::exception&) {
      throw Error(ErrorCode::Config, "template." + key + ": wrong type");
    }
  }
  return t;
}

std::string BehaviorSummary::body_text() const {
  std::string out;
  for (const auto& s : sections) {
    if (!out.empty()) out += "\n\n";
    out += s.text;
  }
  return out;
}

std::string BehaviorSummary::render_markdown() const {
  std::string out;
  for (const auto& s : sections) {
    out += "## " + s.heading + "\n\n" + s.text + "\n\n";
  }
  return out;
}

json to_json(const BehaviorSummary& s) {
  json sections = json::array();
  for (const auto& sec : s.sections) sections.push_back({{"heading", sec.heading}, {"text", sec.text}});
  return json{{"sample_id", s.sample_id},
              {"model_name", s.model_name},
              {"sections", std::move(sections)},
              {"raw_completion", s.raw_completion},
              {"word_count", s.word_count}};
}

BehaviorSummary behavior_summary_from_json(const json& j) {
  BehaviorSummary s;
  s.sample_id = j.at("sample_id").get<std::string>();
  s.model_name = j.at("model_name").get<std::string>();
  for (const json& sec : j.at("sections")) {
    s.sections.push_back({sec.at("heading").get<std::string>(), sec.at("text").get<std::string>()});
  }
  s.raw_completion = j.at("raw_completion").get<std::string>();
  s.word_count = j.at("word_count").get<std::size_t>();
  return s;
}

Prompt build_prompt(const PromptTemplate& tmpl, const DistilledReport& distilled) {
  const std::string evidence =
      distilled.sections.empty() ? std::string(kNoEvidenceMarker) : distilled.render();
  std::string user = tmpl.user_scaffold;
  const auto pos = user.find(kEvidencePlaceholder);
  if (pos != std::string::npos) user.replace(pos, kEvidencePlaceholder.size(), evidence);
  return {tmpl.system_text, std::move(user)};
}

std::vector<SummarySection> post_process(std::string_view raw, const PromptTemplate& tmpl) {
  if (text::trim(raw).empty()) throw Error(ErrorCode::EmptyCompletion, "model returned an empty completion");

  std::string normalized;
  normalized.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == '\r') {
      normalized.push_back('\n');
      if (i + 1 < raw.size() && raw[i + 1] == '\n') ++i;
    } else {
      normalized.push_back(raw[i]);
    }
  }

  const auto& headings = tmpl.required_sections;
  std::vector<std::size_t> longest_first(headings.size());
  for (std::size_t i = 0; i < headings.size(); ++i) longest_first[i] = i;
  std::stable_sort(longest_first.begin(), longest_first.end(),
                   [&](std::size_t a, std::size_t b) { return headings[a].size() > headings[b].size(); });

  std::vector<std::vector<std::string>> buckets(headings.size());
  std::vector<std::string> preamble;
  std::optional<std::size_t> current;
  bool any_heading = false;

  std::size_t pos = 0;
  while (pos <= normalized.size()) {
    auto end = normalized.find('\n', pos);
    if (end == std::string::npos) end = normalized.size();
    std::string line = normalized.substr(pos, end - pos);
    pos = end + 1;
    if (auto m = match_heading(line, headings, longest_first)) {
      current = m->index;
      any_heading = true;
      if (!m->inline_text.empty()) buckets[m->index].push_back(std::move(m->inline_text));
    } else if (current) {
      buckets[*current].push_back(std::move(line));
    } else {
      preamble.push_back(std::move(line));
    }
  }
  if (!any_heading && !headings.empty()) buckets[0] = std::move(preamble);

  std::vector<SummarySection> out;
  out.reserve(headings.size());
  for (std::size_t i = 0; i < headings.size(); ++i) {
    std::string body = normalize_section(buckets[i]);
    if (body.empty()) body = std::string(kMissingSectionText);
    out.push_back({headings[i], std::move(body)});
  }
  return out;
}

SummaryOutcome summarize(const SandboxReport& report, const DistillationConfig& cfg,
                         const PromptTemplate& tmpl, LlmGateway& gateway) {
  tmpl.validate();
  const DistilledReport distilled = distill(report, cfg);
  const Prompt prompt = build_prompt(tmpl, distilled);
  ChatExchange exchange = gateway.complete(prompt.system, prompt.user);

  BehaviorSummary summary;
  summary.sample_id = report.sample_id;
  summary.model_name = gateway.profile().model_name;
  summary.sections = post_process(exchange.completion_text, tmpl);
  summary.raw_completion = exchange.completion_text;
  std::string joined;
  for (const auto& s : summary.sections) {
    joined += s.text;
    joined += ' ';
  }
  summary.word_count = text::whitespace_token_count(joined);
  return {std::move(summary), std::move(exchange)};
}

}  // namespace malsum
