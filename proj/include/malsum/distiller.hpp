#pragma once

// Pre-processing that turns a parsed report into the evidence block handed
// to the model: provenance noise is dropped and the rest is cut to fit a
// token budget.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "malsum/report.hpp"

namespace malsum {

inline constexpr std::string_view kSectionSignatures = "signatures";
inline constexpr std::string_view kSectionProcesses = "processes";
inline constexpr std::string_view kSectionNetwork = "network";
inline constexpr std::string_view kSectionDroppedFiles = "dropped_files";

const std::vector<std::string>& known_sections();

struct DistillationConfig {
  // Case-insensitive globs ('*' matches any run, including dots) over the
  // dotted path of a rendered field, e.g. "processes.calls.arguments.FileSize".
  std::vector<std::string> excluded_fields = default_excluded_fields();
  std::size_t token_budget = 3000;
  std::vector<std::string> section_priority = known_sections();
  std::size_t max_calls_per_process = 40;

  static std::vector<std::string> default_excluded_fields();

  /// Throws Error(Config) naming the offending field.
  void validate() const;

  bool operator==(const DistillationConfig&) const = default;
};

struct DistilledSection {
  std::string name;
  std::string text;

  bool operator==(const DistilledSection&) const = default;
};

struct DistilledReport {
  std::string sample_id;
  std::vector<DistilledSection> sections;
  std::size_t estimated_tokens = 0;

  /// Sections joined by a blank line; estimated_tokens is measured on this.
  std::string render() const;

  bool operator==(const DistilledReport&) const = default;
};

/// ceil(bytes / 4).
std::size_t estimate_tokens(std::string_view text) noexcept;

/// True when `path` matches any of the glob patterns.
bool field_excluded(std::string_view path, const std::vector<std::string>& patterns);

/// Replaces hash-shaped hex runs (32, 40, 64 or 128 digits) and
/// date-time stamps in free text with placeholders.
std::string scrub_value(std::string_view value);

/// Renders the report in cfg.section_priority order and truncates it to
/// cfg.token_budget. Calls past max_calls_per_process are replaced by
/// "… N more calls omitted"; budget truncation keeps the longest prefix of
/// lines that fits and closes it with a "… N more lines omitted" marker.
///
/// Throws Error(BudgetTooSmall) if the budget cannot hold the first section
/// header and its marker, Error(Config) on an invalid config.
DistilledReport distill(const SandboxReport& report, const DistillationConfig& cfg);

}  // namespace malsum
