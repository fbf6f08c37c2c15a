#pragma once

// Ground-truth ingestion, evaluation records and the results table.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "malsum/metrics.hpp"
#include "malsum/summarizer.hpp"

namespace malsum {

struct GroundTruthEntry {
  std::string sample_id;
  std::string reference_text;
  std::optional<std::string> source_notes;

  bool operator==(const GroundTruthEntry&) const = default;
};

/// JSON Lines, one {"sample_id", "reference_text"[, "source_notes"]} per
/// line; blank lines are skipped. Throws Error(MalformedLine) or
/// Error(DuplicateSample), both naming line numbers, and Error(Io).
std::vector<GroundTruthEntry> load_ground_truth(const std::filesystem::path& path);
std::vector<GroundTruthEntry> parse_ground_truth(std::istream& in);

struct RunMeta {
  std::int64_t latency_ms = 0;
  int attempts = 0;
  std::string quantization_hint = "none";
  std::string config_digest;
  std::string tool_version;
  std::string timestamp;  // ISO-8601 UTC
  std::vector<std::string> flags;

  bool operator==(const RunMeta&) const = default;
};

struct RecordError {
  std::string code;
  std::string message;

  bool operator==(const RecordError&) const = default;
};

/// One (sample, model) outcome. Successful records carry a summary and
/// metrics; error records carry only the error.
struct EvaluationRecord {
  std::string sample_id;
  std::string model_name;
  std::optional<BehaviorSummary> summary;
  std::optional<MetricVector> metrics;
  RunMeta run_meta;
  std::optional<RecordError> error;

  bool ok() const { return !error.has_value(); }
  /// Throws Error(Internal) naming the broken invariant.
  void check_invariants() const;

  bool operator==(const EvaluationRecord&) const = default;
};

nlohmann::json to_json(const EvaluationRecord& r);
EvaluationRecord evaluation_record_from_json(const nlohmann::json& j);
std::vector<EvaluationRecord> load_records(const std::filesystem::path& path);

/// Single-writer JSON Lines sink; each append is flushed before returning.
class RecordWriter {
 public:
  /// Truncates the file. Throws Error(Io).
  explicit RecordWriter(const std::filesystem::path& path);
  void append(const EvaluationRecord& record);

 private:
  std::mutex mutex_;
  std::ofstream out_;
  std::filesystem::path path_;
};

enum class TableStyle { Markdown, Plain };

/// One row per model (sorted by name) holding the mean of each metric over
/// that model's successful records, 4 decimals. Markdown style bolds each
/// column's maximum. Throws Error(NoRecords) without successful records.
std::string render_table(const std::vector<EvaluationRecord>& records,
                         TableStyle style = TableStyle::Markdown);

std::string utc_timestamp_now();

}  // namespace malsum
