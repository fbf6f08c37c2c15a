#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "malsum/config.hpp"
#include "malsum/records.hpp"

namespace malsum {

struct BatchOptions {
  std::optional<std::string> model_filter;
  std::function<void(std::string_view)> warn;  // skipped samples etc.
};

struct BatchResult {
  std::vector<EvaluationRecord> records;  // sorted by (sample_id, model_name)
  std::size_t error_count = 0;
  std::size_t skipped_samples = 0;
  std::filesystem::path records_path;
  std::filesystem::path table_path;  // empty when no record succeeded

  bool partial_failure() const { return error_count > 0; }
};

/// Summarizes and evaluates every (sample, profile) pair on a pool of
/// cfg.parallelism workers. Records reach {output_dir}/records.jsonl
/// incrementally but always in sorted order; a failing pair becomes an error
/// record and never stops the batch. Samples whose "{sample_id}.json" is
/// missing are skipped with a warning. Writes {output_dir}/table.md.
///
/// Throws only for an invalid config, an unwritable output_dir or an
/// unreadable ground-truth file.
BatchResult run_batch(const RunConfig& cfg, const std::filesystem::path& reports_dir,
                      const std::vector<GroundTruthEntry>& ground_truth,
                      const BatchOptions& options = {});

/// Summary of one report file with the named (or first) profile.
SummaryOutcome summarize_report_file(const RunConfig& cfg, const std::filesystem::path& report,
                                     const std::optional<std::string>& model_name);

/// Metrics for two texts using the config's embedder profile.
PairEvaluation evaluate_with_config(const RunConfig& cfg, const std::string& generated,
                                    const std::string& reference);

}  // namespace malsum
