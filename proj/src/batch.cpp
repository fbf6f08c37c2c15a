#include "malsum/batch.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <memory>
#include <thread>

#include "malsum/error.hpp"
#include "malsum/report.hpp"

namespace malsum {
namespace {

namespace fs = std::filesystem;

struct Task {
  std::string sample_id;
  fs::path report_path;
  const std::string* reference = nullptr;
  std::size_t profile = 0;
};

// Holds finished records until every earlier slot is filled, so the file is
// always a sorted prefix of the final output.
class OrderedSink {
 public:
  OrderedSink(RecordWriter& writer, std::size_t n) : writer_(writer), slots_(n) {}

  void put(std::size_t index, EvaluationRecord record) {
    std::lock_guard lock(mutex_);
    slots_[index] = std::move(record);
    while (next_ < slots_.size() && slots_[next_]) writer_.append(*slots_[next_++]);
  }

  std::vector<EvaluationRecord> take() {
    std::vector<EvaluationRecord> out;
    for (auto& s : slots_) out.push_back(std::move(*s));
    return out;
  }

 private:
  RecordWriter& writer_;
  std::mutex mutex_;
  std::vector<std::optional<EvaluationRecord>> slots_;
  std::size_t next_ = 0;
};

RunMeta base_meta(const ModelProfile& profile, const std::string& digest) {
  RunMeta m;
  m.quantization_hint = std::string(quantization_hint_name(profile.quantization_hint.value_or(QuantizationHint::None)));
  m.config_digest = digest;
  m.tool_version = std::string(kToolVersion);
  m.timestamp = utc_timestamp_now();
  return m;
}

std::shared_ptr<LlmGateway> make_gateway(const RunConfig& cfg, const ModelProfile& profile) {
  return std::make_shared<LlmGateway>(profile, make_transport(profile, cfg.offline), cfg.gateway_options());
}

const ModelProfile& pick_profile(const RunConfig& cfg, const std::optional<std::string>& model_name) {
  if (!model_name) return cfg.profiles.front();
  for (const auto& p : cfg.profiles) {
    if (p.model_name == *model_name) return p;
  }
  throw Error(ErrorCode::Config, "model: no profile named '" + *model_name + "'");
}

}  // namespace

BatchResult run_batch(const RunConfig& cfg, const fs::path& reports_dir,
                      const std::vector<GroundTruthEntry>& ground_truth, const BatchOptions& options) {
  cfg.validate();

  std::vector<std::size_t> profile_indices;
  for (std::size_t i = 0; i < cfg.profiles.size(); ++i) {
    if (!options.model_filter || cfg.profiles[i].model_name == *options.model_filter) profile_indices.push_back(i);
  }
  if (profile_indices.empty()) {
    throw Error(ErrorCode::Config, "model: no profile named '" + options.model_filter.value_or("") + "'");
  }

  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create output_dir " + cfg.output_dir.string() + ": " + ec.message());

  BatchResult result;
  result.records_path = cfg.output_dir / "records.jsonl";
  RecordWriter writer(result.records_path);

  std::vector<Task> tasks;
  for (const auto& entry : ground_truth) {
    fs::path report = reports_dir / (entry.sample_id + ".json");
    if (!fs::is_regular_file(report)) {
      ++result.skipped_samples;
      if (options.warn) options.warn("skipping " + entry.sample_id + ": no report at " + report.string());
      continue;
    }
    for (std::size_t p : profile_indices) tasks.push_back({entry.sample_id, report, &entry.reference_text, p});
  }
  std::sort(tasks.begin(), tasks.end(), [&](const Task& a, const Task& b) {
    if (a.sample_id != b.sample_id) return a.sample_id < b.sample_id;
    return cfg.profiles[a.profile].model_name < cfg.profiles[b.profile].model_name;
  });

  std::vector<std::shared_ptr<LlmGateway>> gateways(cfg.profiles.size());
  for (std::size_t p : profile_indices) gateways[p] = make_gateway(cfg, cfg.profiles[p]);
  const auto embed_gateway = make_gateway(cfg, cfg.embedder_profile);
  CachingEmbedder embedder(*embed_gateway);
  const MetricProviders providers{embedder, embedder, cfg.keyphrase_k};
  const std::string digest = cfg.digest();

  // Reports are parsed once per sample even when several profiles use them.
  std::mutex report_mutex;
  std::map<std::string, std::shared_ptr<const SandboxReport>> report_cache;
  auto load_report = [&](const Task& t) {
    {
      std::lock_guard lock(report_mutex);
      if (auto it = report_cache.find(t.sample_id); it != report_cache.end()) return it->second;
    }
    auto parsed = std::make_shared<const SandboxReport>(load_report_file(t.report_path.string()));
    std::lock_guard lock(report_mutex);
    return report_cache.emplace(t.sample_id, std::move(parsed)).first->second;
  };

  auto run_task = [&](const Task& t) {
    const ModelProfile& profile = cfg.profiles[t.profile];
    EvaluationRecord rec;
    rec.sample_id = t.sample_id;
    rec.model_name = profile.model_name;
    rec.run_meta = base_meta(profile, digest);
    try {
      const auto report = load_report(t);
      SummaryOutcome outcome = summarize(*report, cfg.distillation, cfg.prompt, *gateways[t.profile]);
      outcome.summary.sample_id = t.sample_id;
      rec.run_meta.latency_ms = outcome.exchange.latency_ms;
      rec.run_meta.attempts = outcome.exchange.attempts;
      PairEvaluation ev = evaluate_pair(outcome.summary, *t.reference, providers);
      rec.run_meta.flags = ev.flags;
      if (!ev.complete()) {
        std::string msg;
        for (const auto& [group, what] : ev.failures) msg += (msg.empty() ? "" : "; ") + group + ": " + what;
        rec.error = RecordError{"MetricProviderFailed", msg};
      } else {
        rec.summary = std::move(outcome.summary);
        rec.metrics = ev.metrics;
      }
    } catch (const Error& e) {
      rec.error = RecordError{std::string(error_code_name(e.code())), e.what()};
    } catch (const std::exception& e) {
      rec.error = RecordError{std::string(error_code_name(ErrorCode::Internal)), e.what()};
    }
    return rec;
  };

  OrderedSink sink(writer, tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex fatal_mutex;
  std::exception_ptr fatal;
  auto worker = [&] {
    try {
      for (std::size_t i = next++; i < tasks.size(); i = next++) sink.put(i, run_task(tasks[i]));
    } catch (...) {
      std::lock_guard lock(fatal_mutex);
      if (!fatal) fatal = std::current_exception();
      next = tasks.size();
    }
  };
  const std::size_t nthreads = std::min(cfg.parallelism, std::max<std::size_t>(tasks.size(), 1));
  std::vector<std::jthread> pool;
  for (std::size_t i = 1; i < nthreads; ++i) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (fatal) std::rethrow_exception(fatal);

  result.records = sink.take();
  for (const auto& r : result.records) {
    if (!r.ok()) ++result.error_count;
  }
  if (std::any_of(result.records.begin(), result.records.end(), [](const auto& r) { return r.ok(); })) {
    result.table_path = cfg.output_dir / "table.md";
    std::ofstream table(result.table_path, std::ios::trunc);
    table << render_table(result.records, TableStyle::Markdown);
    if (!table) throw Error(ErrorCode::Io, "cannot write " + result.table_path.string());
  }
  return result;
}

SummaryOutcome summarize_report_file(const RunConfig& cfg, const fs::path& report,
                                     const std::optional<std::string>& model_name) {
  cfg.validate();
  const ModelProfile& profile = pick_profile(cfg, model_name);
  const SandboxReport parsed = load_report_file(report.string());
  auto gateway = make_gateway(cfg, profile);
  return summarize(parsed, cfg.distillation, cfg.prompt, *gateway);
}

PairEvaluation evaluate_with_config(const RunConfig& cfg, const std::string& generated,
                                    const std::string& reference) {
  cfg.validate();
  auto gateway = make_gateway(cfg, cfg.embedder_profile);
  CachingEmbedder embedder(*gateway);
  return evaluate_texts(generated, reference, MetricProviders{embedder, embedder, cfg.keyphrase_k});
}

}  // namespace malsum
