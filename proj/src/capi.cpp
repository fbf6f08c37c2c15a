#include "malsum/malsum.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "malsum/batch.hpp"
#include "malsum/config.hpp"
#include "malsum/error.hpp"
#include "malsum/records.hpp"

struct malsum_config {
  malsum::RunConfig cfg;
};

struct malsum_batch {
  malsum::BatchResult result;
  std::string records_path;
  std::string table_path;
  std::string warnings;
};

namespace {

thread_local std::string last_error;

malsum_status set_error(malsum_status status, const std::string& message) {
  last_error = message;
  return status;
}

// Runs fn, translating exceptions into status codes.
template <typename Fn>
malsum_status guarded(Fn&& fn) {
  try {
    last_error.clear();
    return fn();
  } catch (const malsum::Error& e) {
    return set_error(static_cast<malsum_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(MALSUM_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(MALSUM_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(MALSUM_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  auto* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p == nullptr) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

malsum_status null_argument(const char* name) {
  return set_error(MALSUM_ERR_INVALID_ARGUMENT, std::string(name) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* malsum_version(void) { return malsum::kToolVersion.data(); }

const char* malsum_status_name(malsum_status status) {
  if (status == MALSUM_OK) return "Ok";
  if (status == MALSUM_PARTIAL_FAILURE) return "PartialFailure";
  const auto name = malsum::error_code_name(static_cast<malsum::ErrorCode>(status));
  // error_code_name returns views into string literals.
  return name.data();
}

const char* malsum_last_error(void) { return last_error.c_str(); }

void malsum_free(char* s) { std::free(s); }

malsum_status malsum_config_default(malsum_config** out) {
  if (out == nullptr) return null_argument("out");
  return guarded([&] {
    *out = new malsum_config{malsum::RunConfig::defaults()};
    return MALSUM_OK;
  });
}

malsum_status malsum_config_load(const char* path, malsum_config** out) {
  if (path == nullptr) return null_argument("path");
  if (out == nullptr) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    *out = new malsum_config{malsum::load_run_config(path)};
    return MALSUM_OK;
  });
}

malsum_status malsum_config_parse(const char* json_text, malsum_config** out) {
  if (json_text == nullptr) return null_argument("json_text");
  if (out == nullptr) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
      throw malsum::Error(malsum::ErrorCode::Config, std::string("config: invalid JSON: ") + e.what());
    }
    *out = new malsum_config{malsum::run_config_from_json(j)};
    return MALSUM_OK;
  });
}

void malsum_config_free(malsum_config* cfg) { delete cfg; }

malsum_status malsum_config_set(malsum_config* cfg, const char* key, const char* value) {
  if (cfg == nullptr) return null_argument("cfg");
  if (key == nullptr) return null_argument("key");
  if (value == nullptr) return null_argument("value");
  return guarded([&] {
    const std::string k = key;
    if (k == "output_dir") {
      cfg->cfg.output_dir = value;
    } else if (k == "reports_dir") {
      cfg->cfg.reports_dir = value;
    } else if (k == "ground_truth") {
      cfg->cfg.ground_truth = value;
    } else if (k == "parallelism") {
      char* end = nullptr;
      const long long n = std::strtoll(value, &end, 10);
      if (end == value || *end != '\0' || n < 0) {
        throw malsum::Error(malsum::ErrorCode::Config, "parallelism: expected a non-negative integer");
      }
      cfg->cfg.parallelism = static_cast<std::size_t>(n);
    } else {
      throw malsum::Error(malsum::ErrorCode::InvalidArgument, "unknown config key '" + k + "'");
    }
    return MALSUM_OK;
  });
}

malsum_status malsum_config_set_offline(malsum_config* cfg, int offline) {
  if (cfg == nullptr) return null_argument("cfg");
  cfg->cfg.offline = offline != 0;
  return MALSUM_OK;
}

malsum_status malsum_config_validate(const malsum_config* cfg) {
  if (cfg == nullptr) return null_argument("cfg");
  return guarded([&] {
    cfg->cfg.validate();
    return MALSUM_OK;
  });
}

malsum_status malsum_config_to_json(const malsum_config* cfg, char** out) {
  if (cfg == nullptr) return null_argument("cfg");
  if (out == nullptr) return null_argument("out");
  return guarded([&] {
    *out = dup_string(malsum::to_json(cfg->cfg).dump(2));
    return MALSUM_OK;
  });
}

malsum_status malsum_default_template_json(char** out) {
  if (out == nullptr) return null_argument("out");
  return guarded([&] {
    *out = dup_string(malsum::to_json(malsum::PromptTemplate::default_template()).dump(2));
    return MALSUM_OK;
  });
}

malsum_status malsum_summarize_file(const malsum_config* cfg, const char* report_path,
                                    const char* model_name, int as_json, char** out) {
  if (cfg == nullptr) return null_argument("cfg");
  if (report_path == nullptr) return null_argument("report_path");
  if (out == nullptr) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    std::optional<std::string> model;
    if (model_name != nullptr) model = model_name;
    const auto outcome = malsum::summarize_report_file(cfg->cfg, report_path, model);
    *out = dup_string(as_json ? malsum::to_json(outcome.summary).dump(2)
                              : outcome.summary.render_markdown());
    return MALSUM_OK;
  });
}

malsum_status malsum_evaluate_texts(const malsum_config* cfg, const char* generated,
                                    const char* reference, char** out) {
  if (cfg == nullptr) return null_argument("cfg");
  if (generated == nullptr) return null_argument("generated");
  if (reference == nullptr) return null_argument("reference");
  if (out == nullptr) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    const auto ev = malsum::evaluate_with_config(cfg->cfg, generated, reference);
    nlohmann::json j = malsum::to_json(ev.metrics);
    j["flags"] = ev.flags;
    j["failures"] = ev.failures;
    *out = dup_string(j.dump(2));
    if (!ev.complete()) {
      std::string msg;
      for (const auto& [group, what] : ev.failures) msg += (msg.empty() ? "" : "; ") + group + ": " + what;
      return set_error(MALSUM_PARTIAL_FAILURE, msg);
    }
    return MALSUM_OK;
  });
}

malsum_status malsum_batch_run(const malsum_config* cfg, const char* model_filter, malsum_batch** out) {
  if (cfg == nullptr) return null_argument("cfg");
  if (out == nullptr) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    const auto& c = cfg->cfg;
    c.validate();
    if (c.reports_dir.empty()) throw malsum::Error(malsum::ErrorCode::Config, "reports_dir: not set");
    if (c.ground_truth.empty()) throw malsum::Error(malsum::ErrorCode::Config, "ground_truth: not set");
    const auto truth = malsum::load_ground_truth(c.ground_truth);

    auto batch = std::make_unique<malsum_batch>();
    malsum::BatchOptions options;
    if (model_filter != nullptr) options.model_filter = model_filter;
    options.warn = [&](std::string_view w) {
      batch->warnings += w;
      batch->warnings += '\n';
    };
    batch->result = malsum::run_batch(c, c.reports_dir, truth, options);
    batch->records_path = batch->result.records_path.string();
    batch->table_path = batch->result.table_path.string();
    const bool partial = batch->result.partial_failure();
    if (partial) {
      last_error = std::to_string(batch->result.error_count) + " of " +
                   std::to_string(batch->result.records.size()) + " records failed";
    }
    *out = batch.release();
    return partial ? MALSUM_PARTIAL_FAILURE : MALSUM_OK;
  });
}

size_t malsum_batch_record_count(const malsum_batch* batch) {
  return batch == nullptr ? 0 : batch->result.records.size();
}

size_t malsum_batch_error_count(const malsum_batch* batch) {
  return batch == nullptr ? 0 : batch->result.error_count;
}

size_t malsum_batch_skipped_count(const malsum_batch* batch) {
  return batch == nullptr ? 0 : batch->result.skipped_samples;
}

const char* malsum_batch_records_path(const malsum_batch* batch) {
  return batch == nullptr ? "" : batch->records_path.c_str();
}

const char* malsum_batch_table_path(const malsum_batch* batch) {
  return batch == nullptr ? "" : batch->table_path.c_str();
}

malsum_status malsum_batch_table(const malsum_batch* batch, int markdown, char** out) {
  if (batch == nullptr) return null_argument("batch");
  if (out == nullptr) return null_argument("out");
  *out = nullptr;
  return guarded([&] {
    *out = dup_string(malsum::render_table(
        batch->result.records, markdown ? malsum::TableStyle::Markdown : malsum::TableStyle::Plain));
    return MALSUM_OK;
  });
}

const char* malsum_batch_warnings(const malsum_batch* batch) {
  return batch == nullptr ? "" : batch->warnings.c_str();
}

void malsum_batch_free(malsum_batch* batch) { delete batch; }

}  // extern "C"
