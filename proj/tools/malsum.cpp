// malsum command-line front end. Talks to the library only through malsum.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "malsum/malsum.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitFatal = 2;

struct ConfigDeleter {
  void operator()(malsum_config* c) const { malsum_config_free(c); }
};
struct BatchDeleter {
  void operator()(malsum_batch* b) const { malsum_batch_free(b); }
};
struct StringDeleter {
  void operator()(char* s) const { malsum_free(s); }
};
using ConfigPtr = std::unique_ptr<malsum_config, ConfigDeleter>;
using BatchPtr = std::unique_ptr<malsum_batch, BatchDeleter>;
using OwnedString = std::unique_ptr<char, StringDeleter>;

struct Options {
  std::string config;
  std::string reports_dir;
  std::string ground_truth;
  std::string output_dir;
  std::optional<long long> parallelism;
  std::string model;
  bool offline = false;
  std::string report;
  std::string generated;
  std::string reference;
  bool json = false;
};

int fail(malsum_status st) {
  std::cerr << "malsum: " << malsum_status_name(st) << ": " << malsum_last_error() << '\n';
  return kExitFatal;
}

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Loads --config (or the built-in defaults) and applies command-line overrides.
malsum_status open_config(const Options& o, ConfigPtr& out) {
  malsum_config* raw = nullptr;
  malsum_status st = o.config.empty() ? malsum_config_default(&raw) : malsum_config_load(o.config.c_str(), &raw);
  if (st != MALSUM_OK) return st;
  out.reset(raw);
  const std::pair<const char*, const std::string*> overrides[] = {
      {"reports_dir", &o.reports_dir}, {"ground_truth", &o.ground_truth}, {"output_dir", &o.output_dir}};
  for (const auto& [key, value] : overrides) {
    if (value->empty()) continue;
    if ((st = malsum_config_set(out.get(), key, value->c_str())) != MALSUM_OK) return st;
  }
  if (o.parallelism) {
    const std::string n = std::to_string(*o.parallelism);
    if ((st = malsum_config_set(out.get(), "parallelism", n.c_str())) != MALSUM_OK) return st;
  }
  if (o.offline) malsum_config_set_offline(out.get(), 1);
  return MALSUM_OK;
}

int cmd_summarize(const Options& o) {
  ConfigPtr cfg;
  if (auto st = open_config(o, cfg); st != MALSUM_OK) return fail(st);
  char* text = nullptr;
  const auto st = malsum_summarize_file(cfg.get(), o.report.c_str(), o.model.empty() ? nullptr : o.model.c_str(),
                                        o.json ? 1 : 0, &text);
  if (st != MALSUM_OK) return fail(st);
  OwnedString owned(text);
  std::cout << text;
  if (o.json) std::cout << '\n';
  return kExitOk;
}

int cmd_evaluate(const Options& o) {
  const auto generated = read_file(o.generated);
  if (!generated) {
    std::cerr << "malsum: cannot read " << o.generated << '\n';
    return kExitFatal;
  }
  const auto reference = read_file(o.reference);
  if (!reference) {
    std::cerr << "malsum: cannot read " << o.reference << '\n';
    return kExitFatal;
  }
  ConfigPtr cfg;
  if (auto st = open_config(o, cfg); st != MALSUM_OK) return fail(st);
  char* text = nullptr;
  const auto st = malsum_evaluate_texts(cfg.get(), generated->c_str(), reference->c_str(), &text);
  if (st != MALSUM_OK && st != MALSUM_PARTIAL_FAILURE) return fail(st);
  OwnedString owned(text);
  std::cout << text << '\n';
  if (st == MALSUM_PARTIAL_FAILURE) {
    std::cerr << "malsum: some metrics failed: " << malsum_last_error() << '\n';
    return kExitPartial;
  }
  return kExitOk;
}

int cmd_batch(const Options& o) {
  ConfigPtr cfg;
  if (auto st = open_config(o, cfg); st != MALSUM_OK) return fail(st);
  malsum_batch* raw = nullptr;
  const auto st = malsum_batch_run(cfg.get(), o.model.empty() ? nullptr : o.model.c_str(), &raw);
  if (st != MALSUM_OK && st != MALSUM_PARTIAL_FAILURE) return fail(st);
  BatchPtr batch(raw);

  std::cerr << malsum_batch_warnings(batch.get());
  std::cerr << "malsum: " << malsum_batch_record_count(batch.get()) << " records, "
            << malsum_batch_error_count(batch.get()) << " errors, " << malsum_batch_skipped_count(batch.get())
            << " samples skipped\n";
  std::cerr << "malsum: records: " << malsum_batch_records_path(batch.get()) << '\n';
  if (*malsum_batch_table_path(batch.get()) != '\0') {
    std::cerr << "malsum: table: " << malsum_batch_table_path(batch.get()) << '\n';
    char* table = nullptr;
    if (malsum_batch_table(batch.get(), 1, &table) == MALSUM_OK) {
      OwnedString owned(table);
      std::cout << table;
    }
  }
  return st == MALSUM_PARTIAL_FAILURE ? kExitPartial : kExitOk;
}

int cmd_print_template() {
  char* text = nullptr;
  if (auto st = malsum_default_template_json(&text); st != MALSUM_OK) return fail(st);
  OwnedString owned(text);
  std::cout << text << '\n';
  return kExitOk;
}

int cmd_validate_config(const Options& o) {
  ConfigPtr cfg;
  if (auto st = open_config(o, cfg); st != MALSUM_OK) return fail(st);
  if (auto st = malsum_config_validate(cfg.get()); st != MALSUM_OK) return fail(st);
  if (o.json) {
    char* text = nullptr;
    if (auto st = malsum_config_to_json(cfg.get(), &text); st != MALSUM_OK) return fail(st);
    OwnedString owned(text);
    std::cout << text << '\n';
  } else {
    std::cout << "config ok\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Summarize sandbox reports with an LLM and score the summaries.", "malsum"};
  app.set_version_flag("--version", std::string(malsum_version()));
  app.require_subcommand(1);

  Options o;
  auto add_config = [&](CLI::App* sub) { sub->add_option("--config", o.config, "Run configuration (JSON)"); };
  auto add_offline = [&](CLI::App* sub) {
    sub->add_flag("--offline", o.offline, "Route every endpoint to the built-in mock");
  };

  auto* summarize = app.add_subcommand("summarize", "Summarize one report and print it");
  add_config(summarize);
  summarize->add_option("--report", o.report, "Sandbox report JSON")->required();
  summarize->add_option("--model", o.model, "Profile name (default: first profile)");
  summarize->add_flag("--json", o.json, "Print the summary as JSON");
  add_offline(summarize);

  auto* evaluate = app.add_subcommand("evaluate", "Score a generated summary against a reference");
  add_config(evaluate);
  evaluate->add_option("--generated", o.generated, "Generated summary text file")->required();
  evaluate->add_option("--reference", o.reference, "Reference summary text file")->required();
  add_offline(evaluate);

  auto* batch = app.add_subcommand("batch", "Summarize and score every ground-truth sample");
  add_config(batch);
  batch->add_option("--reports-dir", o.reports_dir, "Directory of {sample_id}.json reports");
  batch->add_option("--ground-truth", o.ground_truth, "Ground truth JSON Lines file");
  batch->add_option("--output-dir", o.output_dir, "Where records.jsonl and table.md go");
  batch->add_option("--parallelism", o.parallelism, "Worker count");
  batch->add_option("--model", o.model, "Only run this profile");
  add_offline(batch);

  app.add_subcommand("print-template", "Print the default prompt template as JSON");

  auto* validate = app.add_subcommand("validate-config", "Parse and check a run configuration");
  add_config(validate);
  validate->add_option("--parallelism", o.parallelism, "Override parallelism before checking");
  validate->add_flag("--json", o.json, "Print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "malsum: " << e.what() << "\n\n" << app.help();
    return kExitFatal;
  }

  if (summarize->parsed()) return cmd_summarize(o);
  if (evaluate->parsed()) return cmd_evaluate(o);
  if (batch->parsed()) return cmd_batch(o);
  if (validate->parsed()) return cmd_validate_config(o);
  return cmd_print_template();
}
