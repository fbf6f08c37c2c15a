#include "malsum/records.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <map>
#include <sstream>

#include "malsum/error.hpp"
#include "malsum/text.hpp"

namespace malsum {
namespace {

using nlohmann::json;

std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

std::string format4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

json to_json(const RunMeta& m) {
  return json{{"latency_ms", m.latency_ms},
              {"attempts", m.attempts},
              {"quantization_hint", m.quantization_hint},
              {"config_digest", m.config_digest},
              {"tool_version", m.tool_version},
              {"timestamp", m.timestamp},
              {"flags", m.flags}};
}

RunMeta run_meta_from_json(const json& j) {
  RunMeta m;
  m.latency_ms = j.at("latency_ms").get<std::int64_t>();
  m.attempts = j.at("attempts").get<int>();
  m.quantization_hint = j.at("quantization_hint").get<std::string>();
  m.config_digest = j.at("config_digest").get<std::string>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.timestamp = j.at("timestamp").get<std::string>();
  m.flags = j.value("flags", std::vector<std::string>{});
  return m;
}

}  // namespace

std::vector<GroundTruthEntry> parse_ground_truth(std::istream& in) {
  std::vector<GroundTruthEntry> out;
  std::map<std::string, std::size_t> first_seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedLine, line_prefix(line_no) + "invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::MalformedLine, line_prefix(line_no) + "expected an object");
    const auto id = j.find("sample_id");
    const auto ref = j.find("reference_text");
    if (id == j.end() || !id->is_string() || id->get<std::string>().empty()) {
      throw Error(ErrorCode::MalformedLine, line_prefix(line_no) + "missing or empty sample_id");
    }
    if (ref == j.end() || !ref->is_string() || text::trim(ref->get<std::string>()).empty()) {
      throw Error(ErrorCode::MalformedLine, line_prefix(line_no) + "missing or empty reference_text");
    }
    GroundTruthEntry e{id->get<std::string>(), ref->get<std::string>(), std::nullopt};
    if (auto notes = j.find("source_notes"); notes != j.end() && !notes->is_null()) {
      if (!notes->is_string()) {
        throw Error(ErrorCode::MalformedLine, line_prefix(line_no) + "source_notes must be a string");
      }
      e.source_notes = notes->get<std::string>();
    }
    if (auto [it, fresh] = first_seen.emplace(e.sample_id, line_no); !fresh) {
      throw Error(ErrorCode::DuplicateSample, line_prefix(line_no) + "duplicate sample_id '" + e.sample_id +
                                                  "' (first on line " + std::to_string(it->second) + ")");
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<GroundTruthEntry> load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open ground truth file " + path.string());
  try {
    return parse_ground_truth(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void EvaluationRecord::check_invariants() const {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::Internal, "record (" + sample_id + ", " + model_name + "): " + what);
  };
  if (sample_id.empty() || model_name.empty()) fail("sample_id and model_name are required");
  if (ok()) {
    if (!summary || !metrics) fail("successful record lacks summary or metrics");
    if (summary->sample_id != sample_id || summary->model_name != model_name) {
      fail("summary belongs to a different pair");
    }
    if (auto bad = metrics->range_violations(); !bad.empty()) fail("metric out of range: " + bad.front());
  } else {
    if (summary || metrics) fail("error record carries a summary or metrics");
    if (error->code.empty()) fail("error record has no code");
  }
}

json to_json(const EvaluationRecord& r) {
  json j{{"sample_id", r.sample_id},
         {"model_name", r.model_name},
         {"status", r.ok() ? "ok" : "error"},
         {"run_meta", to_json(r.run_meta)}};
  if (r.summary) j["summary"] = to_json(*r.summary);
  if (r.metrics) j["metrics"] = to_json(*r.metrics);
  if (r.error) j["error"] = json{{"code", r.error->code}, {"message", r.error->message}};
  return j;
}

EvaluationRecord evaluation_record_from_json(const json& j) {
  try {
    EvaluationRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.model_name = j.at("model_name").get<std::string>();
    r.run_meta = run_meta_from_json(j.at("run_meta"));
    if (j.contains("summary")) r.summary = behavior_summary_from_json(j.at("summary"));
    if (j.contains("metrics")) r.metrics = metric_vector_from_json(j.at("metrics"));
    if (j.contains("error")) {
      const json& e = j.at("error");
      r.error = RecordError{e.at("code").get<std::string>(), e.at("message").get<std::string>()};
    }
    const std::string status = j.at("status").get<std::string>();
    if ((status == "ok") != r.ok() || (status != "ok" && status != "error")) {
      throw Error(ErrorCode::MalformedLine, "status does not match record contents");
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedLine, std::string("malformed record: ") + e.what());
  }
}

std::vector<EvaluationRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open records file " + path.string());
  std::vector<EvaluationRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(evaluation_record_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::MalformedLine, line_prefix(line_no) + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), line_prefix(line_no) + e.what());
    }
  }
  return out;
}

RecordWriter::RecordWriter(const std::filesystem::path& path)
    : out_(path, std::ios::out | std::ios::trunc | std::ios::binary), path_(path) {
  if (!out_) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
}

void RecordWriter::append(const EvaluationRecord& record) {
  const std::string line = to_json(record).dump() + "\n";
  std::lock_guard lock(mutex_);
  out_ << line;
  out_.flush();
  if (!out_) throw Error(ErrorCode::Io, "write to " + path_.string() + " failed");
}

std::string render_table(const std::vector<EvaluationRecord>& records, TableStyle style) {
  const std::size_t ncols = metric_field_names().size();
  std::map<std::string, std::pair<std::vector<double>, std::size_t>> sums;
  for (const auto& r : records) {
    if (!r.ok() || !r.metrics) continue;
    auto& [acc, n] = sums[r.model_name];
    acc.resize(ncols, 0.0);
    for (std::size_t c = 0; c < ncols; ++c) acc[c] += metric_value(*r.metrics, c);
    ++n;
  }
  if (sums.empty()) throw Error(ErrorCode::NoRecords, "no successful records to tabulate");

  std::vector<std::string> models;
  std::vector<std::vector<std::string>> cells;
  std::vector<std::vector<double>> rounded;
  for (const auto& [model, acc] : sums) {
    models.push_back(model);
    std::vector<std::string> row;
    std::vector<double> vals;
    for (std::size_t c = 0; c < ncols; ++c) {
      row.push_back(format4(acc.first[c] / static_cast<double>(acc.second)));
      vals.push_back(std::stod(row.back()));
    }
    cells.push_back(std::move(row));
    rounded.push_back(std::move(vals));
  }

  const auto& cols = metric_column_names();
  std::ostringstream out;
  if (style == TableStyle::Markdown) {
    for (std::size_t c = 0; c < ncols; ++c) {
      double best = rounded[0][c];
      for (const auto& row : rounded) best = std::max(best, row[c]);
      for (std::size_t r = 0; r < models.size(); ++r) {
        if (rounded[r][c] == best) cells[r][c] = "**" + cells[r][c] + "**";
      }
    }
    out << "| Model |";
    for (const auto& c : cols) out << ' ' << c << " |";
    out << "\n|---|";
    for (std::size_t c = 0; c < ncols; ++c) out << "---:|";
    out << '\n';
    for (std::size_t r = 0; r < models.size(); ++r) {
      out << "| " << models[r] << " |";
      for (const auto& cell : cells[r]) out << ' ' << cell << " |";
      out << '\n';
    }
    return out.str();
  }

  std::size_t model_width = 5;
  for (const auto& m : models) model_width = std::max(model_width, m.size());
  auto pad = [](const std::string& s, std::size_t w, bool right) {
    const std::string fill(w > s.size() ? w - s.size() : 0, ' ');
    return right ? fill + s : s + fill;
  };
  out << pad("Model", model_width, false);
  for (const auto& c : cols) out << "  " << pad(c, 7, true);
  out << '\n';
  for (std::size_t r = 0; r < models.size(); ++r) {
    out << pad(models[r], model_width, false);
    for (const auto& cell : cells[r]) out << "  " << pad(cell, 7, true);
    out << '\n';
  }
  return out.str();
}

std::string utc_timestamp_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace malsum
