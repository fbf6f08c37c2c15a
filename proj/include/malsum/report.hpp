#pragma once

// Domain model of a Cuckoo Sandbox 2.x analysis report.
//
// Only the sections that carry behavioral evidence are modelled as typed
// fields. Everything else (task info, target hashes, unknown top-level keys)
// is kept as flattened provenance strings so that nothing is silently lost,
// while the distiller can ignore it wholesale.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace malsum {

struct TriggeredSignature {
  std::string name;
  std::string description;
  int severity = 0;
  std::vector<std::string> marks;

  bool operator==(const TriggeredSignature&) const = default;
};

struct ApiCall {
  std::string api_name;
  std::string category;
  std::map<std::string, std::string> arguments;
  bool success = true;

  bool operator==(const ApiCall&) const = default;
};

struct ProcessActivity {
  std::int64_t pid = 0;
  std::string process_name;
  std::optional<std::int64_t> parent_pid;
  std::vector<ApiCall> api_calls;
  std::optional<std::string> command_line;

  bool operator==(const ProcessActivity&) const = default;
};

struct HttpRequest {
  std::string method;
  std::string host;
  std::string path;

  bool operator==(const HttpRequest&) const = default;
};

struct Endpoint {
  std::string address;
  int port = 0;  // 0 when the report only names the host

  bool operator==(const Endpoint&) const = default;
};

struct NetworkActivity {
  std::vector<std::string> dns_queries;
  std::vector<HttpRequest> http_requests;
  std::vector<Endpoint> contacted_ips;

  bool empty() const {
    return dns_queries.empty() && http_requests.empty() && contacted_ips.empty();
  }
  bool operator==(const NetworkActivity&) const = default;
};

struct DroppedFile {
  std::string path;
  std::string type;
  // size and digests; never rendered
  std::map<std::string, std::string> provenance;

  bool operator==(const DroppedFile&) const = default;
};

struct SandboxReport {
  std::string sample_id;
  std::map<std::string, std::string> target_meta;
  std::vector<TriggeredSignature> signatures;
  std::vector<ProcessActivity> processes;
  NetworkActivity network;
  std::vector<DroppedFile> dropped_files;
  std::map<std::string, std::string> analysis_meta;

  const ProcessActivity* find_process(std::int64_t pid) const;

  bool operator==(const SandboxReport&) const = default;
};

/// Parses a Cuckoo JSON report.
///
/// Missing optional sections yield empty lists and wrongly-typed entries are
/// skipped. Throws Error(MalformedReport) when the input is not JSON, is not
/// an object, or has none of the recognized sections (info, target,
/// signatures, behavior, network, dropped).
///
/// The sample id is taken from a top-level "sample_id" key, then
/// target.file.sha256, and otherwise is the SHA-256 of the raw bytes.
SandboxReport parse_report(std::string_view raw);

/// Serializes to the normalized Cuckoo-shaped layout accepted by
/// parse_report; parse_report(to_normalized_json(r)) == r.
nlohmann::json to_normalized_json(const SandboxReport& report);

SandboxReport load_report_file(const std::string& path);

}  // namespace malsum
