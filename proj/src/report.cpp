#include "malsum/report.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "malsum/digest.hpp"
#include "malsum/error.hpp"

namespace malsum {
namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 6> kRecognizedSections = {
    "info", "target", "signatures", "behavior", "network", "dropped"};

std::string scalar_to_string(const json& v) {
  switch (v.type()) {
    case json::value_t::string: return v.get<std::string>();
    case json::value_t::null: return "";
    case json::value_t::boolean: return v.get<bool>() ? "true" : "false";
    case json::value_t::number_integer: return std::to_string(v.get<std::int64_t>());
    case json::value_t::number_unsigned: return std::to_string(v.get<std::uint64_t>());
    default: return v.dump();
  }
}

void flatten(const std::string& prefix, const json& v, std::map<std::string, std::string>& out) {
  if (v.is_object()) {
    for (const auto& [key, child] : v.items()) {
      flatten(prefix.empty() ? key : prefix + "." + key, child, out);
    }
    return;
  }
  if (!prefix.empty()) out[prefix] = scalar_to_string(v);
}

void set_path(json& root, std::string_view path, json value) {
  json* node = &root;
  while (true) {
    const auto dot = path.find('.');
    const std::string key(path.substr(0, dot));
    if (dot == std::string_view::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    json& child = (*node)[key];
    if (!child.is_object()) child = json::object();
    node = &child;
    path.remove_prefix(dot + 1);
  }
}

json parse_or_string(const std::string& s) {
  json v = json::parse(s, nullptr, false);
  if (v.is_discarded()) return s;
  return v;
}

const json* member(const json& obj, std::string_view key) {
  if (!obj.is_object()) return nullptr;
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

std::string string_member(const json& obj, std::string_view key) {
  const json* v = member(obj, key);
  return v && v->is_string() ? v->get<std::string>() : std::string{};
}

std::optional<std::int64_t> int_member(const json& obj, std::string_view key) {
  const json* v = member(obj, key);
  if (!v) return std::nullopt;
  if (v->is_number_integer()) {
    if (v->is_number_unsigned() &&
        v->get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      return std::nullopt;
    }
    return v->get<std::int64_t>();
  }
  return std::nullopt;
}

std::string mark_to_string(const json& mark) {
  if (mark.is_string()) return mark.get<std::string>();
  if (mark.is_object()) {
    if (const json* ioc = member(mark, "ioc")) return scalar_to_string(*ioc);
    if (const json* call = member(mark, "call")) {
      std::string api = string_member(*call, "api");
      if (!api.empty()) return api;
    }
  }
  return scalar_to_string(mark);
}

bool call_succeeded(const json& call) {
  const json* status = member(call, "status");
  if (!status) return true;
  if (status->is_boolean()) return status->get<bool>();
  if (status->is_number_integer()) return status->get<std::int64_t>() != 0;
  if (status->is_string()) {
    const auto s = status->get<std::string>();
    return s != "0" && s != "false" && s != "FAILURE" && s != "failure";
  }
  return true;
}

std::vector<TriggeredSignature> parse_signatures(const json& sigs) {
  std::vector<TriggeredSignature> out;
  if (!sigs.is_array()) return out;
  for (const json& s : sigs) {
    TriggeredSignature sig;
    sig.name = string_member(s, "name");
    if (sig.name.empty()) continue;
    sig.description = string_member(s, "description");
    if (auto sev = int_member(s, "severity")) {
      sig.severity = static_cast<int>(std::clamp<std::int64_t>(*sev, 0, std::numeric_limits<int>::max()));
    }
    if (const json* marks = member(s, "marks"); marks && marks->is_array()) {
      for (const json& m : *marks) sig.marks.push_back(mark_to_string(m));
    }
    out.push_back(std::move(sig));
  }
  return out;
}

ApiCall parse_call(const json& c) {
  ApiCall call;
  call.api_name = string_member(c, "api");
  call.category = string_member(c, "category");
  call.success = call_succeeded(c);
  if (const json* args = member(c, "arguments")) {
    if (args->is_object()) {
      for (const auto& [k, v] : args->items()) call.arguments[k] = scalar_to_string(v);
    } else if (args->is_array()) {
      // Cuckoo 1.x: [{"name": ..., "value": ...}]
      for (const json& a : *args) {
        std::string name = string_member(a, "name");
        if (name.empty()) continue;
        const json* value = member(a, "value");
        call.arguments[name] = value ? scalar_to_string(*value) : std::string{};
      }
    }
  }
  return call;
}

std::vector<ProcessActivity> parse_processes(const json& procs) {
  std::vector<ProcessActivity> out;
  if (!procs.is_array()) return out;
  for (const json& p : procs) {
    auto pid = int_member(p, "pid");
    if (!pid || *pid < 0) continue;
    ProcessActivity proc;
    proc.pid = *pid;
    proc.process_name = string_member(p, "process_name");
    proc.parent_pid = int_member(p, "ppid");
    if (const json* cmd = member(p, "command_line"); cmd && cmd->is_string()) {
      proc.command_line = cmd->get<std::string>();
    }
    if (const json* calls = member(p, "calls"); calls && calls->is_array()) {
      for (const json& c : *calls) {
        ApiCall call = parse_call(c);
        if (!call.api_name.empty()) proc.api_calls.push_back(std::move(call));
      }
    }
    out.push_back(std::move(proc));
  }
  // Parent links must point inside the report; the launcher usually does not.
  std::set<std::int64_t> pids;
  for (const auto& p : out) pids.insert(p.pid);
  for (auto& p : out) {
    if (p.parent_pid && !pids.contains(*p.parent_pid)) p.parent_pid.reset();
  }
  return out;
}

template <typename T>
void push_unique(std::vector<T>& v, T item) {
  if (std::find(v.begin(), v.end(), item) == v.end()) v.push_back(std::move(item));
}

NetworkActivity parse_network(const json& net, std::map<std::string, std::string>& meta) {
  NetworkActivity out;
  if (!net.is_object()) return out;
  std::vector<Endpoint> endpoints;
  for (const auto& [key, value] : net.items()) {
    if (key == "dns") {
      if (!value.is_array()) continue;
      for (const json& q : value) {
        std::string name = q.is_string() ? q.get<std::string>() : string_member(q, "request");
        if (!name.empty()) push_unique(out.dns_queries, std::move(name));
      }
    } else if (key == "domains") {
      if (!value.is_array()) continue;
      for (const json& d : value) {
        std::string name = d.is_string() ? d.get<std::string>() : string_member(d, "domain");
        if (!name.empty()) push_unique(out.dns_queries, std::move(name));
      }
    } else if (key == "http") {
      if (!value.is_array()) continue;
      for (const json& h : value) {
        HttpRequest req{string_member(h, "method"), string_member(h, "host"),
                        string_member(h, "path")};
        if (req.path.empty()) req.path = string_member(h, "uri");
        if (req.host.empty() && req.path.empty()) continue;
        push_unique(out.http_requests, std::move(req));
      }
    } else if (key == "tcp" || key == "udp" || key == "hosts") {
      if (!value.is_array()) continue;
      for (const json& h : value) {
        Endpoint ep;
        if (h.is_string()) {
          ep.address = h.get<std::string>();
        } else if (key == "hosts") {
          ep.address = string_member(h, "ip");
          ep.port = static_cast<int>(int_member(h, "port").value_or(0));
        } else {
          ep.address = string_member(h, "dst");
          ep.port = static_cast<int>(int_member(h, "dport").value_or(0));
        }
        if (ep.port < 0 || ep.port > 65535) ep.port = 0;
        if (!ep.address.empty()) endpoints.push_back(std::move(ep));
      }
    } else {
      meta["network." + key] = value.dump();
    }
  }
  // A bare host entry is redundant once the same address was seen with a port.
  std::set<std::string> with_port;
  for (const auto& ep : endpoints) {
    if (ep.port != 0) with_port.insert(ep.address);
  }
  for (auto& ep : endpoints) {
    if (ep.port == 0 && with_port.contains(ep.address)) continue;
    push_unique(out.contacted_ips, std::move(ep));
  }
  return out;
}

std::vector<DroppedFile> parse_dropped(const json& dropped) {
  std::vector<DroppedFile> out;
  if (!dropped.is_array()) return out;
  for (const json& d : dropped) {
    if (!d.is_object()) continue;
    DroppedFile f;
    f.path = string_member(d, "path");
    if (f.path.empty()) f.path = string_member(d, "name");
    if (f.path.empty()) continue;
    f.type = string_member(d, "type");
    for (const auto& [k, v] : d.items()) {
      if (k == "path" || k == "type") continue;
      f.provenance[k] = scalar_to_string(v);
    }
    if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(std::move(f));
  }
  return out;
}

SandboxReport parse_document(const json& doc, std::string_view raw) {
  if (!doc.is_object()) throw Error(ErrorCode::MalformedReport, "report is not a JSON object");
  if (std::none_of(kRecognizedSections.begin(), kRecognizedSections.end(),
                   [&](std::string_view k) { return doc.contains(k); })) {
    throw Error(ErrorCode::MalformedReport,
                "report has none of the sections info, target, signatures, behavior, network, dropped");
  }

  SandboxReport r;
  for (const auto& [key, value] : doc.items()) {
    if (key == "info") {
      if (value.is_object()) {
        flatten("info", value, r.analysis_meta);
      } else {
        r.analysis_meta["info"] = value.dump();
      }
    } else if (key == "target") {
      flatten("", value, r.target_meta);
    } else if (key == "signatures") {
      r.signatures = parse_signatures(value);
    } else if (key == "behavior") {
      if (!value.is_object()) continue;
      for (const auto& [bkey, bvalue] : value.items()) {
        if (bkey == "processes") {
          r.processes = parse_processes(bvalue);
        } else {
          r.analysis_meta["behavior." + bkey] = bvalue.dump();
        }
      }
    } else if (key == "network") {
      r.network = parse_network(value, r.analysis_meta);
    } else if (key == "dropped") {
      r.dropped_files = parse_dropped(value);
    } else if (key != "sample_id") {
      r.analysis_meta[key] = value.dump();
    }
  }

  r.sample_id = string_member(doc, "sample_id");
  if (r.sample_id.empty()) {
    if (auto it = r.target_meta.find("file.sha256"); it != r.target_meta.end()) {
      r.sample_id = it->second;
    }
  }
  if (r.sample_id.empty()) r.sample_id = sha256_hex(raw);
  return r;
}

}  // namespace

const ProcessActivity* SandboxReport::find_process(std::int64_t pid) const {
  auto it = std::find_if(processes.begin(), processes.end(),
                         [&](const ProcessActivity& p) { return p.pid == pid; });
  return it == processes.end() ? nullptr : &*it;
}

SandboxReport parse_report(std::string_view raw) {
  json doc = json::parse(raw.begin(), raw.end(), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::MalformedReport, "report is not valid JSON");
  try {
    return parse_document(doc, raw);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedReport, std::string("unusable report: ") + e.what());
  }
}

json to_normalized_json(const SandboxReport& r) {
  json doc = json::object();
  doc["sample_id"] = r.sample_id;

  json info = json::object();
  json behavior = json::object();
  json network = json::object();
  for (const auto& [key, value] : r.analysis_meta) {
    if (key.starts_with("info.")) {
      set_path(info, std::string_view(key).substr(5), value);
    } else if (key.starts_with("behavior.")) {
      behavior[key.substr(9)] = parse_or_string(value);
    } else if (key.starts_with("network.")) {
      network[key.substr(8)] = parse_or_string(value);
    } else if (key == "info") {
      info = parse_or_string(value);
    } else {
      doc[key] = parse_or_string(value);
    }
  }
  doc["info"] = info;

  json target = json::object();
  for (const auto& [key, value] : r.target_meta) set_path(target, key, value);
  doc["target"] = target;

  json sigs = json::array();
  for (const auto& s : r.signatures) {
    sigs.push_back({{"name", s.name},
                    {"description", s.description},
                    {"severity", s.severity},
                    {"marks", s.marks}});
  }
  doc["signatures"] = sigs;

  json procs = json::array();
  for (const auto& p : r.processes) {
    json proc = {{"pid", p.pid}, {"process_name", p.process_name}};
    if (p.parent_pid) proc["ppid"] = *p.parent_pid;
    if (p.command_line) proc["command_line"] = *p.command_line;
    json calls = json::array();
    for (const auto& c : p.api_calls) {
      calls.push_back({{"api", c.api_name},
                       {"category", c.category},
                       {"arguments", c.arguments},
                       {"status", c.success}});
    }
    proc["calls"] = calls;
    procs.push_back(proc);
  }
  behavior["processes"] = procs;
  doc["behavior"] = behavior;

  json dns = json::array();
  for (const auto& d : r.network.dns_queries) dns.push_back({{"request", d}});
  json http = json::array();
  for (const auto& h : r.network.http_requests) {
    http.push_back({{"method", h.method}, {"host", h.host}, {"path", h.path}});
  }
  json hosts = json::array();
  for (const auto& e : r.network.contacted_ips) hosts.push_back({{"ip", e.address}, {"port", e.port}});
  network["dns"] = dns;
  network["http"] = http;
  network["hosts"] = hosts;
  doc["network"] = network;

  json dropped = json::array();
  for (const auto& f : r.dropped_files) {
    json d = json::object();
    for (const auto& [k, v] : f.provenance) d[k] = v;
    d["path"] = f.path;
    d["type"] = f.type;
    dropped.push_back(d);
  }
  doc["dropped"] = dropped;
  return doc;
}

SandboxReport load_report_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open report " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_report(buf.str());
}

}  // namespace malsum
