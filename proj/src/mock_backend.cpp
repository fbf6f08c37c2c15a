#include "malsum/mock_backend.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "malsum/digest.hpp"
#include "malsum/distiller.hpp"
#include "malsum/error.hpp"
#include "malsum/text.hpp"

namespace malsum {
namespace {

using nlohmann::json;

std::string error_body(std::string_view message, std::string_view type, std::string_view code = {}) {
  json e = {{"message", message}, {"type", type}};
  e["code"] = code.empty() ? json(nullptr) : json(code);
  return json{{"error", e}}.dump();
}

void require_keys(const json& j, std::initializer_list<std::string_view> allowed,
                  std::string_view where) {
  if (!j.is_object()) throw Error(ErrorCode::Config, std::string(where) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorCode::Config, std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T get_or(const json& j, std::string_view key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::Config, std::string(key) + ": wrong type");
  }
}

// Evidence items by section, as rendered by the distiller.
struct Evidence {
  std::vector<std::string> signatures;  // "name (severity n): description"
  std::vector<std::string> processes;
  std::vector<std::string> network;
  std::vector<std::string> dropped;
  std::string lowered;

  bool empty() const {
    return signatures.empty() && processes.empty() && network.empty() && dropped.empty();
  }
};

Evidence read_evidence(std::string_view prompt) {
  Evidence ev;
  ev.lowered = text::to_lower_ascii(prompt);
  std::vector<std::string>* current = nullptr;
  std::size_t pos = 0;
  while (pos <= prompt.size()) {
    auto end = prompt.find('\n', pos);
    if (end == std::string_view::npos) end = prompt.size();
    std::string_view line = prompt.substr(pos, end - pos);
    pos = end + 1;
    if (line.starts_with("### ")) {
      if (line == "### Triggered signatures") current = &ev.signatures;
      else if (line == "### Process activity") current = &ev.processes;
      else if (line == "### Network activity") current = &ev.network;
      else if (line == "### Dropped files") current = &ev.dropped;
      else current = nullptr;
    } else if (line.empty()) {
      current = nullptr;
    } else if (current && line.starts_with("- ")) {
      current->emplace_back(line.substr(2));
    }
    if (end == prompt.size()) break;
  }
  return ev;
}

std::string strip_terminal(std::string s) {
  while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?' || s.back() == ' ')) s.pop_back();
  return s;
}

std::string signature_sentence(const std::string& item) {
  // "name (severity n): description"
  const auto colon = item.find("): ");
  const auto paren = item.find(" (severity");
  std::string name = item.substr(0, std::min(paren, colon));
  if (colon != std::string::npos) {
    std::string desc = strip_terminal(item.substr(colon + 3));
    if (!desc.empty()) desc[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(desc[0])));
    return "The " + name + " signature shows that it " + desc + ".";
  }
  return "The " + name + " signature was triggered.";
}

bool mentions(const Evidence& ev, std::initializer_list<std::string_view> words) {
  return std::any_of(words.begin(), words.end(),
                     [&](std::string_view w) { return ev.lowered.find(w) != std::string::npos; });
}

}  // namespace

MockSettings MockSettings::from_json(const json& j) {
  MockSettings s;
  if (j.is_null()) return s;
  require_keys(j, {"mode", "echo_text", "context_window", "embedding_dimension", "max_batch",
                   "latency_ms", "required_api_key", "rules"},
               "mock");
  const auto mode = get_or<std::string>(j, "mode", "synthesize");
  if (mode == "synthesize") s.mode = Mode::Synthesize;
  else if (mode == "echo") s.mode = Mode::Echo;
  else throw Error(ErrorCode::Config, "mode: expected synthesize or echo");
  s.echo_text = get_or<std::string>(j, "echo_text", "");
  s.context_window = get_or<std::size_t>(j, "context_window", s.context_window);
  s.embedding_dimension = get_or<std::size_t>(j, "embedding_dimension", s.embedding_dimension);
  s.max_batch = get_or<std::size_t>(j, "max_batch", s.max_batch);
  s.latency = std::chrono::milliseconds(get_or<std::int64_t>(j, "latency_ms", s.latency.count()));
  if (j.contains("required_api_key")) s.required_api_key = get_or<std::string>(j, "required_api_key", "");
  if (s.embedding_dimension == 0) throw Error(ErrorCode::Config, "embedding_dimension: must be > 0");
  if (s.max_batch == 0) throw Error(ErrorCode::Config, "max_batch: must be > 0");
  if (s.latency.count() < 0) throw Error(ErrorCode::Config, "latency_ms: must be >= 0");
  if (auto rules = j.find("rules"); rules != j.end()) {
    if (!rules->is_array()) throw Error(ErrorCode::Config, "rules: expected an array");
    for (const json& r : *rules) {
      require_keys(r, {"route", "match", "status", "body", "timeout", "times"}, "rules[]");
      MockRule rule;
      rule.route = get_or<std::string>(r, "route", "");
      rule.match = get_or<std::string>(r, "match", "");
      rule.status = get_or<int>(r, "status", 503);
      rule.body = get_or<std::string>(r, "body", "");
      rule.timeout = get_or<bool>(r, "timeout", false);
      rule.times = get_or<int>(r, "times", 0);
      if (rule.route != "" && rule.route != "chat" && rule.route != "embeddings") {
        throw Error(ErrorCode::Config, "rules[].route: expected chat, embeddings or empty");
      }
      s.rules.push_back(std::move(rule));
    }
  }
  return s;
}

MockBackend::MockBackend(MockSettings settings)
    : settings_(std::move(settings)), rule_hits_(settings_.rules.size(), 0) {}

TransportResponse MockBackend::respond(int status, std::string body) const {
  TransportResponse r;
  r.status = status;
  r.body = std::move(body);
  r.elapsed = settings_.latency;
  return r;
}

std::optional<TransportResponse> MockBackend::apply_rules(std::string_view route, std::string_view text) {
  std::lock_guard lock(mutex_);
  for (std::size_t i = 0; i < settings_.rules.size(); ++i) {
    const MockRule& rule = settings_.rules[i];
    if (!rule.route.empty() && rule.route != route) continue;
    if (!rule.match.empty() && text.find(rule.match) == std::string_view::npos) continue;
    if (rule.times > 0 && rule_hits_[i] >= rule.times) continue;
    ++rule_hits_[i];
    if (rule.timeout) {
      TransportResponse r;
      r.failure = TransportFailure::Timeout;
      r.elapsed = settings_.latency;
      r.detail = "scripted timeout";
      return r;
    }
    return respond(rule.status, rule.body.empty() ? error_body("scripted failure", "server_error") : rule.body);
  }
  return std::nullopt;
}

TransportResponse MockBackend::post(const TransportRequest& request) {
  json body = json::parse(request.body, nullptr, false);
  {
    std::lock_guard lock(mutex_);
    received_.push_back({request.path, body});
  }
  if (body.is_discarded()) return respond(400, error_body("request body is not JSON", "invalid_request_error"));
  if (settings_.required_api_key &&
      (!request.bearer_token || *request.bearer_token != *settings_.required_api_key)) {
    return respond(401, error_body("invalid api key", "authentication_error", "invalid_api_key"));
  }
  if (request.path == "/v1/chat/completions") return handle_chat(body);
  if (request.path == "/v1/embeddings") return handle_embeddings(body);
  return respond(404, error_body("unknown route", "invalid_request_error"));
}

TransportResponse MockBackend::handle_chat(const json& body) {
  auto bad = [&](std::string_view why) {
    return respond(400, error_body(why, "invalid_request_error"));
  };
  if (!body.is_object()) return bad("body must be an object");
  for (const auto& [key, _] : body.items()) {
    if (key != "model" && key != "messages" && key != "temperature" && key != "max_tokens") {
      return bad("unexpected field " + key);
    }
  }
  if (!body.contains("model") || !body["model"].is_string() || body["model"].get<std::string>().empty()) {
    return bad("model must be a non-empty string");
  }
  if (!body.contains("messages") || !body["messages"].is_array() || body["messages"].empty()) {
    return bad("messages must be a non-empty array");
  }
  if (!body.contains("temperature") || !body["temperature"].is_number()) return bad("temperature must be a number");
  if (!body.contains("max_tokens") || !body["max_tokens"].is_number_integer() ||
      body["max_tokens"].get<std::int64_t>() <= 0) {
    return bad("max_tokens must be a positive integer");
  }
  std::string all_text;
  std::string user_text;
  for (const json& m : body["messages"]) {
    if (!m.is_object() || m.size() != 2 || !m.contains("role") || !m.contains("content") ||
        !m["role"].is_string() || !m["content"].is_string()) {
      return bad("messages[] must be {role, content}");
    }
    const auto role = m["role"].get<std::string>();
    if (role != "system" && role != "user" && role != "assistant") return bad("unknown role " + role);
    all_text += m["content"].get<std::string>();
    all_text += '\n';
    if (role == "user") user_text = m["content"].get<std::string>();
  }
  if (auto scripted = apply_rules("chat", all_text)) return *scripted;

  const std::size_t prompt_tokens = estimate_tokens(all_text);
  const auto max_tokens = static_cast<std::size_t>(body["max_tokens"].get<std::int64_t>());
  if (prompt_tokens + max_tokens > settings_.context_window) {
    return respond(400, error_body("This model's maximum context length is " +
                                       std::to_string(settings_.context_window) + " tokens, but " +
                                       std::to_string(prompt_tokens + max_tokens) + " were requested",
                                   "invalid_request_error", "context_length_exceeded"));
  }

  const std::string model = body["model"].get<std::string>();
  const std::string content = settings_.mode == MockSettings::Mode::Echo
                                  ? settings_.echo_text
                                  : synthesize_summary(model, user_text);
  const std::size_t completion_tokens = estimate_tokens(content);
  json resp = {
      {"id", "chatcmpl-mock"},
      {"object", "chat.completion"},
      {"model", model},
      {"choices", json::array({json{{"index", 0},
                                    {"message", {{"role", "assistant"}, {"content", content}}},
                                    {"finish_reason", "stop"}}})},
      {"usage",
       {{"prompt_tokens", prompt_tokens},
        {"completion_tokens", completion_tokens},
        {"total_tokens", prompt_tokens + completion_tokens}}}};
  return respond(200, resp.dump());
}

TransportResponse MockBackend::handle_embeddings(const json& body) {
  auto bad = [&](std::string_view why) {
    return respond(400, error_body(why, "invalid_request_error"));
  };
  if (!body.is_object()) return bad("body must be an object");
  for (const auto& [key, _] : body.items()) {
    if (key != "model" && key != "input") return bad("unexpected field " + key);
  }
  if (!body.contains("model") || !body["model"].is_string()) return bad("model must be a string");
  if (!body.contains("input")) return bad("input is required");
  std::vector<std::string> inputs;
  const json& input = body["input"];
  if (input.is_string()) {
    inputs.push_back(input.get<std::string>());
  } else if (input.is_array() && !input.empty()) {
    for (const json& s : input) {
      if (!s.is_string()) return bad("input[] must hold strings");
      inputs.push_back(s.get<std::string>());
    }
  } else {
    return bad("input must be a string or a non-empty array");
  }
  if (inputs.size() > settings_.max_batch) return bad("too many inputs in one request");
  std::string joined;
  for (const auto& s : inputs) {
    if (s.empty()) return bad("input strings must not be empty");
    joined += s;
    joined += '\n';
  }
  if (auto scripted = apply_rules("embeddings", joined)) return *scripted;

  json data = json::array();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    data.push_back({{"object", "embedding"},
                    {"index", i},
                    {"embedding", digest_embedding(inputs[i], settings_.embedding_dimension).values()}});
  }
  const std::size_t tokens = estimate_tokens(joined);
  json resp = {{"object", "list"},
               {"model", body["model"]},
               {"data", std::move(data)},
               {"usage", {{"prompt_tokens", tokens}, {"total_tokens", tokens}}}};
  return respond(200, resp.dump());
}

std::vector<MockBackend::Received> MockBackend::received() const {
  std::lock_guard lock(mutex_);
  return received_;
}

std::size_t MockBackend::request_count(std::string_view path) const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(std::count_if(received_.begin(), received_.end(),
                                                [&](const Received& r) { return r.path == path; }));
}

EmbeddingVector MockBackend::digest_embedding(std::string_view text, std::size_t dimension) {
  std::vector<double> values;
  values.reserve(dimension);
  std::string block(text);
  block.append(4, '\0');
  for (std::uint32_t counter = 0; values.size() < dimension; ++counter) {
    for (int b = 0; b < 4; ++b) {
      block[block.size() - 4 + b] = static_cast<char>((counter >> (24 - 8 * b)) & 0xff);
    }
    const Sha256 d = sha256(block);
    for (std::size_t w = 0; w + 4 <= d.size() && values.size() < dimension; w += 4) {
      const std::uint32_t u = (std::uint32_t{d[w]} << 24) | (std::uint32_t{d[w + 1]} << 16) |
                              (std::uint32_t{d[w + 2]} << 8) | std::uint32_t{d[w + 3]};
      values.push_back(static_cast<double>(u) / 4294967295.0 * 2.0 - 1.0);
    }
  }
  double norm = 0;
  for (double v : values) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : values) v /= norm;
  return EmbeddingVector(std::move(values));
}

std::string MockBackend::synthesize_summary(std::string_view model, std::string_view user_prompt) {
  const Evidence ev = read_evidence(user_prompt);
  const std::uint8_t variant = sha256(model)[0];
  const bool markdown_headings = variant % 2 == 0;
  const std::size_t detail = 2 + variant % 3;

  auto heading = [&](std::string_view h) {
    return markdown_headings ? "## " + std::string(h) + "\n" : "**" + std::string(h) + ":**\n";
  };

  std::string out;
  out += heading("Overview");
  if (ev.empty()) {
    out += "The sandbox recorded no notable behavior for this sample.\n\n";
  } else {
    out += "The sample triggered " + std::to_string(ev.signatures.size()) + " signatures, ran " +
           std::to_string(ev.processes.size()) + " processes and produced " +
           std::to_string(ev.network.size()) + " network events.";
    if (!ev.signatures.empty()) {
      const auto& first = ev.signatures.front();
      out += " The first finding is " + first.substr(0, first.find(" (severity")) + ".";
    }
    out += "\n\n";
  }

  out += heading("Observed Behaviors");
  std::vector<std::string> observed;
  for (std::size_t i = 0; i < ev.signatures.size() && i < detail; ++i) {
    observed.push_back(signature_sentence(ev.signatures[i]));
  }
  for (std::size_t i = 0; i < ev.processes.size() && i < detail; ++i) {
    observed.push_back("It runs " + strip_terminal(ev.processes[i]) + ".");
  }
  for (std::size_t i = 0; i < ev.network.size() && i < detail; ++i) {
    observed.push_back("Network evidence includes " + strip_terminal(ev.network[i]) + ".");
  }
  for (std::size_t i = 0; i < ev.dropped.size() && i < detail; ++i) {
    observed.push_back("It writes the file " + strip_terminal(ev.dropped[i]) + ".");
  }
  if (!observed.empty() && variant % 3 == 0) observed.insert(observed.begin() + 1, observed.front());
  for (const auto& s : observed) out += "- " + s + "\n";
  out += "\n";

  // Some variants leave out the impact section entirely.
  if (variant % 5 != 1) {
    out += heading("Impact");
    std::string impact;
    if (mentions(ev, {"encrypt", "ransom"})) impact += "Files on the host may be encrypted and held for ransom. ";
    if (mentions(ev, {"autorun", "persist", "\\run"})) impact += "The sample survives reboots through persistence entries. ";
    if (mentions(ev, {"inject", "writeprocessmemory"})) impact += "Code is injected into other processes. ";
    if (mentions(ev, {"keylog", "credential", "steal"})) impact += "User credentials and keystrokes may be stolen. ";
    if (!ev.network.empty()) impact += "The sample communicates with remote infrastructure. ";
    if (impact.empty()) impact = "The impact could not be established from the evidence. ";
    out += std::string(text::trim(impact)) + "\n\n";
  }

  out += heading("Recommended Actions");
  std::string actions = "Isolate the affected host from the network.";
  if (!ev.network.empty()) actions += " Block the contacted domains and addresses at the perimeter.";
  if (!ev.dropped.empty() || mentions(ev, {"autorun", "persist"})) {
    actions += " Remove the dropped files and persistence entries.";
  }
  if (mentions(ev, {"encrypt", "ransom"})) actions += " Restore affected data from offline backups.";
  out += actions + "\n";
  return out;
}

}  // namespace malsum
