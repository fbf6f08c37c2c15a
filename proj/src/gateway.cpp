#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "malsum/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "malsum/error.hpp"
#include "malsum/mock_backend.hpp"
#include "malsum/text.hpp"

namespace malsum {
namespace {

using nlohmann::json;
using std::chrono::milliseconds;

constexpr std::string_view kChatPath = "/v1/chat/completions";
constexpr std::string_view kEmbeddingsPath = "/v1/embeddings";

std::string endpoint_error_message(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (!j.is_discarded() && j.is_object()) {
    if (auto it = j.find("error"); it != j.end()) {
      if (it->is_string()) return it->get<std::string>();
      if (it->is_object() && it->contains("message") && (*it)["message"].is_string()) {
        return (*it)["message"].get<std::string>();
      }
    }
    if (auto it = j.find("message"); it != j.end() && it->is_string()) return it->get<std::string>();
  }
  return body.substr(0, 200);
}

bool reports_context_overflow(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (!j.is_discarded() && j.is_object() && j.contains("error") && j["error"].is_object()) {
    const json& e = j["error"];
    if (e.contains("code") && e["code"].is_string() &&
        e["code"].get<std::string>() == "context_length_exceeded") {
      return true;
    }
  }
  const std::string lowered = text::to_lower_ascii(body);
  for (std::string_view needle : {"context length", "context window", "context size",
                                  "maximum context", "too many tokens"}) {
    if (lowered.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

std::string_view quantization_hint_name(QuantizationHint hint) {
  return hint == QuantizationHint::Int4Fp16 ? "int4_fp16" : "none";
}

QuantizationHint parse_quantization_hint(std::string_view name) {
  if (name == "none") return QuantizationHint::None;
  if (name == "int4_fp16") return QuantizationHint::Int4Fp16;
  throw Error(ErrorCode::Config, "unknown quantization_hint '" + std::string(name) +
                                     "' (expected none or int4_fp16)");
}

std::optional<std::string> ModelProfile::resolved_api_key() const {
  if (!api_key_env.empty()) {
    if (const char* env = std::getenv(api_key_env.c_str()); env != nullptr && *env != '\0') {
      return std::string(env);
    }
  }
  return api_key;
}

void ModelProfile::validate(std::string_view field_prefix) const {
  const std::string p(field_prefix);
  if (model_name.empty()) throw Error(ErrorCode::Config, p + ".model_name: must not be empty");
  if (endpoint_url.empty()) throw Error(ErrorCode::Config, p + ".endpoint_url: must not be empty");
  if (max_output_tokens <= 0) throw Error(ErrorCode::Config, p + ".max_output_tokens: must be > 0");
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    throw Error(ErrorCode::Config, p + ".temperature: must lie in [0, 2]");
  }
  if (timeout.count() <= 0) throw Error(ErrorCode::Config, p + ".timeout_ms: must be > 0");
  if (embedding_batch_limit == 0) {
    throw Error(ErrorCode::Config, p + ".embedding_batch_limit: must be > 0");
  }
  if (is_mock()) {
    try {
      (void)MockSettings::from_json(mock);
    } catch (const Error& e) {
      throw Error(ErrorCode::Config, p + ".mock." + e.what());
    }
  }
}

HttpTransport::HttpTransport(std::string endpoint_url) {
  const auto scheme_end = endpoint_url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::Config, "endpoint_url '" + endpoint_url + "' has no scheme");
  }
  const std::string scheme = endpoint_url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw Error(ErrorCode::Config, "endpoint_url scheme must be http or https, got '" + scheme + "'");
  }
  const auto path_start = endpoint_url.find('/', scheme_end + 3);
  scheme_host_port_ = endpoint_url.substr(0, path_start);
  if (path_start != std::string::npos) base_path_ = endpoint_url.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
}

TransportResponse HttpTransport::post(const TransportRequest& request) {
  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (request.bearer_token) headers.emplace("Authorization", "Bearer " + *request.bearer_token);

  TransportResponse out;
  const auto start = std::chrono::steady_clock::now();
  auto res = client.Post(base_path_ + request.path, headers, request.body, "application/json");
  out.elapsed = std::chrono::duration_cast<milliseconds>(std::chrono::steady_clock::now() - start);
  if (!res) {
    const auto err = res.error();
    out.failure = (err == httplib::Error::Read || err == httplib::Error::Write ||
                   err == httplib::Error::ConnectionTimeout)
                      ? TransportFailure::Timeout
                      : TransportFailure::Connect;
    out.detail = httplib::to_string(err);
    return out;
  }
  out.status = res->status;
  out.body = std::move(res->body);
  return out;
}

std::shared_ptr<Transport> make_transport(const ModelProfile& profile, bool force_offline) {
  if (force_offline || profile.is_mock()) {
    return std::make_shared<MockBackend>(MockSettings::from_json(profile.mock));
  }
  return std::make_shared<HttpTransport>(profile.endpoint_url);
}

milliseconds RetryPolicy::nominal_delay(int attempt) const {
  const double factor = std::ldexp(1.0, std::max(0, attempt - 1));
  return milliseconds(static_cast<std::int64_t>(static_cast<double>(base_delay.count()) * factor));
}

namespace wire {

json chat_request(const ModelProfile& profile, std::string_view system_prompt,
                  std::string_view user_prompt) {
  return json{{"model", profile.model_name},
              {"messages", json::array({json{{"role", "system"}, {"content", system_prompt}},
                                        json{{"role", "user"}, {"content", user_prompt}}})},
              {"temperature", profile.temperature},
              {"max_tokens", profile.max_output_tokens}};
}

json embeddings_request(const ModelProfile& profile, std::span<const std::string> inputs) {
  json arr = json::array();
  for (const auto& s : inputs) arr.push_back(s);
  return json{{"model", profile.model_name}, {"input", std::move(arr)}};
}

json embeddings_request(const ModelProfile& profile, std::string_view input) {
  return json{{"model", profile.model_name}, {"input", input}};
}

}  // namespace wire

LlmGateway::LlmGateway(ModelProfile profile, std::shared_ptr<Transport> transport,
                       GatewayOptions options)
    : profile_(std::move(profile)),
      transport_(std::move(transport)),
      options_(std::move(options)),
      rng_(std::random_device{}()) {
  if (!transport_) throw Error(ErrorCode::InvalidArgument, "gateway needs a transport");
  profile_.validate();
  api_key_ = profile_.resolved_api_key();
  if (options_.max_in_flight == 0) options_.max_in_flight = 1;
  if (!options_.retry.sleep) {
    options_.retry.sleep = [](milliseconds d) { std::this_thread::sleep_for(d); };
  }
}

void LlmGateway::backoff(int attempt) {
  const auto nominal = options_.retry.nominal_delay(attempt);
  double factor = 1.0;
  if (options_.retry.jitter > 0) {
    std::lock_guard lock(rng_mutex_);
    std::uniform_real_distribution<double> dist(1.0 - options_.retry.jitter, 1.0 + options_.retry.jitter);
    factor = dist(rng_);
  }
  options_.retry.sleep(milliseconds(
      static_cast<std::int64_t>(std::llround(static_cast<double>(nominal.count()) * factor))));
}

LlmGateway::Sent LlmGateway::send_with_retries(const std::string& path, const std::string& body) {
  const int max_attempts = std::max(1, options_.retry.max_attempts);
  Sent sent;
  bool only_connect_failures = true;
  std::string last_problem;

  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    {
      std::unique_lock lock(slot_mutex_);
      slot_cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
      ++in_flight_;
    }
    TransportResponse response;
    try {
      response = transport_->post({path, body, api_key_, profile_.timeout});
    } catch (...) {
      std::lock_guard lock(slot_mutex_);
      --in_flight_;
      slot_cv_.notify_one();
      throw;
    }
    {
      std::lock_guard lock(slot_mutex_);
      --in_flight_;
    }
    slot_cv_.notify_one();

    sent.attempts = attempt;
    sent.latency_ms += response.elapsed.count();

    if (response.failure == TransportFailure::Connect) {
      last_problem = "connection failed: " + response.detail;
    } else if (response.failure == TransportFailure::Timeout) {
      only_connect_failures = false;
      last_problem = "timed out: " + response.detail;
    } else if (response.status >= 200 && response.status < 300) {
      sent.response = std::move(response);
      return sent;
    } else if (response.status == 401 || response.status == 403) {
      throw Error(ErrorCode::AuthFailed, profile_.model_name + ": endpoint rejected credentials (HTTP " +
                                             std::to_string(response.status) + ")");
    } else if (response.status == 429 || response.status >= 500) {
      only_connect_failures = false;
      last_problem = "HTTP " + std::to_string(response.status);
    } else if (reports_context_overflow(response.body)) {
      throw Error(ErrorCode::ContextOverflow, profile_.model_name + ": " + endpoint_error_message(response.body));
    } else {
      throw Error(ErrorCode::RequestRejected, profile_.model_name + ": HTTP " +
                                                  std::to_string(response.status) + ": " +
                                                  endpoint_error_message(response.body));
    }
    if (attempt < max_attempts) backoff(attempt);
  }

  const std::string summary = profile_.model_name + ": " + std::to_string(max_attempts) +
                              " attempts failed, last " + last_problem;
  if (only_connect_failures) throw Error(ErrorCode::EndpointUnreachable, summary);
  throw Error(ErrorCode::RetriesExhausted, summary);
}

ChatExchange LlmGateway::complete(std::string_view system_prompt, std::string_view user_prompt) {
  if (system_prompt.empty() || user_prompt.empty()) {
    throw Error(ErrorCode::InvalidArgument, "chat prompts must not be empty");
  }
  const std::string body = wire::chat_request(profile_, system_prompt, user_prompt).dump();
  Sent sent = send_with_retries(std::string(kChatPath), body);

  json j = json::parse(sent.response.body, nullptr, false);
  const json* content = nullptr;
  if (!j.is_discarded() && j.is_object() && j.contains("choices") && j["choices"].is_array() &&
      !j["choices"].empty()) {
    const json& choice = j["choices"][0];
    if (choice.is_object() && choice.contains("message") && choice["message"].is_object()) {
      auto it = choice["message"].find("content");
      if (it != choice["message"].end() && it->is_string()) content = &*it;
    }
  }
  if (!content) {
    throw Error(ErrorCode::BadResponse, profile_.model_name + ": response lacks choices[0].message.content");
  }

  ChatExchange ex;
  ex.system_prompt = std::string(system_prompt);
  ex.user_prompt = std::string(user_prompt);
  ex.completion_text = content->get<std::string>();
  ex.latency_ms = sent.latency_ms;
  ex.attempts = sent.attempts;
  if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
    const json& usage = *u;
    if (usage.contains("prompt_tokens") && usage["prompt_tokens"].is_number_integer() &&
        usage.contains("completion_tokens") && usage["completion_tokens"].is_number_integer()) {
      ex.usage = TokenUsage{usage["prompt_tokens"].get<std::int64_t>(),
                            usage["completion_tokens"].get<std::int64_t>()};
    }
  }
  return ex;
}

std::vector<EmbeddingVector> LlmGateway::parse_embeddings(const TransportResponse& response,
                                                          std::size_t expected) {
  json j = json::parse(response.body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("data") || !j["data"].is_array()) {
    throw Error(ErrorCode::BadResponse, profile_.model_name + ": embeddings response lacks data[]");
  }
  const json& data = j["data"];
  if (data.size() != expected) {
    throw Error(ErrorCode::BadResponse, profile_.model_name + ": expected " + std::to_string(expected) +
                                            " embeddings, got " + std::to_string(data.size()));
  }
  std::vector<const json*> ordered(expected, nullptr);
  const bool indexed = std::all_of(data.begin(), data.end(), [](const json& d) {
    return d.is_object() && d.contains("index") && d["index"].is_number_integer();
  });
  for (std::size_t i = 0; i < expected; ++i) {
    std::size_t slot = i;
    if (indexed) {
      const auto idx = data[i]["index"].get<std::int64_t>();
      if (idx < 0 || static_cast<std::size_t>(idx) >= expected || ordered[idx]) {
        throw Error(ErrorCode::BadResponse, profile_.model_name + ": bad embedding index");
      }
      slot = static_cast<std::size_t>(idx);
    }
    ordered[slot] = &data[i];
  }

  std::vector<EmbeddingVector> out;
  out.reserve(expected);
  for (const json* d : ordered) {
    if (!d->is_object() || !d->contains("embedding") || !(*d)["embedding"].is_array()) {
      throw Error(ErrorCode::BadResponse, profile_.model_name + ": data[i].embedding missing");
    }
    std::vector<double> values;
    values.reserve((*d)["embedding"].size());
    for (const json& v : (*d)["embedding"]) {
      if (!v.is_number()) throw Error(ErrorCode::BadResponse, profile_.model_name + ": non-numeric embedding");
      values.push_back(v.get<double>());
    }
    out.emplace_back(std::move(values));
  }
  return out;
}

std::vector<EmbeddingVector> LlmGateway::embed_tokens(std::span<const std::string> tokens) {
  if (tokens.empty()) throw Error(ErrorCode::InvalidArgument, "embed_tokens needs at least one token");
  for (const auto& t : tokens) {
    if (t.empty()) throw Error(ErrorCode::InvalidArgument, "cannot embed an empty string");
  }
  std::vector<EmbeddingVector> out;
  out.reserve(tokens.size());
  const std::size_t batch = profile_.embedding_batch_limit;
  for (std::size_t start = 0; start < tokens.size(); start += batch) {
    auto chunk = tokens.subspan(start, std::min(batch, tokens.size() - start));
    Sent sent = send_with_retries(std::string(kEmbeddingsPath),
                                  wire::embeddings_request(profile_, chunk).dump());
    auto vectors = parse_embeddings(sent.response, chunk.size());
    for (auto& v : vectors) out.push_back(std::move(v));
  }
  for (const auto& v : out) {
    if (v.dimension() != out.front().dimension()) {
      throw Error(ErrorCode::BadResponse, profile_.model_name + ": embeddings differ in dimension");
    }
  }
  return out;
}

EmbeddingVector LlmGateway::embed_text(const std::string& text) {
  if (text.empty()) throw Error(ErrorCode::InvalidArgument, "cannot embed an empty string");
  Sent sent = send_with_retries(std::string(kEmbeddingsPath),
                                wire::embeddings_request(profile_, std::string_view(text)).dump());
  return std::move(parse_embeddings(sent.response, 1).front());
}

}  // namespace malsum
