#pragma once

// Client side of the OpenAI-compatible chat-completions and embeddings
// protocols. A Transport moves bytes; LlmGateway owns the wire schema,
// retry policy, error classification and the in-flight limit.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "malsum/embedding.hpp"

namespace malsum {

enum class QuantizationHint { None, Int4Fp16 };

std::string_view quantization_hint_name(QuantizationHint hint);
QuantizationHint parse_quantization_hint(std::string_view name);

inline constexpr std::string_view kMockScheme = "mock://";
inline constexpr std::string_view kDefaultApiKeyEnv = "MALSUM_API_KEY";

struct ModelProfile {
  std::string model_name;
  std::string endpoint_url;
  std::optional<std::string> api_key;
  // Environment variable whose value, when set, overrides api_key.
  std::string api_key_env = std::string(kDefaultApiKeyEnv);
  // Recorded in run metadata; the serving endpoint does the quantized inference.
  std::optional<QuantizationHint> quantization_hint;
  int max_output_tokens = 1024;
  double temperature = 0.2;
  std::chrono::milliseconds timeout{60000};
  std::size_t embedding_batch_limit = 128;
  // Settings for the in-process mock when endpoint_url uses mock://.
  nlohmann::json mock = nlohmann::json::object();

  bool is_mock() const { return endpoint_url.starts_with(kMockScheme); }
  std::optional<std::string> resolved_api_key() const;
  void validate(std::string_view field_prefix = "profile") const;
};

struct TransportRequest {
  std::string path;  // "/v1/chat/completions" or "/v1/embeddings"
  std::string body;
  std::optional<std::string> bearer_token;
  std::chrono::milliseconds timeout{60000};
};

enum class TransportFailure { None, Connect, Timeout };

struct TransportResponse {
  int status = 0;
  std::string body;
  TransportFailure failure = TransportFailure::None;
  std::chrono::milliseconds elapsed{0};
  std::string detail;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportResponse post(const TransportRequest& request) = 0;
};

/// HTTP(S) via cpp-httplib; endpoint_url may carry a path prefix.
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(std::string endpoint_url);
  TransportResponse post(const TransportRequest& request) override;

 private:
  std::string scheme_host_port_;
  std::string base_path_;
};

/// Mock transport for mock:// endpoints or forced offline runs; plain HTTP
/// otherwise.
std::shared_ptr<Transport> make_transport(const ModelProfile& profile, bool force_offline);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{500};
  double jitter = 0.2;  // fraction, applied symmetrically
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to sleep_for

  /// Nominal delay before retry number `attempt` (1-based), before jitter.
  std::chrono::milliseconds nominal_delay(int attempt) const;
};

struct GatewayOptions {
  RetryPolicy retry;
  std::size_t max_in_flight = 4;
};

struct TokenUsage {
  std::int64_t prompt = 0;
  std::int64_t completion = 0;

  bool operator==(const TokenUsage&) const = default;
};

struct ChatExchange {
  std::string system_prompt;
  std::string user_prompt;
  std::string completion_text;
  std::optional<TokenUsage> usage;
  std::int64_t latency_ms = 0;
  int attempts = 0;
};

namespace wire {
nlohmann::json chat_request(const ModelProfile& profile, std::string_view system_prompt,
                            std::string_view user_prompt);
nlohmann::json embeddings_request(const ModelProfile& profile, std::span<const std::string> inputs);
nlohmann::json embeddings_request(const ModelProfile& profile, std::string_view input);
}  // namespace wire

class LlmGateway final : public Embedder {
 public:
  LlmGateway(ModelProfile profile, std::shared_ptr<Transport> transport,
             GatewayOptions options = {});

  /// Returns choices[0].message.content. Retries 429, 5xx, timeouts and
  /// connection failures. Throws Error with AuthFailed (401/403),
  /// ContextOverflow (endpoint says the context is too long),
  /// RetriesExhausted, EndpointUnreachable (every attempt failed to
  /// connect), RequestRejected (other 4xx), BadResponse, InvalidArgument.
  ChatExchange complete(std::string_view system_prompt, std::string_view user_prompt);

  /// One vector per token, each embedded independently; requests are split
  /// at profile.embedding_batch_limit.
  std::vector<EmbeddingVector> embed_tokens(std::span<const std::string> tokens);
  EmbeddingVector embed_text(const std::string& text);

  std::vector<EmbeddingVector> embed_many(std::span<const std::string> inputs) override {
    return embed_tokens(inputs);
  }
  EmbeddingVector embed_one(const std::string& input) override { return embed_text(input); }

  const ModelProfile& profile() const noexcept { return profile_; }

 private:
  struct Sent {
    TransportResponse response;
    int attempts = 0;
    std::int64_t latency_ms = 0;
  };
  Sent send_with_retries(const std::string& path, const std::string& body);
  std::vector<EmbeddingVector> parse_embeddings(const TransportResponse& response,
                                                std::size_t expected);
  void backoff(int attempt);

  ModelProfile profile_;
  std::shared_ptr<Transport> transport_;
  GatewayOptions options_;
  std::optional<std::string> api_key_;

  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  std::size_t in_flight_ = 0;

  std::mutex rng_mutex_;
  std::mt19937 rng_;
};

}  // namespace malsum
