#pragma once

// In-process stand-in for an OpenAI-compatible server. It validates request
// bodies against the wire schema, enforces a declared context window and
// batch limit, and can be scripted to fail.

#include <chrono>
#include <cstddef>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "malsum/embedding.hpp"
#include "malsum/gateway.hpp"

namespace malsum {

struct MockRule {
  std::string route;  // "chat", "embeddings" or "" for both
  std::string match;  // substring of the request text; "" matches everything
  int status = 503;
  std::string body;
  bool timeout = false;
  int times = 0;  // 0 means unlimited

  bool operator==(const MockRule&) const = default;
};

struct MockSettings {
  enum class Mode { Synthesize, Echo };

  Mode mode = Mode::Synthesize;
  std::string echo_text;
  std::size_t context_window = 32768;  // estimated tokens, prompt + max_tokens
  std::size_t embedding_dimension = 64;
  std::size_t max_batch = 2048;
  std::chrono::milliseconds latency{3};
  std::optional<std::string> required_api_key;
  std::vector<MockRule> rules;

  /// Throws Error(Config) on unknown keys or bad values.
  static MockSettings from_json(const nlohmann::json& j);
};

class MockBackend final : public Transport {
 public:
  struct Received {
    std::string path;
    nlohmann::json body;
  };

  explicit MockBackend(MockSettings settings = {});

  TransportResponse post(const TransportRequest& request) override;

  std::vector<Received> received() const;
  std::size_t request_count(std::string_view path) const;

  /// Unit vector derived from SHA-256(text || counter) blocks.
  static EmbeddingVector digest_embedding(std::string_view text, std::size_t dimension);

  /// Deterministic four-section completion assembled from the evidence lines
  /// of the prompt; the model name selects how much evidence is used.
  static std::string synthesize_summary(std::string_view model, std::string_view user_prompt);

 private:
  TransportResponse handle_chat(const nlohmann::json& body);
  TransportResponse handle_embeddings(const nlohmann::json& body);
  std::optional<TransportResponse> apply_rules(std::string_view route, std::string_view text);
  TransportResponse respond(int status, std::string body) const;

  MockSettings settings_;
  mutable std::mutex mutex_;
  std::vector<int> rule_hits_;
  std::vector<Received> received_;
};

}  // namespace malsum
