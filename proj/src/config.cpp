#include "malsum/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "malsum/digest.hpp"
#include "malsum/error.hpp"

namespace malsum {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void require_object(const json& j, const std::string& field) {
  if (!j.is_object()) throw Error(ErrorCode::Config, field + ": expected an object");
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& field) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw Error(ErrorCode::Config, field + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_field(const json& j, const std::string& key, const std::string& field) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::Config, field + "." + key + ": wrong type");
  }
}

std::size_t get_count(const json& j, const std::string& key, const std::string& field) {
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw Error(ErrorCode::Config, field + "." + key + ": expected a non-negative integer");
  }
  return v.get<std::size_t>();
}

fs::path resolve(const fs::path& p, const fs::path& base_dir) {
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return (base_dir / p).lexically_normal();
}

ModelProfile mock_profile(std::string name, std::string url, std::optional<QuantizationHint> hint) {
  ModelProfile p;
  p.model_name = std::move(name);
  p.endpoint_url = std::move(url);
  p.quantization_hint = hint;
  return p;
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.profiles = {mock_profile("mock-llama-7b", "mock://local", QuantizationHint::None),
                  mock_profile("mock-qwen-7b", "mock://local", QuantizationHint::Int4Fp16)};
  cfg.embedder_profile = mock_profile("mock-embed", "mock://local", std::nullopt);
  return cfg;
}

void RunConfig::validate() const {
  distillation.validate();
  prompt.validate();
  if (profiles.empty()) throw Error(ErrorCode::Config, "profiles: at least one profile is required");
  std::set<std::string> names;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    profiles[i].validate("profiles[" + std::to_string(i) + "]");
    if (!names.insert(profiles[i].model_name).second) {
      throw Error(ErrorCode::Config,
                  "profiles[" + std::to_string(i) + "].model_name: duplicate '" + profiles[i].model_name + "'");
    }
  }
  embedder_profile.validate("embedder_profile");
  if (keyphrase_k == 0) throw Error(ErrorCode::Config, "keyphrase_k: must be > 0");
  if (parallelism == 0) throw Error(ErrorCode::Config, "parallelism: must be > 0");
  if (max_in_flight == 0) throw Error(ErrorCode::Config, "max_in_flight: must be > 0");
  if (output_dir.empty()) throw Error(ErrorCode::Config, "output_dir: must not be empty");
  if (retry_max_attempts < 1) throw Error(ErrorCode::Config, "retry.max_attempts: must be >= 1");
  if (retry_base_delay_ms < 0) throw Error(ErrorCode::Config, "retry.base_delay_ms: must be >= 0");
  if (!(retry_jitter >= 0.0 && retry_jitter < 1.0)) {
    throw Error(ErrorCode::Config, "retry.jitter: must lie in [0, 1)");
  }
}

GatewayOptions RunConfig::gateway_options() const {
  GatewayOptions o;
  o.retry.max_attempts = retry_max_attempts;
  o.retry.base_delay = std::chrono::milliseconds(retry_base_delay_ms);
  o.retry.jitter = retry_jitter;
  o.max_in_flight = max_in_flight;
  return o;
}

std::string RunConfig::digest() const {
  json j = to_json(*this);
  for (const char* key : {"output_dir", "reports_dir", "ground_truth", "parallelism", "max_in_flight"}) {
    j.erase(key);
  }
  return sha256_hex(j.dump());
}

json to_json(const DistillationConfig& cfg) {
  return json{{"excluded_fields", cfg.excluded_fields},
              {"token_budget", cfg.token_budget},
              {"section_priority", cfg.section_priority},
              {"max_calls_per_process", cfg.max_calls_per_process}};
}

DistillationConfig distillation_config_from_json(const json& j) {
  const std::string f = "distillation";
  require_object(j, f);
  reject_unknown(j, {"excluded_fields", "token_budget", "section_priority", "max_calls_per_process"}, f);
  DistillationConfig cfg;
  if (j.contains("excluded_fields")) cfg.excluded_fields = get_field<std::vector<std::string>>(j, "excluded_fields", f);
  if (j.contains("token_budget")) cfg.token_budget = get_count(j, "token_budget", f);
  if (j.contains("section_priority")) cfg.section_priority = get_field<std::vector<std::string>>(j, "section_priority", f);
  if (j.contains("max_calls_per_process")) cfg.max_calls_per_process = get_count(j, "max_calls_per_process", f);
  return cfg;
}

json to_json(const ModelProfile& p) {
  json j{{"model_name", p.model_name},
         {"endpoint_url", p.endpoint_url},
         {"api_key_env", p.api_key_env},
         {"quantization_hint", p.quantization_hint ? json(quantization_hint_name(*p.quantization_hint)) : json(nullptr)},
         {"max_output_tokens", p.max_output_tokens},
         {"temperature", p.temperature},
         {"timeout_ms", p.timeout.count()},
         {"embedding_batch_limit", p.embedding_batch_limit}};
  if (p.is_mock()) j["mock"] = p.mock;
  return j;
}

ModelProfile model_profile_from_json(const json& j, const std::string& field) {
  require_object(j, field);
  reject_unknown(j,
                 {"model_name", "endpoint_url", "api_key", "api_key_env", "quantization_hint",
                  "max_output_tokens", "temperature", "timeout_ms", "embedding_batch_limit", "mock"},
                 field);
  ModelProfile p;
  if (j.contains("model_name")) p.model_name = get_field<std::string>(j, "model_name", field);
  if (j.contains("endpoint_url")) p.endpoint_url = get_field<std::string>(j, "endpoint_url", field);
  if (j.contains("api_key")) p.api_key = get_field<std::string>(j, "api_key", field);
  if (j.contains("api_key_env")) p.api_key_env = get_field<std::string>(j, "api_key_env", field);
  if (j.contains("quantization_hint") && !j.at("quantization_hint").is_null()) {
    try {
      p.quantization_hint = parse_quantization_hint(get_field<std::string>(j, "quantization_hint", field));
    } catch (const Error& e) {
      throw Error(ErrorCode::Config, field + ".quantization_hint: " + e.what());
    }
  }
  if (j.contains("max_output_tokens")) p.max_output_tokens = get_field<int>(j, "max_output_tokens", field);
  if (j.contains("temperature")) p.temperature = get_field<double>(j, "temperature", field);
  if (j.contains("timeout_ms")) p.timeout = std::chrono::milliseconds(get_field<std::int64_t>(j, "timeout_ms", field));
  if (j.contains("embedding_batch_limit")) p.embedding_batch_limit = get_count(j, "embedding_batch_limit", field);
  if (j.contains("mock")) {
    p.mock = j.at("mock");
    require_object(p.mock, field + ".mock");
  }
  return p;
}

json to_json(const RunConfig& cfg) {
  json profiles = json::array();
  for (const auto& p : cfg.profiles) profiles.push_back(to_json(p));
  return json{{"distillation", to_json(cfg.distillation)},
              {"template", to_json(cfg.prompt)},
              {"profiles", std::move(profiles)},
              {"embedder_profile", to_json(cfg.embedder_profile)},
              {"keyphrase_k", cfg.keyphrase_k},
              {"parallelism", cfg.parallelism},
              {"max_in_flight", cfg.max_in_flight},
              {"output_dir", cfg.output_dir.string()},
              {"reports_dir", cfg.reports_dir.string()},
              {"ground_truth", cfg.ground_truth.string()},
              {"retry", json{{"max_attempts", cfg.retry_max_attempts},
                             {"base_delay_ms", cfg.retry_base_delay_ms},
                             {"jitter", cfg.retry_jitter}}},
              {"offline", cfg.offline}};
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  const std::string f = "config";
  require_object(j, f);
  reject_unknown(j,
                 {"distillation", "template", "profiles", "embedder_profile", "keyphrase_k",
                  "parallelism", "max_in_flight", "output_dir", "reports_dir", "ground_truth",
                  "retry", "offline"},
                 f);
  RunConfig cfg = RunConfig::defaults();
  if (j.contains("distillation")) cfg.distillation = distillation_config_from_json(j.at("distillation"));
  if (j.contains("template")) cfg.prompt = prompt_template_from_json(j.at("template"));
  if (j.contains("profiles")) {
    const json& arr = j.at("profiles");
    if (!arr.is_array()) throw Error(ErrorCode::Config, "profiles: expected an array");
    cfg.profiles.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      cfg.profiles.push_back(model_profile_from_json(arr[i], "profiles[" + std::to_string(i) + "]"));
    }
  }
  if (j.contains("embedder_profile")) {
    cfg.embedder_profile = model_profile_from_json(j.at("embedder_profile"), "embedder_profile");
  }
  if (j.contains("keyphrase_k")) cfg.keyphrase_k = get_count(j, "keyphrase_k", f);
  if (j.contains("parallelism")) cfg.parallelism = get_count(j, "parallelism", f);
  if (j.contains("max_in_flight")) cfg.max_in_flight = get_count(j, "max_in_flight", f);
  for (auto [key, target] : {std::pair{"output_dir", &cfg.output_dir},
                             std::pair{"reports_dir", &cfg.reports_dir},
                             std::pair{"ground_truth", &cfg.ground_truth}}) {
    if (j.contains(key)) *target = resolve(get_field<std::string>(j, key, f), base_dir);
  }
  if (j.contains("offline")) cfg.offline = get_field<bool>(j, "offline", f);
  if (j.contains("retry")) {
    const json& r = j.at("retry");
    require_object(r, "retry");
    reject_unknown(r, {"max_attempts", "base_delay_ms", "jitter"}, "retry");
    if (r.contains("max_attempts")) cfg.retry_max_attempts = get_field<int>(r, "max_attempts", "retry");
    if (r.contains("base_delay_ms")) cfg.retry_base_delay_ms = get_field<int>(r, "base_delay_ms", "retry");
    if (r.contains("jitter")) cfg.retry_jitter = get_field<double>(r, "jitter", "retry");
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Config, "config: invalid JSON in " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, fs::absolute(path).parent_path());
}

}  // namespace malsum
