#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "malsum/distiller.hpp"
#include "malsum/gateway.hpp"
#include "malsum/summarizer.hpp"

namespace malsum {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// Everything a batch run needs. Loaded from a single JSON document; every
/// key is optional and unknown keys are rejected.
///
///   distillation     { excluded_fields, token_budget, section_priority,
///                      max_calls_per_process }
///   template         { system_text, user_scaffold, required_sections }
///   profiles         [ ModelProfile ... ]
///   embedder_profile ModelProfile
///   keyphrase_k, parallelism, max_in_flight, output_dir
///   reports_dir, ground_truth   (optional defaults for the batch command)
///   retry            { max_attempts, base_delay_ms, jitter }
///
/// ModelProfile keys: model_name, endpoint_url, api_key, api_key_env,
/// quantization_hint ("none" | "int4_fp16"), max_output_tokens, temperature,
/// timeout_ms, embedding_batch_limit, mock.
///
/// Relative paths are resolved against the config file's directory.
struct RunConfig {
  DistillationConfig distillation;
  PromptTemplate prompt = PromptTemplate::default_template();
  std::vector<ModelProfile> profiles;
  ModelProfile embedder_profile;
  std::size_t keyphrase_k = 10;
  std::size_t parallelism = 4;
  std::size_t max_in_flight = 4;
  std::filesystem::path output_dir = "malsum-out";
  std::filesystem::path reports_dir;
  std::filesystem::path ground_truth;
  int retry_max_attempts = 3;
  int retry_base_delay_ms = 500;
  double retry_jitter = 0.2;
  // Routes every profile to the mock backend.
  bool offline = false;

  /// Two mock profiles and a mock embedder.
  static RunConfig defaults();

  /// Throws Error(Config) with a message that starts with the field path.
  void validate() const;

  GatewayOptions gateway_options() const;

  /// SHA-256 of the canonical JSON of everything that affects record
  /// contents (paths, parallelism and secrets excluded).
  std::string digest() const;
};

/// Throws Error(Config) on structural problems; does not call validate().
RunConfig run_config_from_json(const nlohmann::json& j,
                               const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Effective configuration; api keys are never written.
nlohmann::json to_json(const RunConfig& cfg);

nlohmann::json to_json(const ModelProfile& profile);
ModelProfile model_profile_from_json(const nlohmann::json& j, const std::string& field);

nlohmann::json to_json(const DistillationConfig& cfg);
DistillationConfig distillation_config_from_json(const nlohmann::json& j);

}  // namespace malsum
