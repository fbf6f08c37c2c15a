#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "malsum/config.hpp"
#include "malsum/embedding.hpp"

namespace malsum::testing {

std::filesystem::path fixture(const std::string& relative);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& content);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Vectors looked up by exact string; anything else gets a digest vector.
class TableEmbedder final : public Embedder {
 public:
  explicit TableEmbedder(std::size_t dimension = 4) : dimension_(dimension) {}
  void set(const std::string& key, std::vector<double> v) { table_[key] = std::move(v); }
  std::vector<EmbeddingVector> embed_many(std::span<const std::string> inputs) override;
  std::size_t calls() const;

 private:
  std::size_t dimension_;
  std::map<std::string, std::vector<double>> table_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

class FailingEmbedder final : public Embedder {
 public:
  std::vector<EmbeddingVector> embed_many(std::span<const std::string> inputs) override;
};

/// Embeds through the mock backend's digest vectors without a gateway.
class DigestEmbedder final : public Embedder {
 public:
  explicit DigestEmbedder(std::size_t dimension = 64) : dimension_(dimension) {}
  std::vector<EmbeddingVector> embed_many(std::span<const std::string> inputs) override;

 private:
  std::size_t dimension_;
};

struct PlantedReport {
  nlohmann::json doc;
  // Hash, timestamp and size strings that must never survive distillation.
  std::vector<std::string> planted;
};

PlantedReport random_planted_report(std::mt19937& rng);

std::string random_text(std::mt19937& rng, std::size_t min_words, std::size_t max_words);

/// Sample ids of the five fixture reports, sorted.
std::vector<std::string> fixture_sample_ids();

/// tests/fixtures/<name> loaded as a RunConfig with output_dir redirected.
RunConfig fixture_config(const std::string& name, const std::filesystem::path& output_dir);

}  // namespace malsum::testing
