#include "support.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "malsum/error.hpp"
#include "malsum/mock_backend.hpp"

namespace malsum::testing {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path fixture(const std::string& relative) { return fs::path(MALSUM_FIXTURES_DIR) / relative; }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "malsum-test-XXXXXX").string();
  if (mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::vector<EmbeddingVector> TableEmbedder::embed_many(std::span<const std::string> inputs) {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  std::vector<EmbeddingVector> out;
  for (const auto& s : inputs) {
    auto it = table_.find(s);
    out.push_back(it != table_.end() ? EmbeddingVector(it->second)
                                     : MockBackend::digest_embedding(s, dimension_));
  }
  return out;
}

std::size_t TableEmbedder::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::vector<EmbeddingVector> FailingEmbedder::embed_many(std::span<const std::string>) {
  throw Error(ErrorCode::RetriesExhausted, "embedder down");
}

std::vector<EmbeddingVector> DigestEmbedder::embed_many(std::span<const std::string> inputs) {
  std::vector<EmbeddingVector> out;
  for (const auto& s : inputs) out.push_back(MockBackend::digest_embedding(s, dimension_));
  return out;
}

namespace {

const std::vector<std::string> kWords = {
    "malware", "process", "registry", "key",      "file",    "network", "connects", "server",
    "deletes", "writes",  "reads",    "creates",  "injects", "payload", "remote",   "thread",
    "the",     "a",       "of",       "and",      "to",      "it",      "persistence", "autorun",
    "encrypts", "documents", "ransom", "note",    "steals",  "credentials", "browser", "keystrokes",
    "downloads", "executes", "service", "mutex",  "screenshot", "command", "control", "traffic",
    "sample",  "host",    "user",     "system",   "explorer", "shadow",  "copies",   "backup"};

std::string pick(std::mt19937& rng, const std::vector<std::string>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

int uniform(std::mt19937& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

bool coin(std::mt19937& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

class Planter {
 public:
  explicit Planter(std::mt19937& rng) : rng_(rng) {}

  std::string hash() {
    static const int lengths[] = {32, 40, 64, 128};
    const int n = lengths[uniform(rng_, 0, 3)];
    const bool upper = coin(rng_, 0.2);
    std::string s;
    for (int i = 0; i < n; ++i) s += (upper ? "0123456789ABCDEF" : "0123456789abcdef")[uniform(rng_, 0, 15)];
    return remember(s);
  }

  std::string timestamp() {
    char buf[64];
    const int y = uniform(rng_, 2012, 2024), mo = uniform(rng_, 1, 12), d = uniform(rng_, 1, 28);
    const int h = uniform(rng_, 0, 23), mi = uniform(rng_, 0, 59), se = uniform(rng_, 0, 59);
    switch (uniform(rng_, 0, 4)) {
      case 0: std::snprintf(buf, sizeof buf, "%04d-%02d-%02d %02d:%02d:%02d", y, mo, d, h, mi, se); break;
      case 1: std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", y, mo, d, h, mi, se); break;
      case 2:
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%06d+02:00", y, mo, d, h, mi, se,
                      uniform(rng_, 0, 999999));
        break;
      case 3: std::snprintf(buf, sizeof buf, "%d.%04d", uniform(rng_, 1300000000, 1700000000), uniform(rng_, 0, 9999)); break;
      default: std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, mo, d); break;
    }
    return remember(buf);
  }

  // Nine digits starting with 9: never a pid, port, severity or octet.
  std::string size() {
    std::string s = "9";
    for (int i = 0; i < 8; ++i) s += static_cast<char>('0' + uniform(rng_, 0, 9));
    return remember(s);
  }

  // Free text with the occasional embedded hash or timestamp.
  std::string prose(int min_words, int max_words) {
    std::string out;
    const int n = uniform(rng_, min_words, max_words);
    for (int i = 0; i < n; ++i) {
      if (i) out += ' ';
      const int r = uniform(rng_, 0, 19);
      if (r == 0) out += hash();
      else if (r == 1) out += "at " + timestamp();
      else out += pick(rng_, kWords);
    }
    return out;
  }

  std::string path() {
    std::string p = "C:\\Users\\Admin\\AppData\\" + pick(rng_, kWords);
    if (coin(rng_, 0.3)) p += "\\" + hash();
    if (coin(rng_, 0.2)) p += "\\log_" + timestamp();
    return p + "\\" + pick(rng_, kWords) + ".exe";
  }

  std::vector<std::string> planted;

 private:
  std::string remember(std::string s) {
    planted.push_back(s);
    return s;
  }

  std::mt19937& rng_;
};

}  // namespace

PlantedReport random_planted_report(std::mt19937& rng) {
  Planter p(rng);
  json doc;
  doc["info"] = {{"started", p.timestamp()}, {"ended", p.timestamp()}, {"duration", std::stoll(p.size())},
                 {"id", uniform(rng, 1, 5000)}};
  doc["target"] = {{"category", "file"},
                   {"file", {{"name", pick(rng, kWords) + ".exe"}, {"size", std::stoll(p.size())},
                             {"md5", p.hash()}, {"sha256", p.hash()}, {"ssdeep", p.hash()}}}};

  json sigs = json::array();
  for (int i = uniform(rng, 0, 8); i > 0; --i) {
    json marks = json::array();
    for (int m = uniform(rng, 0, 20); m > 0; --m) {
      switch (uniform(rng, 0, 3)) {
        case 0: marks.push_back({{"type", "ioc"}, {"ioc", p.path()}}); break;
        case 1: marks.push_back({{"type", "ioc"}, {"ioc", p.hash()}}); break;
        case 2: marks.push_back({{"type", "call"}, {"call", {{"api", "NtWriteFile"}, {"time", p.timestamp()}}}}); break;
        default: marks.push_back(p.prose(1, 6)); break;
      }
    }
    sigs.push_back({{"name", pick(rng, kWords) + "_" + pick(rng, kWords)},
                    {"description", p.prose(3, 40)},
                    {"severity", uniform(rng, 1, 5)},
                    {"marks", marks}});
  }
  doc["signatures"] = sigs;

  json procs = json::array();
  const int nprocs = uniform(rng, 0, 4);
  for (int i = 0; i < nprocs; ++i) {
    json calls = json::array();
    for (int c = uniform(rng, 0, 60); c > 0; --c) {
      json args = json::object();
      args["FileName"] = p.path();
      if (coin(rng)) args["FileSize"] = std::stoll(p.size());
      if (coin(rng, 0.3)) args["RegionSize"] = p.size();
      if (coin(rng, 0.3)) args["CreationTime"] = p.timestamp();
      if (coin(rng, 0.3)) args["Timestamp"] = p.timestamp();
      if (coin(rng, 0.3)) args["Buffer"] = p.prose(1, 12);
      if (coin(rng, 0.2)) args["Md5"] = p.hash();
      if (coin(rng, 0.2)) args["HashValue"] = p.hash();
      calls.push_back({{"api", coin(rng) ? "NtCreateFile" : "RegSetValueExW"},
                       {"category", pick(rng, kWords)},
                       {"status", coin(rng, 0.8) ? 1 : 0},
                       {"time", p.timestamp()},
                       {"arguments", args}});
    }
    json proc = {{"pid", 1000 + i * 4}, {"ppid", i == 0 ? 500 : 1000 + (i - 1) * 4},
                 {"process_name", pick(rng, kWords) + ".exe"}, {"calls", calls},
                 {"first_seen", p.timestamp()}};
    if (coin(rng, 0.7)) proc["command_line"] = p.path() + " /id " + p.hash();
    procs.push_back(proc);
  }
  doc["behavior"] = {{"processes", procs}};

  json dns = json::array(), http = json::array(), tcp = json::array();
  for (int i = uniform(rng, 0, 6); i > 0; --i) dns.push_back({{"request", pick(rng, kWords) + ".example.net"}});
  for (int i = uniform(rng, 0, 6); i > 0; --i) {
    http.push_back({{"host", pick(rng, kWords) + ".example.net"}, {"method", "POST"},
                    {"path", "/gate.php?id=" + p.hash() + "&t=" + p.timestamp()}});
  }
  for (int i = uniform(rng, 0, 6); i > 0; --i) {
    tcp.push_back({{"dst", "10.0." + std::to_string(uniform(rng, 0, 255)) + "." + std::to_string(uniform(rng, 1, 254))},
                   {"dport", uniform(rng, 1, 65535)}});
  }
  doc["network"] = {{"dns", dns}, {"http", http}, {"tcp", tcp}, {"pcap_sha256", p.hash()}};

  json dropped = json::array();
  for (int i = uniform(rng, 0, 5); i > 0; --i) {
    dropped.push_back({{"path", p.path()}, {"type", "data"}, {"size", std::stoll(p.size())},
                       {"md5", p.hash()}, {"sha256", p.hash()}});
  }
  doc["dropped"] = dropped;
  return {std::move(doc), std::move(p.planted)};
}

std::string random_text(std::mt19937& rng, std::size_t min_words, std::size_t max_words) {
  const auto n = std::uniform_int_distribution<std::size_t>(min_words, max_words)(rng);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += coin(rng, 0.1) ? ". " : " ";
    std::string w = pick(rng, kWords);
    if (coin(rng, 0.1)) w[0] = static_cast<char>(w[0] - 'a' + 'A');
    out += w;
  }
  return out + ".";
}

std::vector<std::string> fixture_sample_ids() {
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(fixture("reports"))) ids.push_back(e.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

RunConfig fixture_config(const std::string& name, const fs::path& output_dir) {
  RunConfig cfg = load_run_config(fixture(name));
  cfg.output_dir = output_dir;
  return cfg;
}

}  // namespace malsum::testing
