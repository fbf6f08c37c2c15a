#include "malsum/distiller.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "malsum/error.hpp"
#include "malsum/text.hpp"

namespace malsum {
namespace {

constexpr std::size_t kMaxValueBytes = 200;
constexpr std::size_t kMaxMarksPerSignature = 12;
constexpr std::size_t kMinHashRun = 32;

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_hex(char c) {
  return is_digit(c) || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool glob_match(std::string_view pattern, std::string_view s) {
  // Iterative '*' matcher with single-star backtracking.
  std::size_t p = 0, i = 0, star = std::string_view::npos, mark = 0;
  while (i < s.size()) {
    if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = i;
    } else if (p < pattern.size() && lower(pattern[p]) == lower(s[i])) {
      ++p;
      ++i;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      i = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

std::size_t count_digits(std::string_view s, std::size_t pos, std::size_t n) {
  std::size_t k = 0;
  while (k < n && pos + k < s.size() && is_digit(s[pos + k])) ++k;
  return k;
}

// Length of a date or date-time stamp starting at pos, or 0.
std::size_t timestamp_length(std::string_view s, std::size_t pos) {
  auto digits_at = [&](std::size_t at, std::size_t n) { return count_digits(s, at, n) == n; };
  auto char_at = [&](std::size_t at, char c) { return at < s.size() && s[at] == c; };

  if (digits_at(pos, 10) && char_at(pos + 10, '.') && count_digits(s, pos + 11, 9) > 0 &&
      !digits_at(pos + 10, 1)) {
    // epoch seconds with a fraction: 1480945512.123
    return 11 + count_digits(s, pos + 11, 9);
  }
  if (!(digits_at(pos, 4) && char_at(pos + 4, '-') && digits_at(pos + 5, 2) &&
        char_at(pos + 7, '-') && digits_at(pos + 8, 2))) {
    return 0;
  }
  std::size_t end = pos + 10;
  if ((char_at(end, ' ') || char_at(end, 'T')) && digits_at(end + 1, 2) && char_at(end + 3, ':') &&
      digits_at(end + 4, 2)) {
    end += 6;
    if (char_at(end, ':') && digits_at(end + 1, 2)) {
      end += 3;
      if (char_at(end, '.') && count_digits(s, end + 1, 9) > 0) end += 1 + count_digits(s, end + 1, 9);
    }
    if (char_at(end, 'Z')) {
      end += 1;
    } else if ((char_at(end, '+') || char_at(end, '-')) && digits_at(end + 1, 2)) {
      end += 3;
      if (char_at(end, ':')) ++end;
      if (digits_at(end, 2)) end += 2;
    }
  }
  return end - pos;
}

std::string clean_value(std::string_view raw) {
  std::string v = scrub_value(raw);
  for (char& c : v) {
    if (static_cast<unsigned char>(c) < 0x20) c = ' ';
  }
  v = text::collapse_whitespace(v);
  if (v.size() > kMaxValueBytes) {
    std::size_t cut = kMaxValueBytes;
    // do not split a UTF-8 sequence
    while (cut > 0 && (static_cast<unsigned char>(v[cut]) & 0xC0) == 0x80) --cut;
    v.resize(cut);
    v += "…";
  }
  return v;
}

struct SectionLines {
  std::string name;
  std::vector<std::string> lines;  // lines[0] is the header
};

class Renderer {
 public:
  Renderer(const SandboxReport& r, const DistillationConfig& cfg) : report_(r), cfg_(cfg) {}

  SectionLines render(const std::string& section) const {
    if (section == kSectionSignatures) return signatures();
    if (section == kSectionProcesses) return processes();
    if (section == kSectionNetwork) return network();
    return dropped();
  }

 private:
  bool keep(std::string_view path) const { return !field_excluded(path, cfg_.excluded_fields); }

  SectionLines signatures() const {
    SectionLines s{std::string(kSectionSignatures), {"### Triggered signatures"}};
    for (const auto& sig : report_.signatures) {
      std::string line = "- " + (keep("signatures.name") ? clean_value(sig.name) : "signature");
      if (keep("signatures.severity")) line += " (severity " + std::to_string(sig.severity) + ")";
      if (keep("signatures.description") && !sig.description.empty()) {
        line += ": " + clean_value(sig.description);
      }
      s.lines.push_back(std::move(line));
      if (keep("signatures.marks") && !sig.marks.empty()) {
        std::string marks = "  indicators: ";
        const std::size_t shown = std::min(sig.marks.size(), kMaxMarksPerSignature);
        for (std::size_t i = 0; i < shown; ++i) {
          if (i) marks += "; ";
          marks += clean_value(sig.marks[i]);
        }
        if (shown < sig.marks.size()) {
          marks += "; … " + std::to_string(sig.marks.size() - shown) + " more indicators omitted";
        }
        s.lines.push_back(std::move(marks));
      }
    }
    return s;
  }

  std::string call_line(const ApiCall& call) const {
    std::string line = "  - " + clean_value(call.api_name);
    if (keep("processes.calls.category") && !call.category.empty()) {
      line += " [" + clean_value(call.category) + "]";
    }
    std::string args;
    for (const auto& [name, value] : call.arguments) {
      if (!keep("processes.calls.arguments." + name)) continue;
      if (!args.empty()) args += ", ";
      args += clean_value(name) + "=" + clean_value(value);
    }
    if (!args.empty()) line += " " + args;
    if (!call.success && keep("processes.calls.status")) line += " (failed)";
    return line;
  }

  SectionLines processes() const {
    SectionLines s{std::string(kSectionProcesses), {"### Process activity"}};
    for (const auto& p : report_.processes) {
      std::string head = "- process " +
                         (p.process_name.empty() ? std::string("<unnamed>") : clean_value(p.process_name));
      if (keep("processes.pid")) {
        head += " (pid " + std::to_string(p.pid);
        if (p.parent_pid) head += ", parent pid " + std::to_string(*p.parent_pid);
        head += ")";
      }
      s.lines.push_back(std::move(head));
      if (p.command_line && !p.command_line->empty() && keep("processes.command_line")) {
        s.lines.push_back("  command line: " + clean_value(*p.command_line));
      }
      const std::size_t shown = std::min(p.api_calls.size(), cfg_.max_calls_per_process);
      for (std::size_t i = 0; i < shown; ++i) s.lines.push_back(call_line(p.api_calls[i]));
      if (shown < p.api_calls.size()) {
        s.lines.push_back("  … " + std::to_string(p.api_calls.size() - shown) + " more calls omitted");
      }
    }
    return s;
  }

  SectionLines network() const {
    SectionLines s{std::string(kSectionNetwork), {"### Network activity"}};
    const auto& net = report_.network;
    if (keep("network.dns")) {
      for (const auto& d : net.dns_queries) s.lines.push_back("- DNS query: " + clean_value(d));
    }
    if (keep("network.http")) {
      for (const auto& h : net.http_requests) {
        std::string method = h.method.empty() ? "GET" : clean_value(h.method);
        s.lines.push_back("- HTTP " + method + " " + clean_value(h.host) + clean_value(h.path));
      }
    }
    if (keep("network.hosts")) {
      for (const auto& e : net.contacted_ips) {
        std::string line = "- contacted " + clean_value(e.address);
        if (e.port != 0) line += ":" + std::to_string(e.port);
        s.lines.push_back(std::move(line));
      }
    }
    return s;
  }

  SectionLines dropped() const {
    SectionLines s{std::string(kSectionDroppedFiles), {"### Dropped files"}};
    for (const auto& f : report_.dropped_files) {
      if (!keep("dropped.path")) break;
      std::string line = "- " + clean_value(f.path);
      if (!f.type.empty() && keep("dropped.type")) line += " (" + clean_value(f.type) + ")";
      s.lines.push_back(std::move(line));
    }
    return s;
  }

  const SandboxReport& report_;
  const DistillationConfig& cfg_;
};

std::string budget_marker(std::size_t omitted_lines, const std::vector<std::string>& omitted_sections) {
  std::string m = "… " + std::to_string(omitted_lines) + " more lines omitted";
  if (!omitted_sections.empty()) {
    m += " (omitted sections: ";
    for (std::size_t i = 0; i < omitted_sections.size(); ++i) {
      if (i) m += ", ";
      m += omitted_sections[i];
    }
    m += ")";
  }
  return m;
}

}  // namespace

const std::vector<std::string>& known_sections() {
  static const std::vector<std::string> sections = {
      std::string(kSectionSignatures), std::string(kSectionProcesses),
      std::string(kSectionNetwork), std::string(kSectionDroppedFiles)};
  return sections;
}

std::vector<std::string> DistillationConfig::default_excluded_fields() {
  return {"*time",   "*timestamp*", "*.started", "*.ended", "*duration*",
          "*size*",  "*md5*",       "*sha1*",    "*sha256*", "*sha512*",
          "*crc32*", "*ssdeep*",    "*hash*"};
}

void DistillationConfig::validate() const {
  if (token_budget == 0) throw Error(ErrorCode::Config, "distillation.token_budget: must be > 0");
  if (max_calls_per_process == 0) {
    throw Error(ErrorCode::Config, "distillation.max_calls_per_process: must be > 0");
  }
  std::vector<std::string> sorted = section_priority;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::string> known = known_sections();
  std::sort(known.begin(), known.end());
  if (sorted != known) {
    throw Error(ErrorCode::Config,
                "distillation.section_priority: must be a permutation of signatures, processes, "
                "network, dropped_files");
  }
  for (const auto& p : excluded_fields) {
    if (p.empty()) throw Error(ErrorCode::Config, "distillation.excluded_fields: empty pattern");
  }
}

std::string DistilledReport::render() const {
  std::string out;
  for (const auto& s : sections) {
    if (!out.empty()) out += "\n\n";
    out += s.text;
  }
  return out;
}

std::size_t estimate_tokens(std::string_view text) noexcept { return (text.size() + 3) / 4; }

bool field_excluded(std::string_view path, const std::vector<std::string>& patterns) {
  return std::any_of(patterns.begin(), patterns.end(),
                     [&](const std::string& p) { return glob_match(p, path); });
}

std::string scrub_value(std::string_view value) {
  std::string out;
  out.reserve(value.size());
  std::size_t i = 0;
  while (i < value.size()) {
    const bool boundary = i == 0 || !is_digit(value[i - 1]);
    if (boundary) {
      if (std::size_t n = timestamp_length(value, i); n > 0 && (i + n == value.size() || !is_digit(value[i + n]))) {
        out += "<time>";
        i += n;
        continue;
      }
    }
    if (is_hex(value[i]) && (i == 0 || !is_hex(value[i - 1]))) {
      std::size_t j = i;
      while (j < value.size() && is_hex(value[j])) ++j;
      if (j - i >= kMinHashRun) {
        out += "<hash>";
        i = j;
        continue;
      }
    }
    out.push_back(value[i++]);
  }
  return out;
}

DistilledReport distill(const SandboxReport& report, const DistillationConfig& cfg) {
  cfg.validate();
  DistilledReport out;
  out.sample_id = report.sample_id;

  Renderer renderer(report, cfg);
  std::vector<SectionLines> sections;
  for (const auto& name : cfg.section_priority) {
    SectionLines s = renderer.render(name);
    if (s.lines.size() > 1) sections.push_back(std::move(s));
  }
  if (sections.empty()) return out;

  // Flattened line sequence: (section index, line index).
  std::vector<std::pair<std::size_t, std::size_t>> order;
  for (std::size_t si = 0; si < sections.size(); ++si) {
    for (std::size_t li = 0; li < sections[si].lines.size(); ++li) order.emplace_back(si, li);
  }
  const std::size_t total = order.size();
  const std::size_t byte_budget = cfg.token_budget * 4;

  // Rendered size of the first `keep` lines, plus the marker when truncated.
  auto rendered_size = [&](std::size_t keep, const std::string& marker) {
    std::size_t bytes = 0;
    for (std::size_t k = 0; k < keep; ++k) {
      const auto [si, li] = order[k];
      bytes += sections[si].lines[li].size();
      if (k > 0) bytes += (li == 0) ? 2 : 1;  // "\n\n" between sections, "\n" within
    }
    if (!marker.empty()) bytes += 1 + marker.size();
    return bytes;
  };
  auto marker_for = [&](std::size_t keep) -> std::string {
    if (keep == total) return {};
    std::vector<std::string> dropped_sections;
    const std::size_t last_section = order[keep - 1].first;
    for (std::size_t si = last_section + 1; si < sections.size(); ++si) {
      dropped_sections.push_back(sections[si].name);
    }
    return budget_marker(total - keep, dropped_sections);
  };

  std::size_t keep = total;
  for (; keep >= 1; --keep) {
    // Never end on a lone header of a later section.
    if (keep < total && keep > 1 && order[keep - 1].second == 0) continue;
    if (rendered_size(keep, marker_for(keep)) <= byte_budget) break;
  }
  if (keep == 0) {
    throw Error(ErrorCode::BudgetTooSmall,
                "token budget " + std::to_string(cfg.token_budget) + " cannot hold the " +
                    sections.front().name + " section header");
  }

  const std::string marker = marker_for(keep);
  for (std::size_t k = 0; k < keep; ++k) {
    const auto [si, li] = order[k];
    if (li == 0) out.sections.push_back({sections[si].name, sections[si].lines[0]});
    else out.sections.back().text += "\n" + sections[si].lines[li];
  }
  if (!marker.empty()) out.sections.back().text += "\n" + marker;
  out.estimated_tokens = estimate_tokens(out.render());
  return out;
}

}  // namespace malsum
