#pragma once

// Helpers shared by every text document the project writes: tab-separated
// records with escaped fields, shortest round-trip number formatting and
// content hashing.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "qrock/error.hpp"

namespace qrock::text {

inline std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) fail(ErrorCode::InvalidArgument, "cannot format number");
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view s) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    fail(ErrorCode::SchemaViolation, "not a number: '" + std::string(s) + "'");
  return value;
}

inline std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    fail(ErrorCode::SchemaViolation, "not an unsigned integer: '" + std::string(s) + "'");
  return value;
}

inline std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string unescape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i == s.size()) fail(ErrorCode::SchemaViolation, "dangling escape");
    switch (s[i]) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default: fail(ErrorCode::SchemaViolation, "bad escape sequence");
    }
  }
  return out;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> lines(std::string_view s) {
  auto out = split(s, '\n');
  if (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

/// Comma-separated numbers, e.g. "0.1,0.3,0.2".
inline std::vector<double> parse_vector(std::string_view s) {
  std::vector<double> out;
  if (trim(s).empty()) return out;
  for (auto part : split(s, ',')) out.push_back(parse_double(trim(part)));
  return out;
}

inline std::string join_numbers(const std::vector<double>& values, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    out += format_double(values[i]);
  }
  return out;
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

inline std::string content_hash(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

/// Ordered `key<TAB>value` records, the shape of every manifest file.
class Record {
 public:
  Record() = default;

  Record& set(std::string key, std::string value) {
    for (auto& kv : entries_)
      if (kv.first == key) {
        kv.second = std::move(value);
        return *this;
      }
    entries_.emplace_back(std::move(key), std::move(value));
    return *this;
  }

  bool has(std::string_view key) const { return find(key) != nullptr; }

  const std::string& get(std::string_view key) const {
    const std::string* v = find(key);
    if (!v) fail(ErrorCode::SchemaViolation, "missing field '" + std::string(key) + "'");
    return *v;
  }

  std::string get_or(std::string_view key, std::string fallback) const {
    const std::string* v = find(key);
    return v ? *v : fallback;
  }

  double number(std::string_view key) const { return parse_double(get(key)); }
  std::uint64_t integer(std::string_view key) const { return parse_u64(get(key)); }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += escape(k) + "\t" + escape(v) + "\n";
    return out;
  }

  static Record parse(std::string_view doc) {
    Record r;
    for (auto line : lines(doc)) {
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string_view::npos) fail(ErrorCode::SchemaViolation, "record line without a tab");
      r.entries_.emplace_back(unescape(line.substr(0, tab)), unescape(line.substr(tab + 1)));
    }
    return r;
  }

  friend bool operator==(const Record&, const Record&) = default;

 private:
  const std::string* find(std::string_view key) const {
    for (const auto& kv : entries_)
      if (kv.first == key) return &kv.second;
    return nullptr;
  }

  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace qrock::text
