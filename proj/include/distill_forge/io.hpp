#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "distill_forge/error.hpp"

namespace distill_forge::io {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temp file and renames it over the target, so readers
/// never observe a partially written file.
inline void write_file_atomic(const fs::path& path, std::string_view content) {
  static std::atomic<unsigned long> counter{0};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw io_error("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw io_error("cannot rename into " + path.string() + ": " + ec.message());
  }
}

/// Calls `fn(record, line_number)` for every non-blank line. Parse errors are
/// reported with the file name and 1-based line number.
inline void for_each_jsonl(
    const fs::path& path,
    const std::function<void(const json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw validation_error(path.string() + ":" + std::to_string(line_no) +
                             ": malformed JSON: " + e.what());
    }
    try {
      fn(record, line_no);
    } catch (const json::exception& e) {
      throw validation_error(path.string() + ":" + std::to_string(line_no) +
                             ": " + e.what());
    }
  }
}

template <typename T, typename Decode>
std::vector<T> read_jsonl(const fs::path& path, Decode decode) {
  std::vector<T> out;
  for_each_jsonl(path, [&](const json& j, std::size_t line_no) {
    try {
      out.push_back(decode(j));
    } catch (const Error& e) {
      throw validation_error(path.string() + ":" + std::to_string(line_no) +
                             ": " + e.what());
    }
  });
  return out;
}

/// One compact JSON document per line, '\n' terminated.
template <typename Range, typename Encode>
std::string to_jsonl(const Range& items, Encode encode) {
  std::string out;
  for (const auto& item : items) {
    out += encode(item).dump();
    out.push_back('\n');
  }
  return out;
}

inline json require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw validation_error(std::string("missing field '") + key + "'");
  return *it;
}

}  // namespace distill_forge::io
