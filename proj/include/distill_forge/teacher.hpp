#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "distill_forge/error.hpp"
#include "distill_forge/hash.hpp"
#include "distill_forge/io.hpp"
#include "distill_forge/json_text.hpp"
#include "distill_forge/parallel.hpp"
#include "distill_forge/prompting.hpp"

namespace distill_forge::teacher {

namespace fs = std::filesystem;
using prompting::PromptRecord;

struct TeacherConfig {
  /// Full chat-completions URL, or a base URL to which /v1/chat/completions
  /// is appended.
  std::string endpoint_url = "https://api.openai.com/v1/chat/completions";
  std::string model_name = "gpt-3.5-turbo-1106";
  double temperature = 0.0;
  bool json_mode = true;
  std::string role = "user";
  int max_retries = 4;
  /// Delay before retry k is backoff[min(k, size-1)].
  std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(1000),
                                                 std::chrono::milliseconds(2000),
                                                 std::chrono::milliseconds(4000),
                                                 std::chrono::milliseconds(8000)};
  std::size_t max_concurrent_requests = 4;
  fs::path cache_dir;  // empty: no cache
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::seconds timeout{120};
  /// label_batch aborts once more than this many prompts have failed.
  std::size_t max_failures = 10;

  void validate() const {
    if (!(temperature >= 0.0)) throw validation_error("teacher temperature must be >= 0");
    if (max_retries < 0) throw validation_error("max_retries must be >= 0");
    if (max_concurrent_requests < 1) throw validation_error("max_concurrent_requests must be >= 1");
    if (role != "user" && role != "system") throw validation_error("role must be user or system");
  }
};

struct TeacherLabel {
  std::string sample_id;
  std::string raw_response;
  bool parsed_ok = false;
  std::string canonical_target;
  std::string model_name;
  std::string request_fingerprint;

  bool operator==(const TeacherLabel&) const = default;
};

inline json encode(const TeacherLabel& l) {
  return {{"sample_id", l.sample_id},
          {"raw_response", l.raw_response},
          {"parsed_ok", l.parsed_ok},
          {"canonical_target", l.canonical_target},
          {"model_name", l.model_name},
          {"request_fingerprint", l.request_fingerprint}};
}

inline TeacherLabel decode_label(const json& j) {
  return {j.at("sample_id").get<std::string>(),        j.at("raw_response").get<std::string>(),
          j.at("parsed_ok").get<bool>(),               j.at("canonical_target").get<std::string>(),
          j.at("model_name").get<std::string>(),       j.at("request_fingerprint").get<std::string>()};
}

/// Upstream failure. `retriable` marks transport errors, 429 and 5xx that
/// survived every retry.
class TeacherError : public Error {
 public:
  TeacherError(const std::string& what, bool retriable)
      : Error(ErrorKind::kUpstream, what), retriable_(retriable) {}
  bool retriable() const noexcept { return retriable_; }

 private:
  bool retriable_;
};

/// SHA-256 over (model, prompt, temperature) with length-prefixed fields.
/// Temperature enters in its shortest round-trip decimal spelling.
inline std::string request_fingerprint(std::string_view model, std::string_view prompt,
                                       double temperature) {
  return Sha256()
      .update_field("distill-forge/teacher/v1")
      .update_field(model)
      .update_field(prompt)
      .update_field(json(temperature).dump())
      .hex_digest();
}

/// Builds the label for a message content string.
inline TeacherLabel make_label(const PromptRecord& prompt, std::string content,
                               const TeacherConfig& config, std::string fingerprint) {
  TeacherLabel label;
  label.sample_id = prompt.sample_id;
  label.model_name = config.model_name;
  label.request_fingerprint = std::move(fingerprint);
  if (auto minified = minify_json(content)) {
    label.parsed_ok = true;
    label.canonical_target = *std::move(minified);
  } else {
    label.parsed_ok = false;
    label.canonical_target = content;
  }
  label.raw_response = std::move(content);
  return label;
}

inline json chat_request_body(const TeacherConfig& config, std::string_view prompt) {
  json body = {{"model", config.model_name},
               {"temperature", config.temperature},
               {"messages", json::array({{{"role", config.role}, {"content", prompt}}})}};
  if (config.json_mode) body["response_format"] = {{"type", "json_object"}};
  return body;
}

/// Message content of the first choice of a chat-completions response body.
inline std::string extract_content(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw TeacherError(std::string("teacher response is not JSON: ") + e.what(), false);
  }
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw TeacherError("teacher message content is not a string", false);
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw TeacherError(std::string("malformed chat-completions response: ") + e.what(), false);
  }
}

// --- transport --------------------------------------------------------------

struct HttpResult {
  int status = 0;  // 0: transport failure
  std::string body;
  std::string error;
  std::optional<std::chrono::milliseconds> retry_after;
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual HttpResult post(const std::string& body) = 0;
};

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path;
};

inline ParsedUrl parse_endpoint(const std::string& url) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) {
    throw validation_error("invalid endpoint url '" + url + "'");
  }
  std::string path = m[2].matched ? m[2].str() : std::string();
  if (path.empty() || path == "/") path = "/v1/chat/completions";
  return {m[1].str(), path};
}

/// POSTs to an OpenAI-compatible endpoint. One httplib client per request,
/// so the transport can be shared across threads.
class HttpTransport : public ChatTransport {
 public:
  explicit HttpTransport(const TeacherConfig& config)
      : url_(parse_endpoint(config.endpoint_url)), timeout_(config.timeout) {
    if (const char* key = std::getenv(config.api_key_env.c_str()); key != nullptr && *key) {
      api_key_ = key;
    }
  }

  HttpResult post(const std::string& body) override {
    httplib::Client client(url_.scheme_host_port);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(url_.path, headers, body, "application/json");
    HttpResult out;
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    if (res->has_header("Retry-After")) {
      try {
        out.retry_after = std::chrono::seconds(std::stoi(res->get_header_value("Retry-After")));
      } catch (const std::exception&) {
      }
    }
    return out;
  }

 private:
  ParsedUrl url_;
  std::chrono::seconds timeout_;
  std::string api_key_;
};

/// Offline teacher: answers every key requested in the prompt's closing
/// paragraph with a word picked deterministically from the document. One
/// prompt in 25 gets a prose reply, so parse failures occur in dry runs.
class StubTransport : public ChatTransport {
 public:
  HttpResult post(const std::string& body) override {
    const json request = json::parse(body);
    const std::string prompt = request.at("messages").at(0).at("content").get<std::string>();
    const std::string digest = sha256_hex(prompt);
    HttpResult out;
    out.status = 200;
    out.body = json({{"id", "stub-" + digest.substr(0, 12)},
                     {"object", "chat.completion"},
                     {"model", request.value("model", std::string("stub"))},
                     {"choices", json::array({{{"index", 0},
                                               {"message", {{"role", "assistant"},
                                                            {"content", answer(prompt, digest)}}},
                                               {"finish_reason", "stop"}}})}})
                   .dump();
    return out;
  }

  static std::string answer(const std::string& prompt, const std::string& digest) {
    if (std::stoul(digest.substr(0, 8), nullptr, 16) % 25 == 0) {
      return "I cannot answer this question based on the document.";
    }
    const auto doc = prompting::extract_document(prompt).value_or(prompt);
    const auto words = text::split_whitespace(doc);
    const auto clause_pos = prompt.rfind("\n\n");
    const std::string clause =
        clause_pos == std::string::npos ? std::string() : prompt.substr(clause_pos);
    std::vector<std::string> keys;
    static const std::regex kQuoted(R"re("((?:[^"\\]|\\.)*)")re");
    for (auto it = std::sregex_iterator(clause.begin(), clause.end(), kQuoted);
         it != std::sregex_iterator(); ++it) {
      keys.push_back(json::parse((*it)[0].str()).get<std::string>());
    }
    if (keys.empty()) keys.push_back("1");
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (const auto& key : keys) {
      const std::string h = sha256_hex(digest + "/" + key);
      const auto pick = std::stoull(h.substr(0, 12), nullptr, 16);
      obj[key] = words.empty() ? std::string("unknown") : words[pick % words.size()];
    }
    return obj.dump(1);
  }
};

// --- cache ------------------------------------------------------------------

/// Content-addressed response cache: <dir>/<fp[0:2]>/<fp>.json.
class ResponseCache {
 public:
  explicit ResponseCache(fs::path dir) : dir_(std::move(dir)) {}

  bool enabled() const { return !dir_.empty(); }

  std::optional<std::string> get(const std::string& fingerprint) const {
    if (!enabled()) return std::nullopt;
    const fs::path p = path_for(fingerprint);
    if (!fs::exists(p)) return std::nullopt;
    try {
      const json j = json::parse(io::read_file(p));
      if (j.at("fingerprint").get<std::string>() != fingerprint) return std::nullopt;
      return j.at("content").get<std::string>();
    } catch (const std::exception&) {
      return std::nullopt;  // unreadable entries are refetched and overwritten
    }
  }

  void put(const std::string& fingerprint, const std::string& model, const std::string& content) {
    if (!enabled()) return;
    io::write_file_atomic(
        path_for(fingerprint),
        json({{"fingerprint", fingerprint}, {"model_name", model}, {"content", content}}).dump());
  }

 private:
  fs::path path_for(const std::string& fp) const { return dir_ / fp.substr(0, 2) / (fp + ".json"); }

  fs::path dir_;
};

/// Caps the number of requests in flight across all threads.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(std::size_t capacity) : capacity_(capacity) {}

  class Permit {
   public:
    explicit Permit(ConcurrencyLimiter& l) : limiter_(&l) { limiter_->acquire(); }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;
    ~Permit() { limiter_->release(); }

   private:
    ConcurrencyLimiter* limiter_;
  };

  std::size_t capacity() const { return capacity_; }
  std::size_t peak_in_flight() const {
    std::lock_guard lock(mutex_);
    return peak_;
  }

 private:
  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return in_flight_ < capacity_; });
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
  }
  void release() {
    {
      std::lock_guard lock(mutex_);
      --in_flight_;
    }
    cv_.notify_one();
  }

  std::size_t capacity_;
  std::size_t in_flight_ = 0;
  std::size_t peak_ = 0;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
};

struct RunReport {
  std::size_t cache_hits = 0;
  std::size_t calls = 0;  // prompts that needed the network
  std::size_t requests = 0;  // HTTP attempts including retries
  std::size_t failures = 0;
  std::size_t parse_failures = 0;
};

inline json encode(const RunReport& r) {
  return {{"cache_hits", r.cache_hits},
          {"calls", r.calls},
          {"requests", r.requests},
          {"failures", r.failures},
          {"parse_failures", r.parse_failures}};
}

struct BatchResult {
  std::vector<TeacherLabel> labels;  // successful labels, in input order
  std::vector<std::string> failed_sample_ids;
  RunReport report;
};

class TeacherClient {
 public:
  TeacherClient(TeacherConfig config, std::shared_ptr<ChatTransport> transport)
      : config_(std::move(config)),
        transport_(std::move(transport)),
        cache_(config_.cache_dir),
        limiter_(config_.max_concurrent_requests) {
    config_.validate();
  }

  const TeacherConfig& config() const { return config_; }
  const ConcurrencyLimiter& limiter() const { return limiter_; }

  /// Cache first; otherwise POST with retries. Safe to call concurrently.
  TeacherLabel label(const PromptRecord& prompt) {
    const std::string fp =
        request_fingerprint(config_.model_name, prompt.prompt_text, config_.temperature);
    if (auto cached = cache_.get(fp)) {
      cache_hits_.fetch_add(1);
      return make_label(prompt, *std::move(cached), config_, fp);
    }
    calls_.fetch_add(1);
    std::string content = fetch(prompt.prompt_text);
    cache_.put(fp, config_.model_name, content);
    return make_label(prompt, std::move(content), config_, fp);
  }

  /// Labels every prompt with at most max_concurrent_requests in flight.
  /// Prompts that fail are reported and skipped; the batch aborts with a
  /// TeacherError once failures exceed config.max_failures.
  BatchResult label_batch(const std::vector<PromptRecord>& prompts) {
    const RunReport before = snapshot();
    std::vector<std::optional<TeacherLabel>> slots(prompts.size());
    std::vector<std::string> errors(prompts.size());
    std::atomic<std::size_t> failures{0};
    parallel_for(
        prompts.size(),
        [&](std::size_t i) {
          try {
            slots[i] = label(prompts[i]);
          } catch (const TeacherError& e) {
            errors[i] = e.what();
            if (failures.fetch_add(1) + 1 > config_.max_failures) {
              throw TeacherError("aborting label batch after " +
                                     std::to_string(config_.max_failures + 1) +
                                     " failures; last: " + e.what(),
                                 e.retriable());
            }
          }
        },
        config_.max_concurrent_requests);
    BatchResult result;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      if (slots[i]) {
        result.labels.push_back(*std::move(slots[i]));
      } else {
        result.failed_sample_ids.push_back(prompts[i].sample_id);
      }
    }
    const RunReport after = snapshot();
    result.report.cache_hits = after.cache_hits - before.cache_hits;
    result.report.calls = after.calls - before.calls;
    result.report.requests = after.requests - before.requests;
    result.report.parse_failures = static_cast<std::size_t>(std::count_if(
        result.labels.begin(), result.labels.end(), [](const auto& l) { return !l.parsed_ok; }));
    result.report.failures = failures.load();
    return result;
  }

  RunReport snapshot() const {
    RunReport r;
    r.cache_hits = cache_hits_.load();
    r.calls = calls_.load();
    r.requests = requests_.load();
    return r;
  }

 private:
  std::chrono::milliseconds delay_for(int attempt, const HttpResult& res) const {
    std::chrono::milliseconds d{0};
    if (!config_.backoff.empty()) {
      d = config_.backoff[std::min<std::size_t>(static_cast<std::size_t>(attempt),
                                                config_.backoff.size() - 1)];
    }
    if (res.retry_after && !config_.backoff.empty()) d = std::max(d, *res.retry_after);
    return d;
  }

  std::string fetch(const std::string& prompt_text) {
    const std::string body = chat_request_body(config_, prompt_text).dump();
    for (int attempt = 0;; ++attempt) {
      HttpResult res;
      {
        ConcurrencyLimiter::Permit permit(limiter_);
        requests_.fetch_add(1);
        res = transport_->post(body);
      }
      const bool retriable = res.status == 0 || res.status == 429 || res.status >= 500;
      if (res.status == 200) return extract_content(res.body);
      const std::string what =
          res.status == 0 ? "transport error: " + res.error
                          : "teacher endpoint returned HTTP " + std::to_string(res.status);
      if (!retriable) throw TeacherError(what, false);
      if (attempt >= config_.max_retries) {
        throw TeacherError(what + " (after " + std::to_string(attempt + 1) + " attempts)", true);
      }
      std::this_thread::sleep_for(delay_for(attempt, res));
    }
  }

  TeacherConfig config_;
  std::shared_ptr<ChatTransport> transport_;
  ResponseCache cache_;
  ConcurrencyLimiter limiter_;
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> requests_{0};
};

}  // namespace distill_forge::teacher
