#pragma once

// Client interface, JSON-lines transcripts for record/replay, and candidate
// requests.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "eqrl/errors.hpp"
#include "eqrl/hash.hpp"
#include "eqrl/llm/prompts.hpp"
#include "eqrl/llm/response.hpp"
#include "json.hpp"

namespace eqrl::llm {

struct GenerationParams {
  double temperature = 1.0;
  double top_p = 0.9;
  double frequency_penalty = 0.0;
  double presence_penalty = 0.0;
  int max_tokens = 1024;

  std::uint64_t fingerprint() const { return fnv1a(to_json().dump()); }

  nlohmann::json to_json() const {
    return {{"temperature", temperature},
            {"top_p", top_p},
            {"frequency_penalty", frequency_penalty},
            {"presence_penalty", presence_penalty},
            {"max_tokens", max_tokens}};
  }

  static GenerationParams from_json(const nlohmann::json& j) {
    GenerationParams p;
    p.temperature = j.value("temperature", p.temperature);
    p.top_p = j.value("top_p", p.top_p);
    p.frequency_penalty = j.value("frequency_penalty", p.frequency_penalty);
    p.presence_penalty = j.value("presence_penalty", p.presence_penalty);
    p.max_tokens = j.value("max_tokens", p.max_tokens);
    return p;
  }

  friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  // Exactly num_samples texts, or an exception.
  virtual std::vector<std::string> complete(const std::string& prompt, int num_samples,
                                            const GenerationParams& params) = 0;
  virtual std::string name() const = 0;
};

inline std::string prompt_hash(std::string_view prompt) { return hex64(fnv1a(prompt)); }

struct TranscriptRecord {
  std::string prompt_hash;
  std::string prompt;
  GenerationParams params;
  int num_samples = 0;
  std::vector<std::string> responses;
  std::string timestamp;

  nlohmann::json to_json() const {
    return {{"prompt_hash", prompt_hash}, {"prompt", prompt},       {"params", params.to_json()},
            {"num_samples", num_samples}, {"responses", responses}, {"timestamp", timestamp}};
  }

  static TranscriptRecord from_json(const nlohmann::json& j) {
    TranscriptRecord r;
    r.prompt = j.at("prompt").get<std::string>();
    r.prompt_hash = j.value("prompt_hash", prompt_hash_of(r.prompt));
    r.params = GenerationParams::from_json(j.value("params", nlohmann::json::object()));
    r.responses = j.at("responses").get<std::vector<std::string>>();
    r.num_samples = j.value("num_samples", static_cast<int>(r.responses.size()));
    r.timestamp = j.value("timestamp", "");
    return r;
  }

 private:
  static std::string prompt_hash_of(std::string_view p) { return ::eqrl::llm::prompt_hash(p); }
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Append-only JSON-lines transcript.
class Transcript {
 public:
  Transcript() = default;
  explicit Transcript(std::filesystem::path path) : path_(std::move(path)) {}

  static Transcript load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw EnvironmentError("cannot read transcript " + path.string());
    Transcript t(path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      try {
        t.records_.push_back(TranscriptRecord::from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    return t;
  }

  void append(TranscriptRecord r) {
    std::lock_guard lock(*mu_);
    if (!path_.empty()) {
      if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
      std::ofstream f(path_, std::ios::app);
      if (!f) throw EnvironmentError("cannot append to transcript " + path_.string());
      f << r.to_json().dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << "\n";
    }
    records_.push_back(std::move(r));
  }

  const std::vector<TranscriptRecord>& records() const { return records_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::vector<TranscriptRecord> records_;
  std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
};

// Answers from a transcript. The k-th identical request gets the k-th
// matching record; requests beyond the recorded count reuse the last one.
class ReplayClient : public LlmClient {
 public:
  explicit ReplayClient(const Transcript& t) {
    for (const auto& r : t.records()) by_key_[key(r.prompt_hash, r.params, r.num_samples)].push_back(r.responses);
  }

  std::vector<std::string> complete(const std::string& prompt, int n, const GenerationParams& params) override {
    std::lock_guard lock(mu_);
    const auto k = key(prompt_hash(prompt), params, n);
    const auto it = by_key_.find(k);
    if (it == by_key_.end())
      throw ReplayMiss("no transcript entry for prompt " + prompt_hash(prompt) + " with " + std::to_string(n) +
                       " samples");
    std::size_t& used = served_[k];
    const auto& rec = it->second[std::min(used, it->second.size() - 1)];
    ++used;
    return rec;
  }

  std::string name() const override { return "replay"; }

 private:
  using Key = std::tuple<std::string, std::uint64_t, int>;
  static Key key(const std::string& h, const GenerationParams& p, int n) { return {h, p.fingerprint(), n}; }

  std::map<Key, std::vector<std::vector<std::string>>> by_key_;
  std::map<Key, std::size_t> served_;
  std::mutex mu_;
};

// Forwards to another client and appends every exchange to a transcript.
class RecordingClient : public LlmClient {
 public:
  RecordingClient(LlmClient& inner, Transcript& transcript) : inner_(inner), transcript_(transcript) {}

  std::vector<std::string> complete(const std::string& prompt, int n, const GenerationParams& params) override {
    auto out = inner_.complete(prompt, n, params);
    transcript_.append({prompt_hash(prompt), prompt, params, n, out, utc_timestamp()});
    return out;
  }

  std::string name() const override { return "record(" + inner_.name() + ")"; }

 private:
  LlmClient& inner_;
  Transcript& transcript_;
};

// n parsed candidates for one expansion. A short batch is topped up once;
// anything still missing becomes an empty candidate.
inline std::vector<std::string> request_candidates(LlmClient& client, std::string_view a_i, std::string_view b, int n,
                                                   const GenerationParams& params = {}) {
  if (n < 1) throw ArgumentError("n must be >= 1");
  const std::string prompt = render_transform_prompt(a_i, b);
  std::vector<std::string> raw = client.complete(prompt, n, params);
  if (static_cast<int>(raw.size()) < n) {
    auto more = client.complete(prompt, n - static_cast<int>(raw.size()), params);
    raw.insert(raw.end(), more.begin(), more.end());
  }
  raw.resize(static_cast<std::size_t>(n));
  std::vector<std::string> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(parse_code_response(r));
  return out;
}

}  // namespace eqrl::llm
