#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace treesql {

struct CompletionRequest {
  std::string prompt;
  double temperature = 0.0;
  std::size_t n_samples = 1;
  std::size_t max_tokens = 2048;
  /// Free-form label for logs (usually the action name).
  std::string tag;
  /// Index of the first sample; distinct offsets give distinct cache slots
  /// for independent draws of the same prompt.
  std::size_t sample_offset = 0;
};

/// Chat-completion model. Implementations must be safe for concurrent calls.
class ChatModel {
 public:
  virtual ~ChatModel() = default;
  /// Returns exactly `req.n_samples` completions.
  virtual std::vector<std::string> complete(const CompletionRequest& req) = 0;
};

/// Text embedding model returning L2-normalized vectors.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

void normalize_l2(std::vector<double>& v);
double cosine_unit(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------
// HTTP plumbing

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// POSTs a JSON body to `path` (relative to the endpoint base URL). Throws
/// TransportError when the connection itself fails.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post_json(const std::string& path, const std::string& body) = 0;
};

struct EndpointSettings {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string chat_model = "gpt-4o-mini";
  std::string embedding_model = "text-embedding-3-large";
  std::filesystem::path cache_dir;
  double request_timeout_secs = 120.0;

  /// Overrides fields from TREESQL_BASE_URL, TREESQL_API_KEY (or
  /// OPENAI_API_KEY), TREESQL_CHAT_MODEL, TREESQL_EMBEDDING_MODEL and
  /// TREESQL_CACHE_DIR when they are set.
  void apply_environment();
};

class HttpTransport : public Transport {
 public:
  HttpTransport(std::string base_url, std::string api_key, double timeout_secs);
  HttpResponse post_json(const std::string& path, const std::string& body) override;

 private:
  std::string origin_;  // scheme://host[:port]
  std::string prefix_;  // path component of the base URL, e.g. /v1
  std::string api_key_;
  double timeout_secs_;
};

struct RetryPolicy {
  std::size_t max_retries = 3;
  std::chrono::milliseconds initial_backoff{1000};
};

/// Content-addressed response store: one file per (model, prompt, temperature,
/// sample index), written through a temporary file and an atomic rename.
class CompletionCache {
 public:
  explicit CompletionCache(std::filesystem::path dir);

  static std::string key(const std::string& model, const std::string& prompt, double temperature,
                         std::size_t sample_index);
  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& value) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& key) const;
  std::filesystem::path dir_;
};

/// OpenAI-compatible /chat/completions client with retries and an optional cache.
class OpenAIChatModel : public ChatModel {
 public:
  OpenAIChatModel(std::shared_ptr<Transport> transport, std::string model, RetryPolicy retry = {},
                  std::shared_ptr<CompletionCache> cache = nullptr);

  std::vector<std::string> complete(const CompletionRequest& req) override;

  std::size_t transport_calls() const { return transport_calls_.load(); }

 private:
  std::vector<std::string> request_samples(const CompletionRequest& req, std::size_t n);

  std::shared_ptr<Transport> transport_;
  std::string model_;
  RetryPolicy retry_;
  std::shared_ptr<CompletionCache> cache_;
  std::atomic<std::size_t> transport_calls_{0};
};

class OpenAIEmbedder : public Embedder {
 public:
  OpenAIEmbedder(std::shared_ptr<Transport> transport, std::string model, RetryPolicy retry = {});
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

 private:
  std::shared_ptr<Transport> transport_;
  std::string model_;
  RetryPolicy retry_;
};

/// Sends a request with exponential backoff on transport failures, 429 and
/// 5xx. Other non-2xx statuses raise ProtocolError immediately.
std::string post_with_retry(Transport& transport, const std::string& path, const std::string& body,
                            const RetryPolicy& retry, std::atomic<std::size_t>* call_counter = nullptr);

// ---------------------------------------------------------------------------
// Offline models

/// Deterministic pseudo-random unit vector per distinct text.
class HashEmbedder : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 64) : dim_(dim) {}
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

 private:
  std::size_t dim_;
};

/// Raised when a scripted model receives a prompt none of its rules match.
class ScriptError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Canned responses selected by prompt predicates. Sample i of a request
/// returns responses[(sample_offset + i) % responses.size()] of the first
/// matching rule, so outputs are a pure function of the request.
class ScriptedModel : public ChatModel {
 public:
  struct Rule {
    std::string name;
    std::function<bool(const CompletionRequest&)> matches;
    std::vector<std::string> responses;
  };

  ScriptedModel& add_rule(Rule rule);
  /// Matches prompts containing `needle`, optionally only at one temperature.
  ScriptedModel& on(std::string needle, std::vector<std::string> responses,
                    std::optional<double> temperature = std::nullopt);

  std::vector<std::string> complete(const CompletionRequest& req) override;

  std::vector<CompletionRequest> calls() const;
  std::size_t call_count() const;

 private:
  std::vector<Rule> rules_;
  mutable std::mutex mu_;
  std::vector<CompletionRequest> calls_;
};

/// Decorator counting logical calls and samples, for per-item reports.
class CountingModel : public ChatModel {
 public:
  explicit CountingModel(ChatModel& inner) : inner_(inner) {}
  std::vector<std::string> complete(const CompletionRequest& req) override;
  std::size_t calls() const { return calls_.load(); }
  std::size_t samples() const { return samples_.load(); }

 private:
  ChatModel& inner_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> samples_{0};
};

}  // namespace treesql
