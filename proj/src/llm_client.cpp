#include "treesql/llm_client.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>
#include <thread>

#include "treesql/errors.hpp"
#include "treesql/text.hpp"

namespace treesql {

using nlohmann::json;

void normalize_l2(std::vector<double>& v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  if (ss <= 0.0) return;
  const double inv = 1.0 / std::sqrt(ss);
  for (double& x : v) x *= inv;
}

double cosine_unit(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractViolation("cosine of vectors with different dimensions");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot;
}

void EndpointSettings::apply_environment() {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  if (auto v = env("TREESQL_BASE_URL")) base_url = *v;
  if (auto v = env("OPENAI_API_KEY")) api_key = *v;
  if (auto v = env("TREESQL_API_KEY")) api_key = *v;
  if (auto v = env("TREESQL_CHAT_MODEL")) chat_model = *v;
  if (auto v = env("TREESQL_EMBEDDING_MODEL")) embedding_model = *v;
  if (auto v = env("TREESQL_CACHE_DIR")) cache_dir = *v;
}

// ---------------------------------------------------------------------------

std::string post_with_retry(Transport& transport, const std::string& path, const std::string& body,
                            const RetryPolicy& retry, std::atomic<std::size_t>* call_counter) {
  std::chrono::milliseconds backoff = retry.initial_backoff;
  std::string last_error;
  for (std::size_t attempt = 0;; ++attempt) {
    try {
      if (call_counter) ++*call_counter;
      HttpResponse resp = transport.post_json(path, body);
      if (resp.status >= 200 && resp.status < 300) return resp.body;
      if (resp.status != 429 && resp.status < 500)
        throw ProtocolError("endpoint returned HTTP " + std::to_string(resp.status) + ": " + resp.body.substr(0, 500));
      last_error = "HTTP " + std::to_string(resp.status);
    } catch (const TransportError& e) {
      last_error = e.what();
    }
    if (attempt >= retry.max_retries) break;
    spdlog::warn("request to {} failed ({}); retrying in {} ms", path, last_error, backoff.count());
    if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
  throw TransportError("retry budget exhausted for " + path + ": " + last_error);
}

// ---------------------------------------------------------------------------

CompletionCache::CompletionCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string CompletionCache::key(const std::string& model, const std::string& prompt, double temperature,
                                 std::size_t sample_index) {
  std::ostringstream os;
  os.precision(17);
  os << model << '\x1f' << text::sha256_hex(prompt) << '\x1f' << temperature << '\x1f' << sample_index;
  return text::sha256_hex(os.str());
}

std::filesystem::path CompletionCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<std::string> CompletionCache::get(const std::string& key) const {
  std::ifstream in(path_for(key), std::ios::binary);
  if (!in) return std::nullopt;
  try {
    json j = json::parse(in);
    return j.at("response").get<std::string>();
  } catch (const std::exception& e) {
    spdlog::warn("ignoring unreadable cache entry {}: {}", key, e.what());
    return std::nullopt;
  }
}

void CompletionCache::put(const std::string& key, const std::string& value) const {
  auto target = path_for(key);
  std::filesystem::create_directories(target.parent_path());
  std::ostringstream tid;
  tid << std::this_thread::get_id();
  auto tmp = target;
  tmp += ".tmp." + tid.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write cache file " + tmp.string());
    out << json{{"response", value}}.dump();
  }
  std::filesystem::rename(tmp, target);
}

// ---------------------------------------------------------------------------

OpenAIChatModel::OpenAIChatModel(std::shared_ptr<Transport> transport, std::string model, RetryPolicy retry,
                                 std::shared_ptr<CompletionCache> cache)
    : transport_(std::move(transport)), model_(std::move(model)), retry_(retry), cache_(std::move(cache)) {}

std::vector<std::string> OpenAIChatModel::request_samples(const CompletionRequest& req, std::size_t n) {
  json body = {{"model", model_},
               {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})},
               {"temperature", req.temperature},
               {"max_tokens", req.max_tokens},
               {"n", n}};
  std::string raw = post_with_retry(*transport_, "/chat/completions", body.dump(), retry_, &transport_calls_);
  std::vector<std::string> out;
  try {
    json j = json::parse(raw);
    for (const auto& choice : j.at("choices")) {
      const auto& content = choice.at("message").at("content");
      out.push_back(content.is_null() ? std::string() : content.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed chat completion response: ") + e.what());
  }
  if (out.empty()) throw ProtocolError("chat completion response has no choices");
  return out;
}

std::vector<std::string> OpenAIChatModel::complete(const CompletionRequest& req) {
  if (req.n_samples < 1) throw ContractViolation("n_samples must be >= 1");
  std::vector<std::optional<std::string>> slots(req.n_samples);
  std::vector<std::string> keys(req.n_samples);
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < req.n_samples; ++i) {
    if (cache_) {
      keys[i] = CompletionCache::key(model_, req.prompt, req.temperature, req.sample_offset + i);
      slots[i] = cache_->get(keys[i]);
    }
    if (!slots[i]) missing.push_back(i);
  }
  std::size_t filled = 0;
  // Endpoints may return fewer choices than requested; keep asking.
  while (filled < missing.size()) {
    auto batch = request_samples(req, missing.size() - filled);
    for (auto& text : batch) {
      if (filled >= missing.size()) break;
      std::size_t i = missing[filled++];
      if (cache_) cache_->put(keys[i], text);
      slots[i] = std::move(text);
    }
  }
  std::vector<std::string> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

OpenAIEmbedder::OpenAIEmbedder(std::shared_ptr<Transport> transport, std::string model, RetryPolicy retry)
    : transport_(std::move(transport)), model_(std::move(model)), retry_(retry) {}

std::vector<std::vector<double>> OpenAIEmbedder::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw ContractViolation("embed requires at least one text");
  json body = {{"model", model_}, {"input", texts}};
  std::string raw = post_with_retry(*transport_, "/embeddings", body.dump(), retry_);
  std::vector<std::vector<double>> out(texts.size());
  try {
    json j = json::parse(raw);
    const auto& data = j.at("data");
    if (data.size() != texts.size()) throw ProtocolError("embedding response has the wrong number of vectors");
    for (std::size_t k = 0; k < data.size(); ++k) {
      std::size_t idx = data[k].contains("index") ? data[k]["index"].get<std::size_t>() : k;
      if (idx >= out.size()) throw ProtocolError("embedding index out of range");
      out[idx] = data[k].at("embedding").get<std::vector<double>>();
      normalize_l2(out[idx]);
    }
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed embedding response: ") + e.what());
  }
  for (const auto& v : out)
    if (v.empty() || v.size() != out.front().size()) throw ProtocolError("embedding vectors differ in dimension");
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> HashEmbedder::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw ContractViolation("embed requires at least one text");
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    std::string digest = text::sha256_hex(t);
    std::uint64_t seed = std::stoull(digest.substr(0, 16), nullptr, 16);
    std::mt19937_64 rng(seed);
    std::vector<double> v(dim_);
    // Box-Muller on raw engine output keeps vectors identical across standard libraries.
    for (std::size_t i = 0; i < dim_; i += 2) {
      double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
      double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      double r = std::sqrt(-2.0 * std::log(u1));
      v[i] = r * std::cos(2.0 * M_PI * u2);
      if (i + 1 < dim_) v[i + 1] = r * std::sin(2.0 * M_PI * u2);
    }
    normalize_l2(v);
    out.push_back(std::move(v));
  }
  return out;
}

ScriptedModel& ScriptedModel::add_rule(Rule rule) {
  if (rule.responses.empty()) throw ContractViolation("scripted rule needs at least one response");
  rules_.push_back(std::move(rule));
  return *this;
}

ScriptedModel& ScriptedModel::on(std::string needle, std::vector<std::string> responses,
                                 std::optional<double> temperature) {
  Rule rule;
  rule.name = needle;
  rule.responses = std::move(responses);
  rule.matches = [needle = std::move(needle), temperature](const CompletionRequest& req) {
    if (temperature && std::fabs(*temperature - req.temperature) > 1e-12) return false;
    return text::contains(req.prompt, needle);
  };
  return add_rule(std::move(rule));
}

std::vector<std::string> ScriptedModel::complete(const CompletionRequest& req) {
  {
    std::lock_guard lock(mu_);
    calls_.push_back(req);
  }
  for (const auto& rule : rules_) {
    if (!rule.matches(req)) continue;
    std::vector<std::string> out;
    out.reserve(req.n_samples);
    for (std::size_t i = 0; i < req.n_samples; ++i)
      out.push_back(rule.responses[(req.sample_offset + i) % rule.responses.size()]);
    return out;
  }
  throw ScriptError("scripted model has no rule for prompt (tag '" + req.tag + "'): " + req.prompt.substr(0, 200));
}

std::vector<CompletionRequest> ScriptedModel::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t ScriptedModel::call_count() const {
  std::lock_guard lock(mu_);
  return calls_.size();
}

std::vector<std::string> CountingModel::complete(const CompletionRequest& req) {
  ++calls_;
  samples_ += req.n_samples;
  return inner_.complete(req);
}

}  // namespace treesql
