#pragma once
// Text generation and embedding behind one backend contract.
//
// Gateway wraps any TextBackend with a content-addressed response cache,
// bounded exponential-backoff retries and a cap on concurrent backend calls.
// OpenAIBackend speaks the chat-completions / embeddings JSON protocol.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
// <resolv.h> defines _res as a macro, which breaks Eigen.
#ifdef _res
#undef _res
#endif

#include "agentrec/common.hpp"
#include "agentrec/digest.hpp"

namespace agentrec {

struct CompletionRequest {
    std::string prompt;
    double temperature = 0.0;
    int max_tokens = 1024;
    std::string model_tag = "default";
};

class TextBackend {
  public:
    virtual ~TextBackend() = default;
    // Throws BackendError; retryable() marks transport and rate-limit failures.
    virtual std::string complete(const CompletionRequest& request) = 0;
    virtual std::vector<double> embed(const std::string& text) = 0;
    virtual std::string mode() const = 0;
};

// ---------------------------------------------------------------------------
// Deterministic embedding
// ---------------------------------------------------------------------------

inline constexpr std::size_t kHashedEmbeddingDim = 256;

// Hashed bag of lowercase alphanumeric tokens, L2-normalised.
inline std::vector<double> hashed_embedding(std::string_view text, std::size_t dim = kHashedEmbeddingDim) {
    std::vector<double> v(dim, 0.0);
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        v[fnv1a(token) % dim] += 1.0;
        token.clear();
    };
    for (unsigned char c : text) {
        if (std::isalnum(c))
            token += static_cast<char>(std::tolower(c));
        else
            flush();
    }
    flush();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        v[0] = 1.0;  // token-free text still gets a unit vector
        return v;
    }
    for (double& x : v) x /= norm;
    return v;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ArgumentError("cosine: dimension mismatch");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return dot / std::sqrt(na * nb);
}

// ---------------------------------------------------------------------------
// Response cache: cache/<first-2-hex>/<digest>.txt
// ---------------------------------------------------------------------------

class ResponseCache {
  public:
    explicit ResponseCache(std::filesystem::path root) : root_(std::move(root)) {}

    static std::string key(const CompletionRequest& r) {
        json j = {{"model_tag", r.model_tag},
                  {"prompt", r.prompt},
                  {"temperature", format_fixed(r.temperature, 6)},
                  {"max_tokens", r.max_tokens}};
        return sha256_hex(json_text(j));
    }

    std::filesystem::path path_for(const std::string& key) const { return root_ / key.substr(0, 2) / (key + ".txt"); }

    std::optional<std::string> get(const std::string& key) const {
        std::ifstream in(path_for(key), std::ios::binary);
        if (!in) return std::nullopt;
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    void put(const std::string& key, std::string_view text) const {
        const auto final_path = path_for(key);
        std::filesystem::create_directories(final_path.parent_path());
        static std::atomic<unsigned long> counter{0};
        std::ostringstream tmp_name;
        tmp_name << key << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.' << counter++;
        const auto tmp = final_path.parent_path() / tmp_name.str();
        {
            std::ofstream out(tmp, std::ios::binary);
            if (!out) throw Error("cannot write cache entry " + tmp.string());
            out.write(text.data(), static_cast<std::streamsize>(text.size()));
        }
        std::filesystem::rename(tmp, final_path);
    }

    const std::filesystem::path& root() const { return root_; }

  private:
    std::filesystem::path root_;
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds base_delay{250};
    double multiplier = 2.0;
    std::chrono::milliseconds max_delay{8000};

    std::chrono::milliseconds delay_after(int attempt) const {
        double d = static_cast<double>(base_delay.count()) * std::pow(multiplier, attempt - 1);
        d = std::min(d, static_cast<double>(max_delay.count()));
        return std::chrono::milliseconds(static_cast<long long>(d));
    }
};

struct GatewayOptions {
    std::optional<std::filesystem::path> cache_dir;
    bool force_cache = false;  // cache even when temperature > 0
    int max_in_flight = 8;
    RetryPolicy retry;
    std::string model_tag = "default";
    std::string embed_tag = "embed";
};

class Gateway {
  public:
    explicit Gateway(std::shared_ptr<TextBackend> backend, GatewayOptions options = {})
        : backend_(std::move(backend)),
          options_(std::move(options)),
          slots_(std::max(1, options_.max_in_flight)) {
        if (!backend_) throw ArgumentError("gateway needs a backend");
        if (options_.cache_dir) cache_.emplace(*options_.cache_dir);
    }

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    std::string complete(const std::string& prompt) {
        CompletionRequest r;
        r.prompt = prompt;
        r.model_tag = options_.model_tag;
        return complete(r);
    }

    std::string complete(const CompletionRequest& request) {
        if (request.prompt.empty()) throw ArgumentError("completion prompt is empty");
        if (request.temperature < 0) throw ArgumentError("temperature must be non-negative");
        if (request.max_tokens <= 0) throw ArgumentError("max_tokens must be positive");
        const bool cacheable = cache_ && (request.temperature == 0.0 || options_.force_cache);
        if (!cacheable) return call_with_retry([&] { return backend_->complete(request); });
        return cached(ResponseCache::key(request), [&] { return backend_->complete(request); });
    }

    std::vector<double> embed(const std::string& text) {
        if (text.empty()) throw ArgumentError("embedding text is empty");
        if (!cache_) return call_with_retry([&] { return backend_->embed(text); });
        CompletionRequest r{"embed:" + text, 0.0, 1, options_.embed_tag};
        auto serialized = cached(ResponseCache::key(r), [&] {
            auto v = backend_->embed(text);
            std::ostringstream ss;
            ss.precision(17);
            for (std::size_t i = 0; i < v.size(); ++i) ss << (i ? " " : "") << v[i];
            return ss.str();
        });
        std::vector<double> v;
        std::istringstream in(serialized);
        for (double x; in >> x;) v.push_back(x);
        return v;
    }

    TextBackend& backend() { return *backend_; }
    const GatewayOptions& options() const { return options_; }
    std::string mode() const { return backend_->mode(); }

    long backend_calls() const { return backend_calls_.load(); }
    long cache_hits() const { return cache_hits_.load(); }
    long retries() const { return retries_.load(); }

  private:
    template <class F>
    auto call_with_retry(F&& f) -> decltype(f()) {
        for (int attempt = 1;; ++attempt) {
            try {
                slots_.acquire();
                struct Release {
                    std::counting_semaphore<1024>& s;
                    ~Release() { s.release(); }
                } release{slots_};
                ++backend_calls_;
                return f();
            } catch (const BackendError& e) {
                if (!e.retryable()) throw;
                if (attempt >= options_.retry.max_attempts)
                    throw BackendError(std::string("backend failed after ") + std::to_string(attempt) +
                                           " attempts: " + e.what(),
                                       false);
                ++retries_;
                std::this_thread::sleep_for(options_.retry.delay_after(attempt));
            }
        }
    }

    template <class F>
    std::string cached(const std::string& key, F&& produce) {
        if (auto hit = cache_->get(key)) {
            ++cache_hits_;
            return *hit;
        }
        // Identical concurrent requests share one backend call.
        std::promise<std::string> promise;
        std::shared_future<std::string> future;
        bool owner = false;
        {
            std::lock_guard lock(pending_mutex_);
            auto it = pending_.find(key);
            if (it != pending_.end()) {
                future = it->second;
            } else {
                future = promise.get_future().share();
                pending_.emplace(key, future);
                owner = true;
            }
        }
        if (!owner) {
            ++cache_hits_;
            return future.get();
        }
        try {
            std::string text;
            if (auto hit = cache_->get(key)) {
                ++cache_hits_;
                text = *hit;
            } else {
                text = call_with_retry(produce);
                cache_->put(key, text);
            }
            promise.set_value(text);
            std::lock_guard lock(pending_mutex_);
            pending_.erase(key);
            return text;
        } catch (...) {
            promise.set_exception(std::current_exception());
            std::lock_guard lock(pending_mutex_);
            pending_.erase(key);
            throw;
        }
    }

    std::shared_ptr<TextBackend> backend_;
    GatewayOptions options_;
    std::optional<ResponseCache> cache_;
    std::counting_semaphore<1024> slots_;
    std::mutex pending_mutex_;
    std::map<std::string, std::shared_future<std::string>> pending_;
    std::atomic<long> backend_calls_{0};
    std::atomic<long> cache_hits_{0};
    std::atomic<long> retries_{0};
};

// ---------------------------------------------------------------------------
// Live backend (OpenAI-compatible)
// ---------------------------------------------------------------------------

struct LiveConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key;
    std::string model = "gpt-3.5-turbo";
    std::string embed_model = "text-embedding-ada-002";
    std::chrono::seconds timeout{60};

    // AGENTREC_API_BASE, AGENTREC_API_KEY (or OPENAI_API_KEY), AGENTREC_MODEL, AGENTREC_EMBED_MODEL.
    static LiveConfig from_env() {
        LiveConfig c;
        auto env = [](const char* name) -> std::optional<std::string> {
            const char* v = std::getenv(name);
            if (!v || !*v) return std::nullopt;
            return std::string(v);
        };
        if (auto v = env("AGENTREC_API_BASE")) c.base_url = *v;
        if (auto v = env("AGENTREC_API_KEY"))
            c.api_key = *v;
        else if (auto k = env("OPENAI_API_KEY"))
            c.api_key = *k;
        if (auto v = env("AGENTREC_MODEL")) c.model = *v;
        if (auto v = env("AGENTREC_EMBED_MODEL")) c.embed_model = *v;
        return c;
    }
};

class OpenAIBackend : public TextBackend {
  public:
    explicit OpenAIBackend(LiveConfig config) : config_(std::move(config)) {
        const auto scheme_end = config_.base_url.find("://");
        if (scheme_end == std::string::npos) throw ArgumentError("api base must include a scheme: " + config_.base_url);
        const auto path_start = config_.base_url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            host_ = config_.base_url;
        } else {
            host_ = config_.base_url.substr(0, path_start);
            prefix_ = config_.base_url.substr(path_start);
        }
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }

    std::string complete(const CompletionRequest& request) override {
        json body = {{"model", config_.model},
                     {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
                     {"temperature", request.temperature},
                     {"max_tokens", request.max_tokens}};
        auto reply = post("/chat/completions", body);
        try {
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            throw BackendError(std::string("malformed chat completion reply: ") + e.what(), false);
        }
    }

    std::vector<double> embed(const std::string& text) override {
        json body = {{"model", config_.embed_model}, {"input", text}};
        auto reply = post("/embeddings", body);
        try {
            return reply.at("data").at(0).at("embedding").get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw BackendError(std::string("malformed embedding reply: ") + e.what(), false);
        }
    }

    std::string mode() const override { return "live"; }

  private:
    json post(const std::string& path, const json& body) {
        httplib::Client client(host_);
        client.set_connection_timeout(std::chrono::seconds(10));
        client.set_read_timeout(config_.timeout);
        client.set_write_timeout(config_.timeout);
        httplib::Headers headers;
        if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
        auto res = client.Post(prefix_ + path, headers, json_text(body), "application/json");
        if (!res) throw BackendError("transport failure: " + httplib::to_string(res.error()), true);
        if (res->status == 429 || res->status >= 500)
            throw BackendError("HTTP " + std::to_string(res->status) + " from " + host_, true);
        if (res->status != 200)
            throw BackendError("HTTP " + std::to_string(res->status) + " from " + host_ + ": " + res->body, false);
        try {
            return json::parse(res->body);
        } catch (const json::exception& e) {
            throw BackendError(std::string("reply is not JSON: ") + e.what(), false);
        }
    }

    LiveConfig config_;
    std::string host_;
    std::string prefix_;
};

}  // namespace agentrec
