#include "cotforge/gateway.hpp"

#include "cotforge/label.hpp"
#include "cotforge/util.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace cotforge {

using nlohmann::ordered_json;

void validate_endpoint_config(const EndpointConfig& cfg) {
    if (cfg.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    if (cfg.timeout_s <= 0) throw ConfigError("timeout must be > 0");
    if (cfg.retry.max_attempts < 1) throw ConfigError("retry max_attempts must be >= 1");
    if (cfg.retry.multiplier < 1.0) throw ConfigError("retry multiplier must be >= 1");
    if (cfg.base_url.empty()) throw ConfigError("base_url must not be empty");
}

ordered_json ChatRequest::to_wire_json() const {
    ordered_json messages = ordered_json::array();
    messages.push_back({{"role", "system"}, {"content", system_text}});
    if (image_ref) {
        ordered_json parts = ordered_json::array();
        parts.push_back({{"type", "text"}, {"text", user_text}});
        parts.push_back({{"type", "image_url"}, {"image_url", {{"url", *image_ref}}}});
        messages.push_back({{"role", "user"}, {"content", std::move(parts)}});
    } else {
        messages.push_back({{"role", "user"}, {"content", user_text}});
    }
    ordered_json body;
    body["model"] = model;
    body["messages"] = std::move(messages);
    body["temperature"] = temperature;
    body["seed"] = sampling_seed;
    return body;
}

std::string ChatRequest::content_hash() const {
    ordered_json j = to_wire_json();
    j["attempt"] = attempt;
    return sha256_hex(j.dump());
}

ordered_json EmbedRequest::to_wire_json() const {
    ordered_json body;
    body["model"] = model;
    body["input"] = inputs;
    return body;
}

std::string EmbedRequest::content_hash() const {
    ordered_json j;
    j["endpoint"] = "embeddings";
    j["body"] = to_wire_json();
    return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Transports

namespace {

struct ParsedUrl {
    std::string origin; // scheme://host[:port]
    std::string prefix; // path prefix, e.g. /v1
};

ParsedUrl split_base_url(const std::string& base_url) {
    auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + base_url);
    auto path_start = base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path_start), prefix};
}

class LiveTransport final : public Transport {
public:
    ChatResponse chat(const ChatRequest& request, const EndpointConfig& cfg) override {
        ordered_json body = post(cfg, "/chat/completions", request.to_wire_json().dump());
        ChatResponse response;
        try {
            response.text = body.at("choices").at(0).at("message").at("content").get<std::string>();
            if (body["choices"][0].contains("finish_reason") &&
                body["choices"][0]["finish_reason"].is_string()) {
                response.finish_reason = body["choices"][0]["finish_reason"].get<std::string>();
            }
            if (body.contains("usage")) {
                response.prompt_tokens = body["usage"].value("prompt_tokens", 0L);
                response.completion_tokens = body["usage"].value("completion_tokens", 0L);
            }
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed chat completion response: ") + e.what());
        }
        return response;
    }

    std::vector<std::vector<double>> embed(const EmbedRequest& request,
                                           const EndpointConfig& cfg) override {
        ordered_json body = post(cfg, "/embeddings", request.to_wire_json().dump());
        std::vector<std::vector<double>> vectors;
        try {
            for (const auto& item : body.at("data")) {
                vectors.push_back(item.at("embedding").get<std::vector<double>>());
            }
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed embeddings response: ") + e.what());
        }
        return vectors;
    }

    std::string name() const override { return "live"; }

private:
    ordered_json post(const EndpointConfig& cfg, const std::string& route, const std::string& body) {
        const ParsedUrl url = split_base_url(cfg.base_url);
        httplib::Client client(url.origin);
        client.set_connection_timeout(std::chrono::duration<double>(cfg.timeout_s));
        client.set_read_timeout(std::chrono::duration<double>(cfg.timeout_s));
        httplib::Headers headers;
        if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        auto result = client.Post(url.prefix + route, headers, body, "application/json");
        if (!result) {
            throw TransientTransportError("request to " + route + " failed: " +
                                          httplib::to_string(result.error()));
        }
        if (result->status == 429 || result->status >= 500) {
            throw TransientTransportError("endpoint returned status " +
                                          std::to_string(result->status) + " for " + route);
        }
        if (result->status != 200) {
            throw TransportError("endpoint returned status " + std::to_string(result->status) +
                                 " for " + route + ": " + result->body);
        }
        try {
            return ordered_json::parse(result->body);
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("endpoint returned invalid JSON: ") + e.what());
        }
    }
};

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

class MockTransport final : public Transport {
public:
    explicit MockTransport(size_t embedding_dim) : embedding_dim_(embedding_dim) {}

    ChatResponse chat(const ChatRequest& request, const EndpointConfig&) override {
        // An explain prompt names its target label; echo it. Otherwise pick a
        // label from the content hash so predictions are deterministic but
        // sometimes wrong.
        std::optional<SentimentLabel> label;
        const std::string marker = "known to carry the sentiment \"";
        if (auto pos = request.user_text.find(marker); pos != std::string::npos) {
            auto start = pos + marker.size();
            auto end = request.user_text.find('"', start);
            if (end != std::string::npos) {
                label = try_parse_label(request.user_text.substr(start, end - start));
            }
        }
        const std::uint64_t h = fnv1a64(request.user_text) ^ fnv1a64(request.model) ^
                                (0x9e3779b97f4a7c15ull * request.attempt);
        if (!label) label = all_labels()[h % 3];

        std::mt19937_64 rng(h);
        auto pick = [&rng](std::initializer_list<const char*> options) {
            auto it = options.begin();
            std::advance(it, rng() % options.size());
            return std::string(*it);
        };
        std::ostringstream out;
        out << "Text Analysis: the wording leans " << pick({"warm", "flat", "sharp", "playful"})
            << " with " << pick({"emphatic", "measured", "ironic"}) << " phrasing.\n";
        out << "Image Analysis: "
            << (request.image_ref ? "the attached image shows a " +
                                        pick({"crowded", "calm", "bright", "dim"}) + " scene"
                                  : "N/A")
            << "\n";
        out << "Conflict Resolution: " << pick({"both modalities agree", "the text dominates",
                                                "the image tempers the text"})
            << ".\n";
        out << "Conclusion: overall the post reads as " << to_string(*label) << ".\n";
        out << "Sentiment: " << to_string(*label) << "\n";

        ChatResponse response;
        response.text = out.str();
        response.prompt_tokens = static_cast<long>(request.user_text.size() / 4);
        response.completion_tokens = static_cast<long>(response.text.size() / 4);
        return response;
    }

    std::vector<std::vector<double>> embed(const EmbedRequest& request,
                                           const EndpointConfig&) override {
        std::vector<std::vector<double>> vectors;
        vectors.reserve(request.inputs.size());
        for (const auto& text : request.inputs) {
            std::mt19937_64 rng(fnv1a64(text));
            std::normal_distribution<double> dist(0.0, 1.0);
            std::vector<double> v(embedding_dim_);
            double norm = 0.0;
            for (auto& x : v) {
                x = dist(rng);
                norm += x * x;
            }
            norm = std::sqrt(norm);
            for (auto& x : v) x /= norm;
            vectors.push_back(std::move(v));
        }
        return vectors;
    }

    std::string name() const override { return "mock"; }

private:
    size_t embedding_dim_;
};

class ReplayTransport final : public Transport {
public:
    explicit ReplayTransport(std::filesystem::path cache_dir) : cache_dir_(std::move(cache_dir)) {}

    ChatResponse chat(const ChatRequest& request, const EndpointConfig&) override {
        ordered_json entry = lookup(request.content_hash());
        ChatResponse response;
        response.text = entry.at("response").at("text").get<std::string>();
        response.finish_reason = entry["response"].value("finish_reason", "stop");
        response.prompt_tokens = entry["response"].value("prompt_tokens", 0L);
        response.completion_tokens = entry["response"].value("completion_tokens", 0L);
        return response;
    }

    std::vector<std::vector<double>> embed(const EmbedRequest& request,
                                           const EndpointConfig&) override {
        ordered_json entry = lookup(request.content_hash());
        return entry.at("response").at("vectors").get<std::vector<std::vector<double>>>();
    }

    std::string name() const override { return "replay"; }

private:
    ordered_json lookup(const std::string& hash) {
        const auto path = cache_dir_ / (hash + ".json");
        std::ifstream in(path);
        if (!in) {
            throw CacheMissError("replay cache has no entry for request_hash " + hash + " (" +
                                 path.string() + ")");
        }
        try {
            ordered_json entry;
            in >> entry;
            return entry;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
    }

    std::filesystem::path cache_dir_;
};

} // namespace

std::shared_ptr<Transport> make_live_transport() { return std::make_shared<LiveTransport>(); }

std::shared_ptr<Transport> make_mock_transport(size_t embedding_dim) {
    return std::make_shared<MockTransport>(embedding_dim);
}

std::shared_ptr<Transport> make_replay_transport(std::filesystem::path cache_dir) {
    return std::make_shared<ReplayTransport>(std::move(cache_dir));
}

std::shared_ptr<Transport> make_transport(const std::string& mode,
                                          const std::optional<std::filesystem::path>& cache_dir) {
    if (mode == "live") return make_live_transport();
    if (mode == "mock") return make_mock_transport();
    if (mode == "replay") {
        if (!cache_dir) throw ConfigError("replay transport requires a cache directory");
        return make_replay_transport(*cache_dir);
    }
    throw ConfigError("unknown transport mode \"" + mode + "\" (expected live|mock|replay)");
}

// ---------------------------------------------------------------------------
// Gateway

class Gateway::InFlightLimiter {
public:
    explicit InFlightLimiter(int limit) : limit_(limit) {}

    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return active_ < limit_; });
        ++active_;
    }

    void release() {
        {
            std::lock_guard lock(mutex_);
            --active_;
        }
        cv_.notify_one();
    }

private:
    int limit_;
    int active_ = 0;
    std::mutex mutex_;
    std::condition_variable cv_;
};

Gateway::Gateway(EndpointConfig cfg, std::shared_ptr<Transport> transport,
                 std::optional<std::filesystem::path> cache_dir)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), cache_dir_(std::move(cache_dir)) {
    validate_endpoint_config(cfg_);
    if (!transport_) throw ConfigError("gateway needs a transport");
    if (cache_dir_) std::filesystem::create_directories(*cache_dir_);
    limiter_ = std::make_shared<InFlightLimiter>(cfg_.max_in_flight);
}

GatewayStats Gateway::stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
}

ChatResponse Gateway::chat_with_retry(const ChatRequest& request) {
    limiter_->acquire();
    struct Release {
        InFlightLimiter* limiter;
        ~Release() { limiter->release(); }
    } release{limiter_.get()};

    double backoff = cfg_.retry.initial_backoff_s;
    for (int transport_attempt = 1;; ++transport_attempt) {
        try {
            return transport_->chat(request, cfg_);
        } catch (const TransientTransportError& e) {
            if (transport_attempt >= cfg_.retry.max_attempts) {
                throw TransportError("exhausted " + std::to_string(cfg_.retry.max_attempts) +
                                     " attempts: " + e.what());
            }
            {
                std::lock_guard lock(mutex_);
                stats_.retried_calls++;
            }
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff *= cfg_.retry.multiplier;
        }
    }
}

void Gateway::record_chat(const ChatRequest& request, const ChatResponse& response) {
    if (!records()) return;
    ordered_json entry;
    entry["request_hash"] = request.content_hash();
    entry["request"] = request.to_wire_json();
    entry["request"]["attempt"] = request.attempt;
    entry["response"] = {{"text", response.text},
                         {"finish_reason", response.finish_reason},
                         {"prompt_tokens", response.prompt_tokens},
                         {"completion_tokens", response.completion_tokens}};
    const auto path = *cache_dir_ / (request.content_hash() + ".json");
    const auto tmp = *cache_dir_ / (request.content_hash() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        out << entry.dump(2) << "\n";
    }
    // Atomic rename; identical hashes carry identical content, so
    // last-writer-wins is safe under concurrent recording.
    std::filesystem::rename(tmp, path);
}

void Gateway::record_embed(const EmbedRequest& request,
                           const std::vector<std::vector<double>>& vectors) {
    if (!records()) return;
    ordered_json entry;
    entry["request_hash"] = request.content_hash();
    entry["request"] = request.to_wire_json();
    entry["response"] = {{"vectors", vectors}};
    const auto path = *cache_dir_ / (request.content_hash() + ".json");
    const auto tmp = *cache_dir_ / (request.content_hash() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        out << entry.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, path);
}

std::string Gateway::complete(const RenderedPrompt& prompt, int attempt) {
    if (attempt < 1) throw DomainError("attempt must be >= 1");
    ChatRequest request;
    request.model = cfg_.model_name;
    request.system_text = prompt.system_text;
    request.user_text = prompt.user_text;
    request.image_ref = prompt.image_ref;
    request.temperature = attempt == 1 ? cfg_.temperature
                                       : std::max(cfg_.temperature, cfg_.retry_temperature);
    request.sampling_seed = cfg_.sampling_seed;
    request.attempt = attempt;

    ChatResponse response = chat_with_retry(request);
    {
        std::lock_guard lock(mutex_);
        stats_.chat_calls++;
        stats_.prompt_tokens += response.prompt_tokens;
        stats_.completion_tokens += response.completion_tokens;
    }
    record_chat(request, response);
    return response.text;
}

std::vector<std::vector<double>> Gateway::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw ValidationError("embed() needs a non-empty text collection");
    EmbedRequest request{cfg_.embedding_model, texts};

    limiter_->acquire();
    struct Release {
        InFlightLimiter* limiter;
        ~Release() { limiter->release(); }
    } release{limiter_.get()};

    std::vector<std::vector<double>> vectors;
    double backoff = cfg_.retry.initial_backoff_s;
    for (int transport_attempt = 1;; ++transport_attempt) {
        try {
            vectors = transport_->embed(request, cfg_);
            break;
        } catch (const TransientTransportError& e) {
            if (transport_attempt >= cfg_.retry.max_attempts) {
                throw TransportError("exhausted " + std::to_string(cfg_.retry.max_attempts) +
                                     " attempts: " + e.what());
            }
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff *= cfg_.retry.multiplier;
        }
    }

    if (vectors.size() != texts.size()) {
        throw TransportError("embedding endpoint returned " + std::to_string(vectors.size()) +
                             " vectors for " + std::to_string(texts.size()) + " inputs");
    }
    for (const auto& v : vectors) {
        if (v.size() != vectors.front().size()) {
            throw TransportError("embedding dimension mismatch within batch");
        }
    }
    {
        std::lock_guard lock(mutex_);
        stats_.embed_calls++;
    }
    record_embed(request, vectors);
    return vectors;
}

} // namespace cotforge
