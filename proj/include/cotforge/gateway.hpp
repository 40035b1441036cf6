#pragma once

#include "cotforge/errors.hpp"
#include "cotforge/prompt.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace cotforge {

struct RetryPolicy {
    double initial_backoff_s = 0.25;
    double multiplier = 2.0;
    int max_attempts = 3;
};

struct EndpointConfig {
    std::string base_url = "http://localhost:8000/v1";
    std::string model_name = "mock-model";
    std::string api_key_env = "COTFORGE_API_KEY";
    double timeout_s = 60.0;
    int max_in_flight = 4;
    RetryPolicy retry;
    // Decoding defaults favor reproducibility: greedy first attempt, nonzero
    // temperature only for regeneration retries.
    double temperature = 0.0;
    double retry_temperature = 0.7;
    std::uint64_t sampling_seed = 42;
    std::string embedding_model = "mock-embedding";
};

void validate_endpoint_config(const EndpointConfig& cfg);

struct ChatRequest {
    std::string model;
    std::string system_text;
    std::string user_text;
    std::optional<std::string> image_ref;
    double temperature = 0.0;
    std::uint64_t sampling_seed = 42;
    int attempt = 1; // regeneration index; part of the hashed content

    // OpenAI chat/completions body.
    nlohmann::ordered_json to_wire_json() const;
    // Stable content digest (no wall clock, no endpoint identity).
    std::string content_hash() const;
};

struct ChatResponse {
    std::string text;
    std::string finish_reason = "stop";
    long prompt_tokens = 0;
    long completion_tokens = 0;
};

struct EmbedRequest {
    std::string model;
    std::vector<std::string> inputs;

    nlohmann::ordered_json to_wire_json() const;
    std::string content_hash() const;
};

// Endpoint failure that is worth retrying (timeout, 429, 5xx).
class TransientTransportError : public Error {
public:
    using Error::Error;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual ChatResponse chat(const ChatRequest& request, const EndpointConfig& cfg) = 0;
    virtual std::vector<std::vector<double>> embed(const EmbedRequest& request,
                                                   const EndpointConfig& cfg) = 0;
    virtual std::string name() const = 0;
};

// POSTs to {base_url}/chat/completions and {base_url}/embeddings with a
// bearer token taken from the configured environment variable.
std::shared_ptr<Transport> make_live_transport();

// Deterministic stand-in endpoint: fabricates a well-formed four-section
// response whose label derives from the request content (or echoes the label
// named in an explain prompt), and hash-seeded unit vectors for embeddings.
std::shared_ptr<Transport> make_mock_transport(size_t embedding_dim = 8);

// Serves responses from a cache directory of <content_hash>.json files;
// missing entries raise CacheMissError naming the hash.
std::shared_ptr<Transport> make_replay_transport(std::filesystem::path cache_dir);

std::shared_ptr<Transport> make_transport(const std::string& mode,
                                          const std::optional<std::filesystem::path>& cache_dir);

struct GatewayStats {
    size_t chat_calls = 0;
    size_t embed_calls = 0;
    size_t retried_calls = 0;
    long prompt_tokens = 0;
    long completion_tokens = 0;
};

// Thread-safe client wrapper: bounded in-flight requests, exponential backoff
// on transient failures, and append-only response recording for replay.
class Gateway {
public:
    Gateway(EndpointConfig cfg, std::shared_ptr<Transport> transport,
            std::optional<std::filesystem::path> cache_dir = std::nullopt);

    // attempt > 1 marks an ARC regeneration: the request is re-sampled at the
    // retry temperature and hashes to a distinct cache entry.
    std::string complete(const RenderedPrompt& prompt, int attempt = 1);

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts);

    const EndpointConfig& config() const { return cfg_; }
    GatewayStats stats() const;
    bool records() const { return cache_dir_.has_value() && transport_->name() != "replay"; }

private:
    ChatResponse chat_with_retry(const ChatRequest& request);
    void record_chat(const ChatRequest& request, const ChatResponse& response);
    void record_embed(const EmbedRequest& request, const std::vector<std::vector<double>>& vectors);

    EndpointConfig cfg_;
    std::shared_ptr<Transport> transport_;
    std::optional<std::filesystem::path> cache_dir_;
    mutable std::mutex mutex_;
    GatewayStats stats_;

    class InFlightLimiter;
    std::shared_ptr<InFlightLimiter> limiter_;
};

} // namespace cotforge
