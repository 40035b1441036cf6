#pragma once

#include "cotforge/losses.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cotforge {

struct ToyModelConfig {
    int vocab_size = 16;
    int embed_dim = 32;
    double init_scale = 0.3;

    bool operator==(const ToyModelConfig&) const = default;
};

// Small differentiable stand-in for a language-model backbone: a token
// embedding table, one context-mixing tanh layer over the causal prefix mean,
// a vocabulary projection per position, and a pooled 3-way classification
// projection. Forward and backward are analytic and deterministic.
class ToyModel {
public:
    ToyModel() = default;
    ToyModel(ToyModelConfig cfg, std::uint64_t seed);

    const ToyModelConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    size_t param_count() const { return params_.size(); }

    struct ForwardCache {
        std::vector<double> embed;  // l x d
        std::vector<double> ctx;    // l x d causal prefix means
        std::vector<double> hidden; // l x d
        std::vector<double> pooled; // d
        LogitTensor logits;
    };

    ForwardCache forward(std::span<const int> input_ids) const;

    // Accumulates d(loss)/d(params) into grad given upstream gradients on the
    // token and class logits. grad must have param_count() entries.
    void backward(std::span<const int> input_ids, const ForwardCache& cache,
                  const TokenLogits& d_token_logits,
                  const std::array<double, kNumClasses>& d_class_logits,
                  std::span<double> grad) const;

    int predict_class(std::span<const int> input_ids) const;

    // Flat little-endian float64 parameter blob behind a JSON header carrying
    // the shape manifest, seed and any extra fields (e.g. config digest).
    void save(const std::filesystem::path& path, const nlohmann::ordered_json& extras = {}) const;
    static ToyModel load(const std::filesystem::path& path, nlohmann::ordered_json* header_out = nullptr);

    // Parameter block layout, exposed for the gradient checker.
    struct BlockSpan {
        std::string name;
        size_t offset;
        size_t size;
    };
    std::vector<BlockSpan> blocks() const;

private:
    size_t embedding_offset() const { return 0; }
    size_t w_token_offset() const;
    size_t w_context_offset() const;
    size_t bias_offset() const;
    size_t w_vocab_offset() const;
    size_t b_vocab_offset() const;
    size_t w_class_offset() const;
    size_t b_class_offset() const;

    ToyModelConfig cfg_;
    std::uint64_t seed_ = 0;
    std::vector<double> params_;
};

} // namespace cotforge
