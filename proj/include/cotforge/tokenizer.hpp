#pragma once

#include "cotforge/losses.hpp"
#include "cotforge/reasoning.hpp"

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace cotforge {

// Word-level vocabulary over the canonical tokenizer, shared by the assistant
// and student toy models so their per-position distributions line up.
class ToyVocab {
public:
    static constexpr int kUnk = 0;
    static constexpr int kBos = 1;
    static constexpr int kSep = 2;
    static constexpr int kEos = 3;

    // Most frequent words first (ties broken lexicographically), capped at
    // max_size including the four specials.
    static ToyVocab build(const std::vector<std::string>& texts, size_t max_size);

    size_t size() const { return tokens_.size(); }
    int id_of(const std::string& token) const;
    const std::string& token_at(size_t id) const { return tokens_.at(id); }

    void save(const std::filesystem::path& path, const std::string& config_digest = "") const;
    static ToyVocab load(const std::filesystem::path& path);

    bool operator==(const ToyVocab& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

struct EncodeOptions {
    size_t max_seq_len = 48; // input/target length cap
};

// Builds the teacher-forcing pair: the sequence is
//   <bos> text-tokens <sep> chain-tokens <eos>
// shifted by one; target positions inside the prompt region carry the mask
// sentinel so only the reasoning continuation is supervised. Without a chain
// every target is masked (classification-only example).
TokenizedExample encode_example(const Sample& sample, const ReasoningChain* chain,
                                const ToyVocab& vocab, const EncodeOptions& opts);

std::vector<TokenizedExample> encode_dataset(const ReasoningDataset& ds, const ToyVocab& vocab,
                                             const EncodeOptions& opts);

// Chain text as fed to the vocabulary and encoder.
std::string chain_text(const ReasoningChain& chain);

} // namespace cotforge
