#include "cotforge/tokenizer.hpp"

#include "cotforge/dataset_io.hpp"
#include "cotforge/errors.hpp"
#include "cotforge/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace cotforge {

ToyVocab ToyVocab::build(const std::vector<std::string>& texts, size_t max_size) {
    if (max_size < 8) throw ConfigError("vocabulary needs room for specials plus words");
    std::map<std::string, size_t> counts;
    for (const auto& text : texts) {
        for (const auto& token : tokenize(text)) counts[token]++;
    }
    std::vector<std::pair<std::string, size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    ToyVocab vocab;
    vocab.tokens_ = {"<unk>", "<bos>", "<sep>", "<eos>"};
    for (const auto& [token, count] : ranked) {
        if (vocab.tokens_.size() >= max_size) break;
        vocab.tokens_.push_back(token);
    }
    for (size_t i = 0; i < vocab.tokens_.size(); ++i) {
        vocab.index_[vocab.tokens_[i]] = static_cast<int>(i);
    }
    return vocab;
}

int ToyVocab::id_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

void ToyVocab::save(const std::filesystem::path& path, const std::string& config_digest) const {
    ordered_json j;
    if (!config_digest.empty()) j["config_digest"] = config_digest;
    j["tokens"] = tokens_;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocab: " + path.string());
    out << j.dump(2) << "\n";
}

ToyVocab ToyVocab::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocab: " + path.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    ToyVocab vocab;
    vocab.tokens_ = j.at("tokens").get<std::vector<std::string>>();
    for (size_t i = 0; i < vocab.tokens_.size(); ++i) {
        vocab.index_[vocab.tokens_[i]] = static_cast<int>(i);
    }
    return vocab;
}

std::string chain_text(const ReasoningChain& chain) {
    return chain.text_analysis + " " + chain.image_analysis + " " + chain.conflict_resolution +
           " " + chain.conclusion;
}

TokenizedExample encode_example(const Sample& sample, const ReasoningChain* chain,
                                const ToyVocab& vocab, const EncodeOptions& opts) {
    if (opts.max_seq_len < 8) throw ConfigError("max_seq_len too small");

    std::vector<int> seq;
    seq.push_back(ToyVocab::kBos);
    std::string prompt_text = sample.text;
    if (sample.aspect) prompt_text += " " + *sample.aspect;
    for (const auto& token : tokenize(prompt_text)) seq.push_back(vocab.id_of(token));
    seq.push_back(ToyVocab::kSep);
    const size_t sep_pos = seq.size() - 1;

    if (chain) {
        for (const auto& token : tokenize(chain_text(*chain))) seq.push_back(vocab.id_of(token));
        seq.push_back(ToyVocab::kEos);
    }
    if (seq.size() > opts.max_seq_len + 1) {
        seq.resize(opts.max_seq_len + 1);
        if (chain) seq.back() = ToyVocab::kEos;
    }

    TokenizedExample example;
    example.class_target = static_cast<int>(sample.gold_label);
    example.input_ids.assign(seq.begin(), seq.end() - 1);
    example.target_ids.assign(seq.begin() + 1, seq.end());
    // Supervise only the continuation after <sep>; target j predicts seq[j+1].
    for (size_t j = 0; j < example.target_ids.size(); ++j) {
        if (j + 1 <= sep_pos || chain == nullptr) example.target_ids[j] = kMaskSentinel;
    }
    return example;
}

std::vector<TokenizedExample> encode_dataset(const ReasoningDataset& ds, const ToyVocab& vocab,
                                             const EncodeOptions& opts) {
    std::vector<TokenizedExample> out;
    out.reserve(ds.size());
    for (const auto& entry : ds.entries) {
        out.push_back(encode_example(entry.sample, &entry.record.chain, vocab, opts));
    }
    return out;
}

} // namespace cotforge
