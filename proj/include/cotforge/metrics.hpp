#pragma once

#include "cotforge/label.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cotforge {

using Tokens = std::vector<std::string>;

// Canonical tokenizer shared by every generation metric: lowercase,
// punctuation split into single-character tokens, whitespace separated.
Tokens tokenize(std::string_view text);

struct PerClassStats {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    size_t support = 0;
};

struct ClassificationReport {
    double accuracy = 0.0;
    double weighted_f1 = 0.0;
    double macro_f1 = 0.0;
    std::array<PerClassStats, kNumLabels> per_class;
    std::array<std::array<size_t, kNumLabels>, kNumLabels> confusion{}; // [gold][pred]
    size_t total = 0;

    nlohmann::ordered_json to_json() const;
};

// Fixed 3-label set; zero-division conventions map undefined P/R/F1 to 0.
ClassificationReport classification_metrics(std::span<const SentimentLabel> gold,
                                            std::span<const SentimentLabel> pred);

// Sentence BLEU-4 with brevity penalty; higher-order n-gram precisions get
// add-one smoothing when their match count is zero. Empty hypothesis is 0.
double sentence_bleu(const Tokens& hypothesis, const std::vector<Tokens>& references);
double corpus_bleu(const std::vector<Tokens>& hypotheses,
                   const std::vector<Tokens>& references);

// LCS F-measure with beta = 1.
double rouge_l(const Tokens& hypothesis, const Tokens& reference);

// Unigram METEOR variant: exact + suffix-stripped stem matches only,
// recall-weighted harmonic mean (alpha 0.9), fragmentation penalty
// gamma 0.5, beta 3.
double meteor_lite(const Tokens& hypothesis, const Tokens& reference);

// Unique n-grams over total n-grams, pooled across the collection.
double distinct_n(const std::vector<Tokens>& hypotheses, int n);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

struct PerSampleScores {
    std::string id;
    double bleu = 0.0;
    double rouge = 0.0;
    double meteor = 0.0;
    double sim = 0.0;
    bool has_sim = false;
};

struct GenerationReport {
    double sim = 0.0;
    bool has_sim = false;
    double meteor = 0.0;
    double bleu = 0.0;          // corpus-level (headline)
    double bleu_sentence = 0.0; // mean sentence-level
    double rouge = 0.0;
    double dist1 = 0.0;
    double dist2 = 0.0;
    size_t pairs = 0;
    std::vector<PerSampleScores> per_sample;

    nlohmann::ordered_json to_json() const; // percentages, one decimal
};

GenerationReport generation_metrics(const std::vector<std::string>& hypotheses,
                                    const std::vector<std::string>& references,
                                    const std::vector<std::vector<double>>* hyp_vectors = nullptr,
                                    const std::vector<std::vector<double>>* ref_vectors = nullptr,
                                    const std::vector<std::string>* ids = nullptr);

// Percentage with one decimal, the table convention of the reports.
double percent(double value);

} // namespace cotforge
