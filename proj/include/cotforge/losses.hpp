#pragma once

#include "cotforge/errors.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace cotforge {

inline constexpr int kMaskSentinel = -100;
inline constexpr int kNumClasses = 3;

// Row-major l x V matrix of per-position vocabulary logits.
struct TokenLogits {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    TokenLogits() = default;
    TokenLogits(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(size_t row, size_t col) { return data[row * cols + col]; }
    double at(size_t row, size_t col) const { return data[row * cols + col]; }
    std::span<const double> row(size_t r) const { return {data.data() + r * cols, cols}; }
};

// Per-position vocabulary logits plus the 3-way classification head output.
struct LogitTensor {
    TokenLogits token_logits;
    std::array<double, kNumClasses> class_logits{0.0, 0.0, 0.0};
};

// Input/target id sequences of equal length; masked target positions carry
// kMaskSentinel and never contribute to a loss.
struct TokenizedExample {
    std::vector<int> input_ids;
    std::vector<int> target_ids;
    int class_target = 0;
};

void validate_example(const TokenizedExample& example, size_t vocab_size);

struct LossWeights {
    double lambda_cls = 0.2;
    double lambda_rea = 0.8;
    double lambda_kd = 0.3; // balance between hard- and soft-label supervision
    double tau = 2.0;
    // Classical gradient-rescaling variant that multiplies the soft branch by
    // tau^2. Off by default.
    bool scale_kl_by_tau_sq = false;
};

void validate_loss_weights(const LossWeights& w);

// Negative log-likelihood over unmasked target positions: summed within each
// sample, averaged over the batch. An all-masked batch is 0 with a warning.
double masked_token_nll(std::span<const LogitTensor> logits,
                        std::span<const TokenizedExample> examples);

double multitask_loss(double l_cls, double l_rea, const LossWeights& w);

// Temperature softmax with max-subtraction. tau <= 0 is a DomainError.
std::vector<double> temp_softmax(std::span<const double> z, double tau);

// KL(p_a || p_s) in nats; p_s is floored at 1e-12. Inputs must each sum to 1
// within 1e-6 and have equal length.
double kl_divergence(std::span<const double> p_a, std::span<const double> p_s);

struct SoftLossPair {
    double cls = 0.0;
    double rea = 0.0;
};

// Soft-label losses for one example: class KL at temperature tau, and the
// mean per-position KL over unmasked token positions (0 when none).
SoftLossPair soft_losses(const LogitTensor& student, const LogitTensor& assistant,
                         std::span<const int> target_ids, const LossWeights& w);

// (1 - lambda_kd) * multitask(hard) + lambda_kd * multitask(soft).
double total_student_loss(double hard_cls, double hard_rea, double soft_cls, double soft_rea,
                          const LossWeights& w);

// Classification cross-entropy at temperature 1 for one example.
double class_nll(const std::array<double, kNumClasses>& class_logits, int class_target);

} // namespace cotforge
