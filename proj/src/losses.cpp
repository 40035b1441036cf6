#include "cotforge/losses.hpp"

#include "cotforge/util.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cotforge {

namespace {
constexpr double kProbFloor = 1e-12;

double log_sum_exp(std::span<const double> z) {
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    return zmax + std::log(sum);
}
} // namespace

void validate_example(const TokenizedExample& example, size_t vocab_size) {
    if (example.input_ids.size() != example.target_ids.size()) {
        throw ShapeError("input and target sequences must have equal length");
    }
    if (example.class_target < 0 || example.class_target >= kNumClasses) {
        throw ShapeError("class_target out of range");
    }
    for (int id : example.input_ids) {
        if (id < 0 || static_cast<size_t>(id) >= vocab_size) {
            throw ShapeError("input id " + std::to_string(id) + " outside vocabulary");
        }
    }
    for (int id : example.target_ids) {
        if (id != kMaskSentinel && (id < 0 || static_cast<size_t>(id) >= vocab_size)) {
            throw ShapeError("target id " + std::to_string(id) + " outside vocabulary");
        }
    }
}

void validate_loss_weights(const LossWeights& w) {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0 && std::isfinite(v); };
    if (!in_unit(w.lambda_cls)) throw DomainError("lambda_cls must lie in [0,1]");
    if (!in_unit(w.lambda_rea)) throw DomainError("lambda_rea must lie in [0,1]");
    if (!in_unit(w.lambda_kd)) throw DomainError("lambda_kd must lie in [0,1]");
    if (!(w.tau > 0.0) || !std::isfinite(w.tau)) throw DomainError("tau must be > 0");
}

double masked_token_nll(std::span<const LogitTensor> logits,
                        std::span<const TokenizedExample> examples) {
    if (logits.size() != examples.size()) {
        throw ShapeError("logits/examples batch size mismatch");
    }
    if (examples.empty()) throw ShapeError("batch must be non-empty");

    double total = 0.0;
    size_t unmasked = 0;
    for (size_t i = 0; i < examples.size(); ++i) {
        const auto& example = examples[i];
        const auto& token_logits = logits[i].token_logits;
        if (token_logits.rows != example.target_ids.size()) {
            throw ShapeError("token logits rows do not match target length");
        }
        double sample_sum = 0.0;
        for (size_t j = 0; j < example.target_ids.size(); ++j) {
            const int target = example.target_ids[j];
            if (target == kMaskSentinel) continue;
            if (target < 0 || static_cast<size_t>(target) >= token_logits.cols) {
                throw ShapeError("target id outside logit columns");
            }
            const auto row = token_logits.row(j);
            sample_sum += log_sum_exp(row) - row[static_cast<size_t>(target)];
            ++unmasked;
        }
        total += sample_sum;
    }
    if (unmasked == 0) {
        warn("masked_token_nll: every position masked; loss defined as 0");
        return 0.0;
    }
    return total / static_cast<double>(examples.size());
}

double multitask_loss(double l_cls, double l_rea, const LossWeights& w) {
    if (!std::isfinite(l_cls) || !std::isfinite(l_rea)) {
        throw DomainError("multitask_loss inputs must be finite");
    }
    return w.lambda_cls * l_cls + w.lambda_rea * l_rea;
}

std::vector<double> temp_softmax(std::span<const double> z, double tau) {
    if (!(tau > 0.0)) throw DomainError("temperature must be > 0");
    if (z.empty()) throw ShapeError("temp_softmax needs a non-empty vector");
    for (double v : z) {
        if (!std::isfinite(v)) throw DomainError("temp_softmax input must be finite");
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (size_t k = 0; k < z.size(); ++k) {
        p[k] = std::exp((z[k] - zmax) / tau);
        sum += p[k];
    }
    for (double& v : p) v /= sum;
    return p;
}

double kl_divergence(std::span<const double> p_a, std::span<const double> p_s) {
    if (p_a.size() != p_s.size()) throw ShapeError("kl_divergence length mismatch");
    if (p_a.empty()) throw ShapeError("kl_divergence needs non-empty distributions");
    double sum_a = 0.0;
    double sum_s = 0.0;
    for (size_t k = 0; k < p_a.size(); ++k) {
        sum_a += p_a[k];
        sum_s += p_s[k];
    }
    if (std::abs(sum_a - 1.0) > 1e-6 || std::abs(sum_s - 1.0) > 1e-6) {
        throw DomainError("kl_divergence inputs must sum to 1 within 1e-6");
    }
    double kl = 0.0;
    for (size_t k = 0; k < p_a.size(); ++k) {
        if (p_a[k] <= 0.0) continue;
        kl += p_a[k] * std::log(p_a[k] / std::max(p_s[k], kProbFloor));
    }
    return kl;
}

SoftLossPair soft_losses(const LogitTensor& student, const LogitTensor& assistant,
                         std::span<const int> target_ids, const LossWeights& w) {
    if (student.token_logits.rows != assistant.token_logits.rows ||
        student.token_logits.cols != assistant.token_logits.cols) {
        throw ShapeError("student/assistant token logit shapes disagree");
    }
    if (student.token_logits.rows != target_ids.size()) {
        throw ShapeError("target mask length does not match logits");
    }

    SoftLossPair out;
    out.cls = kl_divergence(temp_softmax(assistant.class_logits, w.tau),
                            temp_softmax(student.class_logits, w.tau));

    double sum = 0.0;
    size_t count = 0;
    for (size_t j = 0; j < target_ids.size(); ++j) {
        if (target_ids[j] == kMaskSentinel) continue;
        sum += kl_divergence(temp_softmax(assistant.token_logits.row(j), w.tau),
                             temp_softmax(student.token_logits.row(j), w.tau));
        ++count;
    }
    out.rea = count == 0 ? 0.0 : sum / static_cast<double>(count);
    return out;
}

double total_student_loss(double hard_cls, double hard_rea, double soft_cls, double soft_rea,
                          const LossWeights& w) {
    const double hard_multi = multitask_loss(hard_cls, hard_rea, w);
    double soft_multi = multitask_loss(soft_cls, soft_rea, w);
    if (w.scale_kl_by_tau_sq) soft_multi *= w.tau * w.tau;
    return (1.0 - w.lambda_kd) * hard_multi + w.lambda_kd * soft_multi;
}

double class_nll(const std::array<double, kNumClasses>& class_logits, int class_target) {
    if (class_target < 0 || class_target >= kNumClasses) {
        throw ShapeError("class_target out of range");
    }
    return log_sum_exp(class_logits) - class_logits[static_cast<size_t>(class_target)];
}

} // namespace cotforge
