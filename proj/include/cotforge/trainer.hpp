#pragma once

#include "cotforge/toy_model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cotforge {

struct TrainConfig {
    double initial_lr = 3e-4;
    int plateau_patience = 2; // consecutive non-improving epochs before halving
    double lr_floor = 1e-6;
    int batch_size = 2;
    int grad_accumulation = 20; // micro-batches per parameter update
    int max_epochs = 20;
    std::uint64_t seed = 0;
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

void validate_train_config(const TrainConfig& cfg);

enum class TrainRole { assistant, student };

struct EpochLog {
    int epoch = 0;
    double loss_total = 0.0;
    double loss_hard_cls = 0.0;
    double loss_hard_rea = 0.0;
    double loss_soft_cls = 0.0;
    double loss_soft_rea = 0.0;
    double lr = 0.0;
    double val_loss = 0.0;
    size_t updates = 0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    size_t total_updates = 0;
};

// Halve-on-plateau schedule: after `patience` consecutive epochs without
// improvement the rate halves (never below the floor) and the streak resets.
class PlateauScheduler {
public:
    PlateauScheduler(double initial_lr, int patience, double floor);
    double lr() const { return lr_; }
    // Feed one end-of-epoch metric (lower is better); returns the rate to use
    // for the next epoch.
    double observe(double metric);

private:
    double lr_;
    int patience_;
    double floor_;
    double best_;
    int streak_ = 0;
};

struct BatchLosses {
    double total = 0.0;
    double hard_cls = 0.0;
    double hard_rea = 0.0;
    double soft_cls = 0.0;
    double soft_rea = 0.0;
};

// Losses for one micro-batch; when grad is non-null the gradient of `total`
// w.r.t. the student parameters is accumulated into it. For the assistant
// role `total` is the weighted multitask hard loss; for the student role it
// is the joint hard/soft objective and `assistant` must be non-null.
BatchLosses batch_losses(const ToyModel& model, const ToyModel* assistant,
                         std::span<const TokenizedExample> batch, const LossWeights& w,
                         TrainRole role, std::vector<double>* grad);

// AdamW training loop with gradient accumulation and the plateau schedule.
// Deterministic for a fixed seed. NaN losses abort with the batch id.
TrainResult train(ToyModel& model, const std::vector<TokenizedExample>& train_data,
                  const std::vector<TokenizedExample>& val_data, const TrainConfig& cfg,
                  const LossWeights& w, TrainRole role, const ToyModel* assistant = nullptr);

double evaluate_loss(const ToyModel& model, std::span<const TokenizedExample> data,
                     const LossWeights& w, TrainRole role, const ToyModel* assistant,
                     int batch_size);

double classification_accuracy(const ToyModel& model, std::span<const TokenizedExample> data);

// Max relative error between the analytic gradient and central finite
// differences (step 1e-5) of the same objective; probes at most
// max_probes parameters, spread over every block.
double grad_check(const ToyModel& model, const ToyModel* assistant,
                  std::span<const TokenizedExample> batch, const LossWeights& w,
                  TrainRole role = TrainRole::student, size_t max_probes = 500);

void write_train_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

} // namespace cotforge
