#include "cotforge/trainer.hpp"

#include "cotforge/dataset_io.hpp"
#include "cotforge/util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

namespace cotforge {

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.initial_lr <= 0) throw ConfigError("initial_lr must be > 0");
    if (cfg.lr_floor <= 0 || cfg.lr_floor > cfg.initial_lr) {
        throw ConfigError("lr_floor must lie in (0, initial_lr]");
    }
    if (cfg.plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (cfg.grad_accumulation < 1) throw ConfigError("grad_accumulation must be >= 1");
    if (cfg.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
}

PlateauScheduler::PlateauScheduler(double initial_lr, int patience, double floor)
    : lr_(initial_lr), patience_(patience), floor_(floor),
      best_(std::numeric_limits<double>::infinity()) {}

double PlateauScheduler::observe(double metric) {
    if (metric < best_) {
        best_ = metric;
        streak_ = 0;
    } else {
        ++streak_;
        if (streak_ >= patience_) {
            lr_ = std::max(lr_ / 2.0, floor_);
            streak_ = 0;
        }
    }
    return lr_;
}

BatchLosses batch_losses(const ToyModel& model, const ToyModel* assistant,
                         std::span<const TokenizedExample> batch, const LossWeights& w,
                         TrainRole role, std::vector<double>* grad) {
    if (batch.empty()) throw ShapeError("batch must be non-empty");
    if (role == TrainRole::student && assistant == nullptr) {
        throw ConfigError("student training needs a frozen assistant model");
    }
    validate_loss_weights(w);

    const size_t B = batch.size();
    const double inv_b = 1.0 / static_cast<double>(B);
    const double tau = w.tau;
    const double soft_scale = w.scale_kl_by_tau_sq ? tau * tau : 1.0;
    const double hard_coeff = role == TrainRole::student ? 1.0 - w.lambda_kd : 1.0;
    const double soft_coeff = role == TrainRole::student ? w.lambda_kd * soft_scale : 0.0;

    std::vector<ToyModel::ForwardCache> caches;
    std::vector<ToyModel::ForwardCache> assistant_caches;
    caches.reserve(B);
    size_t unmasked_total = 0;
    for (const auto& example : batch) {
        validate_example(example, model.config().vocab_size);
        caches.push_back(model.forward(example.input_ids));
        if (role == TrainRole::student) {
            assistant_caches.push_back(assistant->forward(example.input_ids));
        }
        for (int t : example.target_ids) {
            if (t != kMaskSentinel) ++unmasked_total;
        }
    }

    BatchLosses losses;
    for (size_t i = 0; i < B; ++i) {
        const auto& example = batch[i];
        const auto& cache = caches[i];
        const size_t l = example.target_ids.size();
        const size_t v = cache.logits.token_logits.cols;

        losses.hard_cls += inv_b * class_nll(cache.logits.class_logits, example.class_target);
        TokenLogits d_token(l, v);
        std::array<double, kNumClasses> d_class{0.0, 0.0, 0.0};

        // Hard class branch: softmax minus one-hot.
        {
            const auto p = temp_softmax(cache.logits.class_logits, 1.0);
            const double coeff = hard_coeff * w.lambda_cls * inv_b;
            for (size_t c = 0; c < kNumClasses; ++c) {
                d_class[c] += coeff * (p[c] - (static_cast<int>(c) == example.class_target ? 1.0 : 0.0));
            }
        }

        // Hard token branch: per-sample sum over unmasked positions, batch mean.
        for (size_t j = 0; j < l; ++j) {
            const int target = example.target_ids[j];
            if (target == kMaskSentinel) continue;
            const auto row = cache.logits.token_logits.row(j);
            const auto p = temp_softmax(row, 1.0);
            losses.hard_rea += inv_b * (-std::log(std::max(p[static_cast<size_t>(target)], 1e-300)));
            const double coeff = hard_coeff * w.lambda_rea * inv_b;
            for (size_t k = 0; k < v; ++k) {
                d_token.at(j, k) += coeff * (p[k] - (static_cast<int>(k) == target ? 1.0 : 0.0));
            }
        }

        if (role == TrainRole::student) {
            const auto& acache = assistant_caches[i];

            // Soft class branch: KL between tempered class distributions,
            // averaged over the batch. d/dz_s = (p_s - p_a)/tau.
            {
                const auto pa = temp_softmax(acache.logits.class_logits, tau);
                const auto ps = temp_softmax(cache.logits.class_logits, tau);
                losses.soft_cls += inv_b * kl_divergence(pa, ps);
                const double coeff = soft_coeff * w.lambda_cls * inv_b / tau;
                for (size_t c = 0; c < kNumClasses; ++c) d_class[c] += coeff * (ps[c] - pa[c]);
            }

            // Soft token branch: mean per-position KL over the unmasked
            // positions pooled across the batch.
            if (unmasked_total > 0) {
                const double inv_u = 1.0 / static_cast<double>(unmasked_total);
                for (size_t j = 0; j < l; ++j) {
                    if (example.target_ids[j] == kMaskSentinel) continue;
                    const auto pa = temp_softmax(acache.logits.token_logits.row(j), tau);
                    const auto ps = temp_softmax(cache.logits.token_logits.row(j), tau);
                    losses.soft_rea += inv_u * kl_divergence(pa, ps);
                    const double coeff = soft_coeff * w.lambda_rea * inv_u / tau;
                    for (size_t k = 0; k < v; ++k) d_token.at(j, k) += coeff * (ps[k] - pa[k]);
                }
            }
        }

        if (grad) {
            model.backward(example.input_ids, cache, d_token, d_class, *grad);
        }
    }

    if (role == TrainRole::student) {
        losses.total =
            total_student_loss(losses.hard_cls, losses.hard_rea, losses.soft_cls, losses.soft_rea, w);
    } else {
        losses.total = multitask_loss(losses.hard_cls, losses.hard_rea, w);
    }
    return losses;
}

namespace {

// Deterministic Fisher-Yates, independent of stdlib shuffle internals.
void shuffle_indices(std::vector<size_t>& indices, std::mt19937_64& rng) {
    for (size_t i = indices.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng() % i);
        std::swap(indices[i - 1], indices[j]);
    }
}

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    long t = 0;
};

void adamw_step(std::vector<double>& params, const std::vector<double>& grad, AdamWState& state,
                const TrainConfig& cfg, double lr) {
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        state.m[i] = cfg.adam_beta1 * state.m[i] + (1.0 - cfg.adam_beta1) * grad[i];
        state.v[i] = cfg.adam_beta2 * state.v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.adam_eps) + cfg.weight_decay * params[i]);
    }
}

} // namespace

double evaluate_loss(const ToyModel& model, std::span<const TokenizedExample> data,
                     const LossWeights& w, TrainRole role, const ToyModel* assistant,
                     int batch_size) {
    if (data.empty()) throw ShapeError("evaluate_loss needs data");
    double sum = 0.0;
    size_t batches = 0;
    for (size_t start = 0; start < data.size(); start += static_cast<size_t>(batch_size)) {
        const size_t count = std::min(static_cast<size_t>(batch_size), data.size() - start);
        sum += batch_losses(model, assistant, data.subspan(start, count), w, role, nullptr).total;
        ++batches;
    }
    return sum / static_cast<double>(batches);
}

double classification_accuracy(const ToyModel& model, std::span<const TokenizedExample> data) {
    if (data.empty()) throw ShapeError("classification_accuracy needs data");
    size_t correct = 0;
    for (const auto& example : data) {
        if (model.predict_class(example.input_ids) == example.class_target) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(ToyModel& model, const std::vector<TokenizedExample>& train_data,
                  const std::vector<TokenizedExample>& val_data, const TrainConfig& cfg,
                  const LossWeights& w, TrainRole role, const ToyModel* assistant) {
    validate_train_config(cfg);
    validate_loss_weights(w);
    if (train_data.empty()) throw ValidationError("training data must be non-empty");
    if (role == TrainRole::student && assistant == nullptr) {
        throw ConfigError("student training needs a frozen assistant model");
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<size_t> order(train_data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    AdamWState adam;
    adam.m.assign(model.param_count(), 0.0);
    adam.v.assign(model.param_count(), 0.0);
    std::vector<double> accum(model.param_count(), 0.0);
    int accum_count = 0; // carries across epoch boundaries: one update per
                         // grad_accumulation micro-batches, exactly

    PlateauScheduler scheduler(cfg.initial_lr, cfg.plateau_patience, cfg.lr_floor);
    double lr = scheduler.lr();

    TrainResult result;
    std::vector<TokenizedExample> micro;
    std::vector<double> micro_grad(model.param_count(), 0.0);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_indices(order, rng);
        BatchLosses epoch_sum;
        size_t micro_batches = 0;
        size_t updates_this_epoch = 0;

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            micro.clear();
            const size_t count =
                std::min(static_cast<size_t>(cfg.batch_size), order.size() - start);
            for (size_t i = 0; i < count; ++i) micro.push_back(train_data[order[start + i]]);

            std::fill(micro_grad.begin(), micro_grad.end(), 0.0);
            BatchLosses losses;
            try {
                losses = batch_losses(model, assistant, micro, w, role, &micro_grad);
            } catch (const DomainError& e) {
                // non-finite logits surface here before the loss itself does
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", micro-batch " + std::to_string(micro_batches + 1) + ": " +
                                    e.what());
            }
            if (!std::isfinite(losses.total)) {
                throw TrainingError("NaN loss at epoch " + std::to_string(epoch) + ", micro-batch " +
                                    std::to_string(micro_batches + 1));
            }
            epoch_sum.total += losses.total;
            epoch_sum.hard_cls += losses.hard_cls;
            epoch_sum.hard_rea += losses.hard_rea;
            epoch_sum.soft_cls += losses.soft_cls;
            epoch_sum.soft_rea += losses.soft_rea;
            ++micro_batches;

            for (size_t i = 0; i < micro_grad.size(); ++i) accum[i] += micro_grad[i];
            if (++accum_count == cfg.grad_accumulation) {
                const double scale = 1.0 / static_cast<double>(cfg.grad_accumulation);
                for (double& g : accum) g *= scale;
                adamw_step(model.params(), accum, adam, cfg, lr);
                std::fill(accum.begin(), accum.end(), 0.0);
                accum_count = 0;
                ++updates_this_epoch;
                ++result.total_updates;
            }
        }

        EpochLog entry;
        entry.epoch = epoch;
        const double inv_mb = 1.0 / static_cast<double>(micro_batches);
        entry.loss_total = epoch_sum.total * inv_mb;
        entry.loss_hard_cls = epoch_sum.hard_cls * inv_mb;
        entry.loss_hard_rea = epoch_sum.hard_rea * inv_mb;
        entry.loss_soft_cls = epoch_sum.soft_cls * inv_mb;
        entry.loss_soft_rea = epoch_sum.soft_rea * inv_mb;
        entry.lr = lr;
        entry.updates = updates_this_epoch;
        entry.val_loss = val_data.empty()
                             ? entry.loss_total
                             : evaluate_loss(model, val_data, w, role, assistant, cfg.batch_size);
        result.log.push_back(entry);

        lr = scheduler.observe(entry.val_loss);
    }
    return result;
}

double grad_check(const ToyModel& model, const ToyModel* assistant,
                  std::span<const TokenizedExample> batch, const LossWeights& w, TrainRole role,
                  size_t max_probes) {
    ToyModel work = model;
    std::vector<double> analytic(work.param_count(), 0.0);
    batch_losses(work, assistant, batch, w, role, &analytic);

    // Probe indices spread uniformly across every parameter block.
    std::vector<size_t> probes;
    const auto blocks = work.blocks();
    const size_t total = work.param_count();
    if (total <= max_probes) {
        probes.resize(total);
        for (size_t i = 0; i < total; ++i) probes[i] = i;
    } else {
        for (const auto& block : blocks) {
            const size_t share = std::max<size_t>(1, max_probes * block.size / total);
            const size_t stride = std::max<size_t>(1, block.size / share);
            for (size_t i = 0; i < block.size; i += stride) probes.push_back(block.offset + i);
        }
    }

    const double h = 1e-5;
    double max_err = 0.0;
    auto loss_at = [&]() {
        return batch_losses(work, assistant, batch, w, role, nullptr).total;
    };
    for (size_t idx : probes) {
        const double saved = work.params()[idx];
        work.params()[idx] = saved + h;
        const double plus = loss_at();
        work.params()[idx] = saved - h;
        const double minus = loss_at();
        work.params()[idx] = saved;
        const double numeric = (plus - minus) / (2.0 * h);
        const double a = analytic[idx];
        const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

void write_train_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write training log: " + path.string());
    for (const auto& entry : log) {
        ordered_json j;
        j["epoch"] = entry.epoch;
        j["loss_total"] = entry.loss_total;
        j["loss_hard_cls"] = entry.loss_hard_cls;
        j["loss_hard_rea"] = entry.loss_hard_rea;
        j["loss_soft_cls"] = entry.loss_soft_cls;
        j["loss_soft_rea"] = entry.loss_soft_rea;
        j["lr"] = entry.lr;
        out << j.dump() << "\n";
    }
}

} // namespace cotforge
