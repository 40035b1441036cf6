#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cotforge/synthetic.hpp"
#include "cotforge/trainer.hpp"

#include <cmath>
#include <random>

using namespace cotforge;

namespace {

std::vector<TokenizedExample> small_batch(std::uint64_t seed, size_t count = 4) {
    SyntheticSpec spec;
    spec.seed = seed;
    return make_synthetic_dataset(spec, count);
}

ToyModelConfig small_model_config() { return {16, 6, 0.3}; }

// Minimal full-batch gradient-descent reference, written independently of the
// AdamW trainer. Used as the learnability oracle for the synthetic task: if
// plain GD can halve the loss, the schedule under test has no excuse.
double reference_gd_final_ratio(const std::vector<TokenizedExample>& data, int steps, double lr) {
    ToyModel model({16, 64, 0.3}, 321);
    LossWeights w;
    std::vector<double> grad(model.param_count());
    double first = 0.0;
    double last = 0.0;
    for (int step = 0; step < steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        const auto losses = batch_losses(model, nullptr, data, w, TrainRole::assistant, &grad);
        if (step == 0) first = losses.total;
        last = losses.total;
        for (size_t i = 0; i < grad.size(); ++i) model.params()[i] -= lr * grad[i];
    }
    return last / first;
}

} // namespace

TEST_CASE("analytic gradients match central finite differences") {
    // fresh random models, mixed masked batch, assistant and student objectives
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        auto batch = small_batch(seed);
        ToyModel student(small_model_config(), seed);
        ToyModel assistant(small_model_config(), seed + 100);
        LossWeights w;
        CHECK(grad_check(student, nullptr, batch, w, TrainRole::assistant) < 1e-4);
        CHECK(grad_check(student, &assistant, batch, w, TrainRole::student) < 1e-4);
    }
}

TEST_CASE("gradient is zero for embedding rows of tokens absent from the batch") {
    auto batch = small_batch(5, 2);
    ToyModel model(small_model_config(), 5);
    std::vector<double> grad(model.param_count(), 0.0);
    batch_losses(model, nullptr, batch, LossWeights{}, TrainRole::assistant, &grad);

    std::vector<bool> used(16, false);
    for (const auto& e : batch) {
        for (int id : e.input_ids) used[static_cast<size_t>(id)] = true;
    }
    const auto blocks = model.blocks();
    const auto& embedding = blocks.front();
    REQUIRE(embedding.name == "embedding");
    const size_t d = 6;
    bool found_unused = false;
    for (size_t token = 0; token < 16; ++token) {
        if (used[token]) continue;
        found_unused = true;
        for (size_t i = 0; i < d; ++i) {
            REQUIRE(grad[embedding.offset + token * d + i] == 0.0);
        }
    }
    CHECK(found_unused);
}

TEST_CASE("lambda 0 and lambda 1 produce different gradients when assistant differs") {
    auto batch = small_batch(6);
    ToyModel student(small_model_config(), 6);
    ToyModel assistant(small_model_config(), 999);
    LossWeights w0;
    w0.lambda_kd = 0.0;
    LossWeights w1;
    w1.lambda_kd = 1.0;
    std::vector<double> g0(student.param_count(), 0.0);
    std::vector<double> g1(student.param_count(), 0.0);
    batch_losses(student, &assistant, batch, w0, TrainRole::student, &g0);
    batch_losses(student, &assistant, batch, w1, TrainRole::student, &g1);
    double max_diff = 0.0;
    for (size_t i = 0; i < g0.size(); ++i) max_diff = std::max(max_diff, std::abs(g0[i] - g1[i]));
    CHECK(max_diff > 1e-6);
    // and both still pass the finite-difference check
    CHECK(grad_check(student, &assistant, batch, w0) < 1e-4);
    CHECK(grad_check(student, &assistant, batch, w1) < 1e-4);
}

TEST_CASE("trainer hard losses agree with the standalone loss kernels") {
    auto batch = small_batch(8, 3);
    ToyModel model(small_model_config(), 8);
    std::vector<LogitTensor> logits;
    for (const auto& e : batch) logits.push_back(model.forward(e.input_ids).logits);
    const double standalone = masked_token_nll(logits, batch);
    const auto losses = batch_losses(model, nullptr, batch, LossWeights{}, TrainRole::assistant,
                                     nullptr);
    CHECK(losses.hard_rea == doctest::Approx(standalone).epsilon(1e-12));
    CHECK(losses.total == doctest::Approx(multitask_loss(losses.hard_cls, losses.hard_rea,
                                                         LossWeights{}))
                              .epsilon(1e-12));
}

TEST_CASE("plateau scheduler halves after patience epochs and respects the floor") {
    PlateauScheduler scheduler(3e-4, 2, 1e-6);
    CHECK(scheduler.observe(1.0) == 3e-4);   // improvement (first value)
    CHECK(scheduler.observe(1.1) == 3e-4);   // plateau 1
    CHECK(scheduler.observe(1.05) == 1.5e-4); // plateau 2 -> halve at the boundary
    CHECK(scheduler.observe(0.5) == 1.5e-4); // new best
    CHECK(scheduler.observe(0.9) == 1.5e-4);
    CHECK(scheduler.observe(0.9) == 7.5e-5);

    PlateauScheduler floor_test(2e-6, 1, 1e-6);
    floor_test.observe(1.0);
    CHECK(floor_test.observe(2.0) == 1e-6);
    CHECK(floor_test.observe(3.0) == 1e-6); // never below the floor
}

TEST_CASE("40 micro-batches per epoch with accumulation 20 yields 2 updates per epoch") {
    SyntheticSpec spec;
    auto data = make_synthetic_dataset(spec, 80); // batch 2 -> 40 micro-batches
    ToyModel model({spec.vocab_size, 8, 0.3}, 1);
    TrainConfig cfg;
    cfg.max_epochs = 3;
    auto result = train(model, data, {}, cfg, LossWeights{}, TrainRole::assistant);
    REQUIRE(result.log.size() == 3);
    for (const auto& epoch : result.log) CHECK(epoch.updates == 2);
    CHECK(result.total_updates == 6);
}

TEST_CASE("accumulation counts micro-batches, carrying the remainder across epochs") {
    SyntheticSpec spec;
    auto data = make_synthetic_dataset(spec, 30); // 15 micro-batches per epoch
    ToyModel model({spec.vocab_size, 8, 0.3}, 2);
    TrainConfig cfg;
    cfg.max_epochs = 4; // 60 micro-batches -> updates at 20, 40, 60
    auto result = train(model, data, {}, cfg, LossWeights{}, TrainRole::assistant);
    CHECK(result.total_updates == 3);
    CHECK(result.log[0].updates == 0);
    CHECK(result.log[1].updates == 1);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
    SyntheticSpec spec;
    auto data = make_synthetic_dataset(spec, 40);
    TrainConfig cfg;
    cfg.max_epochs = 4;
    cfg.seed = 77;
    ToyModel a({spec.vocab_size, 10, 0.3}, 42);
    ToyModel b({spec.vocab_size, 10, 0.3}, 42);
    auto log_a = train(a, data, {}, cfg, LossWeights{}, TrainRole::assistant);
    auto log_b = train(b, data, {}, cfg, LossWeights{}, TrainRole::assistant);
    REQUIRE(a.params() == b.params()); // bit-identical trajectories
    for (size_t i = 0; i < log_a.log.size(); ++i) {
        CHECK(log_a.log[i].loss_total == log_b.log[i].loss_total);
    }

    cfg.seed = 78;
    ToyModel c({spec.vocab_size, 10, 0.3}, 42);
    train(c, data, {}, cfg, LossWeights{}, TrainRole::assistant);
    CHECK(a.params() != c.params()); // different shuffle order
}

TEST_CASE("NaN loss aborts naming the offending batch") {
    SyntheticSpec spec;
    auto data = make_synthetic_dataset(spec, 8);
    ToyModel model({spec.vocab_size, 8, 0.3}, 3);
    // poison the shared bias: every forward pass touches it
    for (const auto& block : model.blocks()) {
        if (block.name == "bias") {
            model.params()[block.offset] = std::numeric_limits<double>::quiet_NaN();
        }
    }
    TrainConfig cfg;
    cfg.max_epochs = 1;
    CHECK_THROWS_WITH_AS(train(model, data, {}, cfg, LossWeights{}, TrainRole::assistant),
                         doctest::Contains("micro-batch"), TrainingError);
}

TEST_CASE("student training requires the frozen assistant") {
    SyntheticSpec spec;
    auto data = make_synthetic_dataset(spec, 8);
    ToyModel model({spec.vocab_size, 8, 0.3}, 4);
    TrainConfig cfg;
    cfg.max_epochs = 1;
    CHECK_THROWS_AS(train(model, data, {}, cfg, LossWeights{}, TrainRole::student, nullptr),
                    ConfigError);
}

TEST_CASE("200-example synthetic task: loss halves within 20 epochs under the default schedule") {
    SyntheticSpec spec;
    auto data = make_synthetic_dataset(spec, 200);

    // independent learnability oracle first: plain full-batch GD
    CHECK(reference_gd_final_ratio(data, 60, 0.5) < 0.5);

    ToyModel model({spec.vocab_size, 64, 0.3}, 7);
    TrainConfig cfg; // defaults: 3e-4, batch 2, accumulation 20, 20 epochs
    cfg.seed = 7;
    auto result = train(model, data, {}, cfg, LossWeights{}, TrainRole::assistant);
    REQUIRE(result.log.size() == 20);
    const double first = result.log.front().loss_total;
    const double last = result.log.back().loss_total;
    CHECK(last <= 0.5 * first);
}

TEST_CASE("model save/load round trips parameters and header") {
    const auto path = std::filesystem::temp_directory_path() / "cotforge_model_rt.bin";
    ToyModel model({16, 12, 0.3}, 9);
    nlohmann::ordered_json extras;
    extras["config_digest"] = "abc123";
    model.save(path, extras);

    nlohmann::ordered_json header;
    ToyModel loaded = ToyModel::load(path, &header);
    CHECK(loaded.params() == model.params());
    CHECK(loaded.config() == model.config());
    CHECK(header["config_digest"] == "abc123");
    CHECK(header["param_count"] == model.param_count());
}
