#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cotforge/losses.hpp"
#include "cotforge/synthetic.hpp"
#include "cotforge/toy_model.hpp"
#include "cotforge/trainer.hpp"
#include "cotforge/util.hpp"

#include <cmath>
#include <random>

using namespace cotforge;

namespace {

// Frozen oracle values, computed by high-precision evaluation of the defining
// formulas before the implementation existed (see the oracle helpers below).
constexpr double kLnHalf = 0.6931471805599453;     // -ln(0.5)
constexpr double kSoftmax12Tau1_0 = 0.2689414213699951;
constexpr double kSoftmax12Tau1_1 = 0.7310585786300049;
constexpr double kSoftmax12Tau2_0 = 0.3775406687981455;
constexpr double kSoftmax12Tau2_1 = 0.6224593312018546;
constexpr double kKlHalfVsQuarterThreeQuarter = 0.14384103622589045;
constexpr double kKlReversed = 0.13081203594113694;

// Independent direct evaluation of the softmax/KL formulas with long doubles.
std::vector<double> oracle_softmax(const std::vector<double>& z, double tau) {
    long double sum = 0.0L;
    std::vector<long double> e(z.size());
    for (size_t i = 0; i < z.size(); ++i) {
        e[i] = expl(static_cast<long double>(z[i]) / tau);
        sum += e[i];
    }
    std::vector<double> p(z.size());
    for (size_t i = 0; i < z.size(); ++i) p[i] = static_cast<double>(e[i] / sum);
    return p;
}

double oracle_kl(const std::vector<double>& a, const std::vector<double>& b) {
    long double kl = 0.0L;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i] > 0) kl += a[i] * logl(static_cast<long double>(a[i]) / b[i]);
    }
    return static_cast<double>(kl);
}

LogitTensor tensor_from(std::vector<std::vector<double>> rows,
                        std::array<double, 3> class_logits = {0, 0, 0}) {
    LogitTensor t;
    const size_t r = rows.size();
    const size_t c = r ? rows[0].size() : 0;
    t.token_logits = TokenLogits(r, c);
    for (size_t i = 0; i < r; ++i) {
        for (size_t j = 0; j < c; ++j) t.token_logits.at(i, j) = rows[i][j];
    }
    t.class_logits = class_logits;
    return t;
}

} // namespace

TEST_CASE("masked_token_nll matches the frozen oracle on a single position") {
    // two tokens with equal logits -> probability 0.5 on the target
    TokenizedExample example;
    example.input_ids = {0};
    example.target_ids = {1};
    example.class_target = 0;
    auto logits = tensor_from({{2.0, 2.0}});
    std::vector<LogitTensor> batch_logits{logits};
    std::vector<TokenizedExample> batch{example};
    CHECK(masked_token_nll(batch_logits, batch) == doctest::Approx(kLnHalf).epsilon(1e-12));
}

TEST_CASE("masked_token_nll: near-delta softmax drives the loss to zero") {
    TokenizedExample example;
    example.input_ids = {0};
    example.target_ids = {0};
    auto logits = tensor_from({{30.0, 0.0}});
    std::vector<LogitTensor> bl{logits};
    std::vector<TokenizedExample> be{example};
    CHECK(masked_token_nll(bl, be) == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("masked_token_nll sums within a sample and averages over the batch") {
    // engineered per-sample sums 1.0 and 3.0 -> batch mean 2.0
    // single-position samples: choose logits so -log p(target) is exact
    auto logit_for_nll = [](double nll) {
        // two-way softmax: p = 1/(1+e^-g) = e^-nll  =>  g = ln(e^-nll/(1-e^-nll))
        const double p = std::exp(-nll);
        return std::log(p / (1.0 - p));
    };
    TokenizedExample e1;
    e1.input_ids = {0};
    e1.target_ids = {0};
    auto l1 = tensor_from({{logit_for_nll(1.0), 0.0}});
    TokenizedExample e2;
    e2.input_ids = {0};
    e2.target_ids = {0};
    auto l2 = tensor_from({{logit_for_nll(3.0), 0.0}});
    std::vector<LogitTensor> bl{l1, l2};
    std::vector<TokenizedExample> be{e1, e2};
    CHECK(masked_token_nll(bl, be) == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("masked positions are bit-exactly ignored") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> dist(-3.0, 3.0);
    for (int round = 0; round < 50; ++round) {
        const size_t l = 4;
        const size_t v = 5;
        LogitTensor logits;
        logits.token_logits = TokenLogits(l, v);
        for (auto& x : logits.token_logits.data) x = dist(rng);
        TokenizedExample e;
        e.input_ids = {0, 1, 2, 3};
        e.target_ids = {kMaskSentinel, 2, kMaskSentinel, 4};
        std::vector<LogitTensor> bl{logits};
        std::vector<TokenizedExample> be{e};
        const double base = masked_token_nll(bl, be);

        // mutate the logits under masked rows and the masked target contents
        auto mutated = logits;
        for (size_t k = 0; k < v; ++k) {
            mutated.token_logits.at(0, k) = dist(rng);
            mutated.token_logits.at(2, k) = dist(rng);
        }
        std::vector<LogitTensor> bl2{mutated};
        REQUIRE(masked_token_nll(bl2, be) == base); // bit-exact
    }
}

TEST_CASE("all-masked batch is defined as zero with a warning") {
    TokenizedExample e;
    e.input_ids = {0, 1};
    e.target_ids = {kMaskSentinel, kMaskSentinel};
    std::vector<LogitTensor> bl{tensor_from({{0, 0}, {0, 0}})};
    std::vector<TokenizedExample> be{e};
    std::vector<std::string> warnings;
    set_warning_handler([&](const std::string& m) { warnings.push_back(m); });
    CHECK(masked_token_nll(bl, be) == 0.0);
    set_warning_handler(nullptr);
    REQUIRE(warnings.size() == 1);
}

TEST_CASE("multitask_loss is the weighted sum of Appendix-style weights") {
    LossWeights w; // 0.2 / 0.8 defaults
    CHECK(multitask_loss(1.0, 2.0, w) == doctest::Approx(1.8).epsilon(1e-15));
    CHECK(multitask_loss(5.0, 0.0, w) == doctest::Approx(1.0).epsilon(1e-15));
    LossWeights only_rea;
    only_rea.lambda_cls = 0.0;
    only_rea.lambda_rea = 1.0;
    CHECK(multitask_loss(123.0, 2.5, only_rea) == 2.5);
}

TEST_CASE("temp_softmax matches the frozen oracle values") {
    auto p1 = temp_softmax(std::vector<double>{1.0, 2.0}, 1.0);
    CHECK(p1[0] == doctest::Approx(kSoftmax12Tau1_0).epsilon(1e-12));
    CHECK(p1[1] == doctest::Approx(kSoftmax12Tau1_1).epsilon(1e-12));
    auto p2 = temp_softmax(std::vector<double>{1.0, 2.0}, 2.0);
    CHECK(p2[0] == doctest::Approx(kSoftmax12Tau2_0).epsilon(1e-12));
    CHECK(p2[1] == doctest::Approx(kSoftmax12Tau2_1).epsilon(1e-12));
    // smoother at higher temperature
    CHECK(p2[1] < p1[1]);
    // symmetric inputs split evenly at any temperature
    for (double tau : {0.1, 1.0, 7.0}) {
        auto p = temp_softmax(std::vector<double>{0.0, 0.0}, tau);
        CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
    }
    CHECK_THROWS_AS(temp_softmax(std::vector<double>{1.0}, 0.0), DomainError);
    CHECK_THROWS_AS(temp_softmax(std::vector<double>{1.0}, -2.0), DomainError);
}

TEST_CASE("temp_softmax properties over random inputs") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> logit(-50.0, 50.0);
    std::uniform_real_distribution<double> log_tau(std::log(1e-3), std::log(1e6));
    for (int round = 0; round < 2000; ++round) {
        const size_t n = 2 + rng() % 6;
        std::vector<double> z(n);
        for (auto& x : z) x = logit(rng);
        const double tau = std::exp(log_tau(rng));
        auto p = temp_softmax(z, tau);
        double sum = 0.0;
        for (double v : p) {
            REQUIRE(v >= 0.0);
            sum += v;
        }
        REQUIRE(sum == doctest::Approx(1.0).epsilon(1e-9));
        const auto argmax_z = std::max_element(z.begin(), z.end()) - z.begin();
        const auto argmax_p = std::max_element(p.begin(), p.end()) - p.begin();
        REQUIRE(p[argmax_z] == doctest::Approx(p[argmax_p]).epsilon(1e-12));
    }
}

TEST_CASE("kl_divergence matches the frozen oracle and is asymmetric") {
    std::vector<double> pa{0.5, 0.5};
    std::vector<double> ps{0.25, 0.75};
    CHECK(kl_divergence(pa, ps) == doctest::Approx(kKlHalfVsQuarterThreeQuarter).epsilon(1e-12));
    CHECK(kl_divergence(ps, pa) == doctest::Approx(kKlReversed).epsilon(1e-12));
    CHECK(kl_divergence(pa, ps) != kl_divergence(ps, pa));
    CHECK(kl_divergence(std::vector<double>{0.3, 0.7}, std::vector<double>{0.3, 0.7}) == 0.0);
    CHECK_THROWS_AS(kl_divergence(std::vector<double>{1.0}, std::vector<double>{0.5, 0.5}),
                    ShapeError);
    CHECK_THROWS_AS(kl_divergence(std::vector<double>{0.9, 0.3}, std::vector<double>{0.5, 0.5}),
                    DomainError);
}

TEST_CASE("kl_divergence is non-negative and zero on identical inputs (Gibbs)") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> dist(0.01, 1.0);
    for (int round = 0; round < 2000; ++round) {
        const size_t n = 2 + rng() % 5;
        std::vector<double> a(n);
        std::vector<double> b(n);
        double sa = 0;
        double sb = 0;
        for (size_t i = 0; i < n; ++i) {
            a[i] = dist(rng);
            b[i] = dist(rng);
            sa += a[i];
            sb += b[i];
        }
        for (size_t i = 0; i < n; ++i) {
            a[i] /= sa;
            b[i] /= sb;
        }
        REQUIRE(kl_divergence(a, b) >= 0.0);
        REQUIRE(kl_divergence(a, a) == doctest::Approx(0.0).epsilon(1e-9));
        // cross-check against the independent long-double evaluation
        REQUIRE(kl_divergence(a, b) == doctest::Approx(oracle_kl(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("soft_losses compose the softmax and KL oracles") {
    LossWeights w;
    w.tau = 1.0;

    SUBCASE("identical logits give exactly zero") {
        auto t = tensor_from({{1.0, -2.0, 0.5}}, {0.3, -0.1, 0.0});
        auto [cls, rea] = soft_losses(t, t, std::vector<int>{2}, w);
        CHECK(cls == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(rea == doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("single unmasked position reproduces the KL example") {
        // logits chosen so tempered distributions are [0.5,0.5] vs [0.25,0.75]
        const double g_a = 0.0;                 // ln(1) gap -> [0.5, 0.5]
        const double g_s = std::log(3.0);       // gap ln3 -> [0.25, 0.75]
        auto assistant = tensor_from({{g_a, 0.0}}, {0, 0, 0});
        auto student = tensor_from({{0.0, g_s}}, {0, 0, 0});
        auto [cls, rea] = soft_losses(student, assistant, std::vector<int>{1}, w);
        CHECK(rea == doctest::Approx(kKlHalfVsQuarterThreeQuarter).epsilon(1e-12));
        CHECK(cls == doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("masked positions do not contribute") {
        auto assistant = tensor_from({{3.0, -1.0}, {0.0, 0.0}});
        auto student = tensor_from({{-2.0, 5.0}, {0.0, 0.0}});
        auto [cls_all, rea_all] = soft_losses(student, assistant, std::vector<int>{0, 1}, w);
        auto [cls_one, rea_one] =
            soft_losses(student, assistant, std::vector<int>{0, kMaskSentinel}, w);
        // second row has identical logits: halves the mean instead of adding
        CHECK(rea_all == doctest::Approx(rea_one / 2.0).epsilon(1e-12));
        auto [cls_none, rea_none] = soft_losses(
            student, assistant, std::vector<int>{kMaskSentinel, kMaskSentinel}, w);
        CHECK(rea_none == 0.0);
        CHECK(cls_none == cls_all);
    }

    SUBCASE("very large tau flattens both losses to zero") {
        w.tau = 1e6;
        auto assistant = tensor_from({{4.0, -4.0}}, {3.0, -3.0, 0.0});
        auto student = tensor_from({{-4.0, 4.0}}, {-3.0, 3.0, 0.0});
        auto [cls, rea] = soft_losses(student, assistant, std::vector<int>{1}, w);
        CHECK(std::abs(cls) < 1e-6);
        CHECK(std::abs(rea) < 1e-6);
    }
}

TEST_CASE("total_student_loss mixes hard and soft branches by lambda") {
    LossWeights w; // lambda_kd = 0.3
    // hard multitask 1.0 and soft multitask 2.0 -> 0.7 + 0.6 = 1.3
    // choose components that hit those multitask values with 0.2/0.8 weights
    const double hard_cls = 1.0;
    const double hard_rea = 1.0; // 0.2 + 0.8 = 1.0
    const double soft_cls = 2.0;
    const double soft_rea = 2.0; // 0.4 + 1.6 = 2.0
    CHECK(total_student_loss(hard_cls, hard_rea, soft_cls, soft_rea, w) ==
          doctest::Approx(1.3).epsilon(1e-15));

    SUBCASE("lambda 0 and 1 are the pure branches") {
        w.lambda_kd = 0.0;
        CHECK(total_student_loss(1.0, 1.0, 99.0, 99.0, w) == doctest::Approx(1.0));
        w.lambda_kd = 1.0;
        CHECK(total_student_loss(99.0, 99.0, 2.0, 2.0, w) == doctest::Approx(2.0));
    }

    SUBCASE("linear in lambda for fixed components") {
        std::mt19937_64 rng(3);
        std::uniform_real_distribution<double> dist(0.0, 4.0);
        const double hc = dist(rng), hr = dist(rng), sc = dist(rng), sr = dist(rng);
        LossWeights w0;
        w0.lambda_kd = 0.0;
        LossWeights w1;
        w1.lambda_kd = 1.0;
        const double at0 = total_student_loss(hc, hr, sc, sr, w0);
        const double at1 = total_student_loss(hc, hr, sc, sr, w1);
        for (double lambda : {0.1, 0.25, 0.5, 0.77, 0.9}) {
            LossWeights wl;
            wl.lambda_kd = lambda;
            CHECK(total_student_loss(hc, hr, sc, sr, wl) ==
                  doctest::Approx((1 - lambda) * at0 + lambda * at1).epsilon(1e-12));
        }
    }

    SUBCASE("optional tau^2 rescaling multiplies only the soft branch") {
        LossWeights scaled;
        scaled.scale_kl_by_tau_sq = true;
        scaled.tau = 2.0;
        CHECK(total_student_loss(1.0, 1.0, 2.0, 2.0, scaled) ==
              doctest::Approx(0.7 + 0.3 * 4.0 * 2.0).epsilon(1e-12));
    }
}

TEST_CASE("softmax agrees with the independent long-double oracle") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> dist(-10.0, 10.0);
    for (int round = 0; round < 500; ++round) {
        std::vector<double> z(3);
        for (auto& x : z) x = dist(rng);
        for (double tau : {0.5, 1.0, 2.0}) {
            auto mine = temp_softmax(z, tau);
            auto oracle = oracle_softmax(z, tau);
            for (size_t i = 0; i < z.size(); ++i) {
                REQUIRE(mine[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("every toy-model parameter receives gradient on a covering batch") {
    SyntheticSpec spec;
    auto data = make_synthetic_dataset(spec, 48); // covers all keywords and noise ids
    ToyModel model({spec.vocab_size, 12, 0.3}, 11);
    std::vector<double> grad(model.param_count(), 0.0);
    // append input coverage for every vocabulary id
    TokenizedExample cover;
    for (int id = 0; id < spec.vocab_size; ++id) {
        cover.input_ids.push_back(id);
        cover.target_ids.push_back((id + 1) % spec.vocab_size);
    }
    cover.class_target = 1;
    data.push_back(cover);
    batch_losses(model, nullptr, data, LossWeights{}, TrainRole::assistant, &grad);
    size_t zero_params = 0;
    for (double g : grad) {
        if (g == 0.0) ++zero_params;
    }
    CHECK(zero_params == 0);
}
