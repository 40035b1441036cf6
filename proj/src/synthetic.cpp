#include "cotforge/synthetic.hpp"

#include "cotforge/errors.hpp"

#include <random>

namespace cotforge {

// Token ids: 1..3 class keywords, 4 separator, 5..7 fixed continuation words,
// 8+ noise. The continuation [5, key, 6, key, 7] is fully determined by the
// prompt, so the reasoning branch can reach near-zero loss while the class
// branch reads the keyword through the pooled state.
std::vector<TokenizedExample> make_synthetic_dataset(const SyntheticSpec& spec, size_t count) {
    if (spec.vocab_size < 12) throw ConfigError("synthetic task needs vocab_size >= 12");
    if (spec.prompt_len < 3) throw ConfigError("synthetic task needs prompt_len >= 3");

    std::mt19937_64 rng(spec.seed);
    const int noise_lo = 8;
    const int noise_hi = spec.vocab_size; // exclusive

    std::vector<TokenizedExample> data;
    data.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        const int y = static_cast<int>(i % 3);
        std::vector<int> seq;
        seq.reserve(spec.prompt_len + 5);
        seq.push_back(1 + y);
        for (int j = 0; j < spec.prompt_len - 2; ++j) {
            seq.push_back(noise_lo + static_cast<int>(rng() % (noise_hi - noise_lo)));
        }
        seq.push_back(4);
        const int key = 1 + y;
        for (int t : {5, key, 6, key, 7}) seq.push_back(t);

        TokenizedExample example;
        example.class_target = y;
        example.input_ids.assign(seq.begin(), seq.end() - 1);
        example.target_ids.assign(seq.begin() + 1, seq.end());
        for (size_t j = 0; j + 1 < static_cast<size_t>(spec.prompt_len); ++j) {
            example.target_ids[j] = kMaskSentinel;
        }
        data.push_back(std::move(example));
    }
    return data;
}

} // namespace cotforge
