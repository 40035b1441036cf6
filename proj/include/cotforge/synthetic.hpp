#pragma once

#include "cotforge/losses.hpp"

#include <cstdint>
#include <vector>

namespace cotforge {

// Bundled synthetic task for trainer tests and the desk-scale distillation
// study. Each example is a short prompt whose class keyword determines both
// the class target and a deterministic "reasoning" continuation, so both
// heads of the toy model are learnable.
struct SyntheticSpec {
    int vocab_size = 16;  // >= 12; ids 0..11 are structural, the rest noise
    int prompt_len = 5;   // keyword + noise filler + separator
    std::uint64_t seed = 1234;
};

std::vector<TokenizedExample> make_synthetic_dataset(const SyntheticSpec& spec, size_t count);

} // namespace cotforge
