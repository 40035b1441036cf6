#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace cotforge {

// Fixed three-way sentiment vocabulary. The declaration order doubles as the
// total order used for deterministic tie-breaking.
enum class SentimentLabel { negative = 0, neutral = 1, positive = 2 };

inline constexpr int kNumLabels = 3;

constexpr std::array<SentimentLabel, kNumLabels> all_labels() {
    return {SentimentLabel::negative, SentimentLabel::neutral, SentimentLabel::positive};
}

std::string to_string(SentimentLabel label);

// Case-insensitive; any string outside the three members is rejected.
std::optional<SentimentLabel> try_parse_label(std::string_view text);
SentimentLabel parse_label(std::string_view text); // throws ValidationError

} // namespace cotforge
