#pragma once

#include "cotforge/label.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace cotforge {

enum class Split { train = 0, dev = 1, test = 2 };

std::string to_string(Split split);
Split parse_split(std::string_view text);

// One multimodal instance. Image references are opaque: the pipeline routes
// them to the endpoint and never decodes them.
struct Sample {
    std::string id;
    std::string text;
    std::optional<std::string> image_ref;
    std::optional<std::string> aspect;
    SentimentLabel gold_label = SentimentLabel::neutral;
    Split split = Split::train;

    bool operator==(const Sample&) const = default;
};

// Throws ValidationError: empty id, or text empty after trimming.
void validate_sample(const Sample& sample);

// Per-split counts indexed by Split.
std::array<size_t, 3> split_counts(const std::vector<Sample>& samples);

} // namespace cotforge
