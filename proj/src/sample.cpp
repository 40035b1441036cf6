#include "cotforge/sample.hpp"

#include "cotforge/errors.hpp"
#include "cotforge/util.hpp"

namespace cotforge {

std::string to_string(Split split) {
    switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
    }
    throw DomainError("invalid Split value");
}

Split parse_split(std::string_view text) {
    const std::string lowered = to_lower(trim(text));
    if (lowered == "train") return Split::train;
    if (lowered == "dev") return Split::dev;
    if (lowered == "test") return Split::test;
    throw ValidationError("not a split name: \"" + std::string(text) + "\"");
}

void validate_sample(const Sample& sample) {
    if (sample.id.empty()) throw ValidationError("sample has empty id");
    if (trim(sample.text).empty()) {
        throw ValidationError("sample \"" + sample.id + "\" has empty text");
    }
}

std::array<size_t, 3> split_counts(const std::vector<Sample>& samples) {
    std::array<size_t, 3> counts{0, 0, 0};
    for (const auto& s : samples) counts[static_cast<size_t>(s.split)]++;
    return counts;
}

} // namespace cotforge
