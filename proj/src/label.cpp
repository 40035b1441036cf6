#include "cotforge/label.hpp"

#include "cotforge/errors.hpp"
#include "cotforge/util.hpp"

namespace cotforge {

std::string to_string(SentimentLabel label) {
    switch (label) {
    case SentimentLabel::negative: return "negative";
    case SentimentLabel::neutral: return "neutral";
    case SentimentLabel::positive: return "positive";
    }
    throw DomainError("invalid SentimentLabel value");
}

std::optional<SentimentLabel> try_parse_label(std::string_view text) {
    const std::string lowered = to_lower(trim(text));
    if (lowered == "negative") return SentimentLabel::negative;
    if (lowered == "neutral") return SentimentLabel::neutral;
    if (lowered == "positive") return SentimentLabel::positive;
    return std::nullopt;
}

SentimentLabel parse_label(std::string_view text) {
    auto label = try_parse_label(text);
    if (!label) throw ValidationError("not a sentiment label: \"" + std::string(text) + "\"");
    return *label;
}

} // namespace cotforge
