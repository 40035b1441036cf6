#pragma once

#include "cotforge/gateway.hpp"
#include "cotforge/reasoning.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace cotforge {

struct ParseDefect {
    enum class Kind {
        missing_section,
        empty_section,
        duplicate_section,
        out_of_order_section,
        missing_label,
        invalid_label,
        multiple_labels,
    };
    Kind kind;
    std::string detail;

    bool operator==(const ParseDefect&) const = default;
};

std::string to_string(ParseDefect::Kind kind);

// Either a (chain, label) pair or a non-empty defect list; never both.
struct ParseOutcome {
    std::optional<ReasoningChain> chain;
    std::optional<SentimentLabel> label;
    std::vector<ParseDefect> defects;

    bool ok() const { return defects.empty(); }
};

// Accepts any string. Success requires the four section headers in order
// with non-empty bodies and exactly one "Sentiment: <label>" line. Header
// matching is case-insensitive and tolerant of markdown decoration.
ParseOutcome parse_reasoning(const std::string& raw);

// Canonical text form; parse_reasoning inverts it.
std::string format_chain(const ReasoningChain& chain, SentimentLabel label);

struct ArcPolicy {
    int max_attempts = 3;
};

struct ArcFailure {
    std::string sample_id;
    PromptStage stage = PromptStage::predict;
    std::vector<std::string> raw_responses;              // one per attempt
    std::vector<std::vector<ParseDefect>> defect_lists;  // parallel to raw_responses
};

using ArcResult = std::variant<ReasoningRecord, ArcFailure>;

// Bounded regeneration loop: calls the gateway up to policy.max_attempts
// times and keeps the first structurally valid output. For the explain stage
// the record's label is forced to the sample's gold label; a disagreeing
// model label is only a warning. `source` stamps the resulting record.
ArcResult generate_with_arc(const Sample& sample, PromptStage stage, Gateway& gateway,
                            const TemplateSet& templates, const ArcPolicy& policy,
                            RecordSource source);

// JSON Lines quarantine file for manual inspection. A non-empty
// config_digest is stamped onto every line.
void append_quarantine(const std::vector<ArcFailure>& failures, const std::filesystem::path& path,
                       const std::string& config_digest = "");

} // namespace cotforge
