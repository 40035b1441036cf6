#pragma once

#include "cotforge/sample.hpp"

#include <map>
#include <string>
#include <vector>

namespace cotforge {

// Four-step chain-of-thought. image_analysis may hold the literal "N/A"
// sentinel for text-only corpora; everything else must be non-empty.
struct ReasoningChain {
    std::string text_analysis;
    std::string image_analysis;
    std::string conflict_resolution;
    std::string conclusion;

    bool operator==(const ReasoningChain&) const = default;
};

void validate_chain(const ReasoningChain& chain);

enum class RecordSource { teacher_stage1 = 0, teacher_stage2 = 1, assistant = 2 };

std::string to_string(RecordSource source);
RecordSource parse_record_source(std::string_view text);

struct ReasoningRecord {
    std::string sample_id;
    ReasoningChain chain;
    SentimentLabel predicted_label = SentimentLabel::neutral;
    RecordSource source = RecordSource::teacher_stage1;
    int attempts = 1;
    std::string raw_response;

    bool operator==(const ReasoningRecord&) const = default;
};

enum class DatasetRole {
    teacher_stage1 = 0,
    teacher_stage2 = 1,
    teacher_full = 2,
    assistant_aug = 3,
    full = 4,
};

std::string to_string(DatasetRole role);
DatasetRole parse_dataset_role(std::string_view text);

struct DatasetEntry {
    Sample sample;
    ReasoningRecord record;

    bool operator==(const DatasetEntry&) const = default;
};

// Role-tagged collection of (sample, record) pairs. Entries are kept sorted
// by (sample_id, source) so serialization is deterministic. Immutable after
// construction via make_dataset.
struct ReasoningDataset {
    std::string name;
    DatasetRole role = DatasetRole::teacher_full;
    std::vector<DatasetEntry> entries;
    std::map<std::string, std::string> provenance;

    size_t size() const { return entries.size(); }
};

// Sorts entries canonically and enforces the role invariants:
//   teacher_stage1  -> predicted == gold on every entry
//   teacher_stage2  -> predicted == gold (label-conditioned generation)
//   assistant_aug   -> predicted == gold and split == train
// Throws ValidationError on violation.
ReasoningDataset make_dataset(std::string name, DatasetRole role,
                              std::vector<DatasetEntry> entries,
                              std::map<std::string, std::string> provenance = {});

void validate_dataset(const ReasoningDataset& ds);

// Union with disjoint (sample_id, source) pairs. Role of the result follows
// the construction chain: stage1 + stage2 -> teacher_full,
// teacher_full + assistant_aug -> full, equal roles stay put.
ReasoningDataset merge_datasets(const ReasoningDataset& a, const ReasoningDataset& b);

// Structural equality over canonical ordering; provenance keys containing
// "timestamp" are ignored.
bool datasets_equal(const ReasoningDataset& a, const ReasoningDataset& b);

} // namespace cotforge
