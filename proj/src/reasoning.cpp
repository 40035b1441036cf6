#include "cotforge/reasoning.hpp"

#include "cotforge/errors.hpp"
#include "cotforge/util.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace cotforge {

void validate_chain(const ReasoningChain& chain) {
    if (trim(chain.text_analysis).empty()) throw ValidationError("chain: empty text_analysis");
    if (trim(chain.image_analysis).empty()) throw ValidationError("chain: empty image_analysis");
    if (trim(chain.conflict_resolution).empty())
        throw ValidationError("chain: empty conflict_resolution");
    if (trim(chain.conclusion).empty()) throw ValidationError("chain: empty conclusion");
}

std::string to_string(RecordSource source) {
    switch (source) {
    case RecordSource::teacher_stage1: return "teacher_stage1";
    case RecordSource::teacher_stage2: return "teacher_stage2";
    case RecordSource::assistant: return "assistant";
    }
    throw DomainError("invalid RecordSource value");
}

RecordSource parse_record_source(std::string_view text) {
    const std::string s = trim(text);
    if (s == "teacher_stage1") return RecordSource::teacher_stage1;
    if (s == "teacher_stage2") return RecordSource::teacher_stage2;
    if (s == "assistant") return RecordSource::assistant;
    throw ValidationError("not a record source: \"" + s + "\"");
}

std::string to_string(DatasetRole role) {
    switch (role) {
    case DatasetRole::teacher_stage1: return "teacher_stage1";
    case DatasetRole::teacher_stage2: return "teacher_stage2";
    case DatasetRole::teacher_full: return "teacher_full";
    case DatasetRole::assistant_aug: return "assistant_aug";
    case DatasetRole::full: return "full";
    }
    throw DomainError("invalid DatasetRole value");
}

DatasetRole parse_dataset_role(std::string_view text) {
    const std::string s = trim(text);
    if (s == "teacher_stage1") return DatasetRole::teacher_stage1;
    if (s == "teacher_stage2") return DatasetRole::teacher_stage2;
    if (s == "teacher_full") return DatasetRole::teacher_full;
    if (s == "assistant_aug") return DatasetRole::assistant_aug;
    if (s == "full") return DatasetRole::full;
    throw ValidationError("not a dataset role: \"" + s + "\"");
}

namespace {

bool entry_less(const DatasetEntry& a, const DatasetEntry& b) {
    if (a.record.sample_id != b.record.sample_id) return a.record.sample_id < b.record.sample_id;
    return static_cast<int>(a.record.source) < static_cast<int>(b.record.source);
}

} // namespace

void validate_dataset(const ReasoningDataset& ds) {
    std::set<std::pair<std::string, int>> keys;
    for (const auto& entry : ds.entries) {
        validate_sample(entry.sample);
        validate_chain(entry.record.chain);
        if (entry.sample.image_ref && trim(entry.record.chain.image_analysis) == "N/A") {
            throw ValidationError("dataset \"" + ds.name + "\": sample \"" + entry.sample.id +
                                  "\" has an image but its chain declares image analysis N/A");
        }
        if (entry.record.sample_id != entry.sample.id) {
            throw ValidationError("dataset \"" + ds.name + "\": record sample_id \"" +
                                  entry.record.sample_id + "\" does not match sample id \"" +
                                  entry.sample.id + "\"");
        }
        if (entry.record.attempts < 1) {
            throw ValidationError("dataset \"" + ds.name + "\": record for \"" + entry.sample.id +
                                  "\" has attempts < 1");
        }
        if (!keys.emplace(entry.record.sample_id, static_cast<int>(entry.record.source)).second) {
            throw ValidationError("dataset \"" + ds.name + "\": duplicate (sample_id, source) pair for \"" +
                                  entry.record.sample_id + "\"");
        }
        const bool label_matches = entry.record.predicted_label == entry.sample.gold_label;
        switch (ds.role) {
        case DatasetRole::teacher_stage1:
            if (!label_matches)
                throw ValidationError("teacher_stage1 dataset contains mispredicted sample \"" +
                                      entry.sample.id + "\"");
            break;
        case DatasetRole::teacher_stage2:
            if (!label_matches)
                throw ValidationError("teacher_stage2 dataset must be label-conditioned; sample \"" +
                                      entry.sample.id + "\" disagrees with gold");
            break;
        case DatasetRole::assistant_aug:
            if (!label_matches)
                throw ValidationError("assistant_aug dataset contains mispredicted sample \"" +
                                      entry.sample.id + "\"");
            if (entry.sample.split != Split::train)
                throw ValidationError("assistant_aug dataset contains non-train sample \"" +
                                      entry.sample.id + "\"");
            break;
        case DatasetRole::teacher_full:
        case DatasetRole::full:
            break;
        }
    }
    if (!std::is_sorted(ds.entries.begin(), ds.entries.end(), entry_less)) {
        throw ValidationError("dataset \"" + ds.name + "\": entries not in canonical order");
    }
}

ReasoningDataset make_dataset(std::string name, DatasetRole role,
                              std::vector<DatasetEntry> entries,
                              std::map<std::string, std::string> provenance) {
    std::sort(entries.begin(), entries.end(), entry_less);
    ReasoningDataset ds{std::move(name), role, std::move(entries), std::move(provenance)};
    validate_dataset(ds);
    return ds;
}

ReasoningDataset merge_datasets(const ReasoningDataset& a, const ReasoningDataset& b) {
    DatasetRole role;
    auto pair_is = [&](DatasetRole x, DatasetRole y) {
        return (a.role == x && b.role == y) || (a.role == y && b.role == x);
    };
    if (a.role == b.role) {
        role = a.role;
    } else if (pair_is(DatasetRole::teacher_stage1, DatasetRole::teacher_stage2)) {
        role = DatasetRole::teacher_full;
    } else if (pair_is(DatasetRole::teacher_full, DatasetRole::assistant_aug)) {
        role = DatasetRole::full;
    } else {
        throw ValidationError("cannot merge dataset roles " + to_string(a.role) + " and " +
                              to_string(b.role));
    }

    std::set<std::pair<std::string, int>> seen;
    for (const auto& e : a.entries) seen.emplace(e.record.sample_id, static_cast<int>(e.record.source));
    std::vector<std::string> collisions;
    for (const auto& e : b.entries) {
        if (seen.count({e.record.sample_id, static_cast<int>(e.record.source)})) {
            collisions.push_back(e.record.sample_id + "/" + to_string(e.record.source));
        }
    }
    if (!collisions.empty()) {
        std::ostringstream msg;
        msg << "merge conflict on " << collisions.size() << " (sample_id, source) pair(s):";
        for (const auto& c : collisions) msg << " " << c;
        throw ValidationError(msg.str());
    }

    std::vector<DatasetEntry> merged = a.entries;
    merged.insert(merged.end(), b.entries.begin(), b.entries.end());

    std::map<std::string, std::string> provenance;
    provenance["parent_a"] = a.name;
    provenance["parent_b"] = b.name;
    provenance["parent_a_count"] = std::to_string(a.size());
    provenance["parent_b_count"] = std::to_string(b.size());
    return make_dataset(a.name + "+" + b.name, role, std::move(merged), std::move(provenance));
}

bool datasets_equal(const ReasoningDataset& a, const ReasoningDataset& b) {
    if (a.name != b.name || a.role != b.role || a.entries != b.entries) return false;
    auto stripped = [](const std::map<std::string, std::string>& m) {
        std::map<std::string, std::string> out;
        for (const auto& [k, v] : m) {
            if (k.find("timestamp") == std::string::npos) out.emplace(k, v);
        }
        return out;
    };
    return stripped(a.provenance) == stripped(b.provenance);
}

} // namespace cotforge
