#pragma once

#include "cotforge/reasoning.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace cotforge {

using ordered_json = nlohmann::ordered_json;

// Canonical JSON shapes (fixed field order, lowercase label strings).
ordered_json sample_to_json(const Sample& sample);
Sample sample_from_json(const ordered_json& j);
ordered_json record_to_json(const ReasoningRecord& record);
ReasoningRecord record_from_json(const ordered_json& j);
ordered_json entry_to_json(const DatasetEntry& entry);
DatasetEntry entry_from_json(const ordered_json& j);

// One JSON object per line. fine_grained=true requires an aspect on every
// sample, false forbids it; duplicate ids are rejected.
std::vector<Sample> load_corpus(const std::filesystem::path& path, bool fine_grained);
size_t save_corpus(const std::vector<Sample>& samples, const std::filesystem::path& path);

// JSONL entries plus a <path>.meta.json sidecar holding name, role, count and
// provenance. Returns bytes written (entries file only). The dataset is
// re-validated before any byte is written.
size_t save_dataset(const ReasoningDataset& ds, const std::filesystem::path& path);
ReasoningDataset load_dataset(const std::filesystem::path& path);

std::filesystem::path dataset_sidecar_path(const std::filesystem::path& path);

} // namespace cotforge
