#include "cotforge/dataset_io.hpp"

#include "cotforge/errors.hpp"
#include "cotforge/util.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace cotforge {

namespace {

std::string get_string(const ordered_json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
        throw ParseError(std::string("missing or non-string field \"") + key + "\"");
    }
    return it->get<std::string>();
}

std::optional<std::string> get_optional_string(const ordered_json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ParseError(std::string("field \"") + key + "\" must be string or null");
    return it->get<std::string>();
}

} // namespace

ordered_json sample_to_json(const Sample& sample) {
    ordered_json j;
    j["id"] = sample.id;
    j["text"] = sample.text;
    j["image_ref"] = sample.image_ref ? ordered_json(*sample.image_ref) : ordered_json(nullptr);
    j["aspect"] = sample.aspect ? ordered_json(*sample.aspect) : ordered_json(nullptr);
    j["gold_label"] = to_string(sample.gold_label);
    j["split"] = to_string(sample.split);
    return j;
}

Sample sample_from_json(const ordered_json& j) {
    Sample s;
    s.id = get_string(j, "id");
    s.text = get_string(j, "text");
    s.image_ref = get_optional_string(j, "image_ref");
    s.aspect = get_optional_string(j, "aspect");
    s.gold_label = parse_label(get_string(j, "gold_label"));
    s.split = parse_split(get_string(j, "split"));
    validate_sample(s);
    return s;
}

ordered_json record_to_json(const ReasoningRecord& record) {
    ordered_json chain;
    chain["text_analysis"] = record.chain.text_analysis;
    chain["image_analysis"] = record.chain.image_analysis;
    chain["conflict_resolution"] = record.chain.conflict_resolution;
    chain["conclusion"] = record.chain.conclusion;
    ordered_json j;
    j["sample_id"] = record.sample_id;
    j["chain"] = std::move(chain);
    j["predicted_label"] = to_string(record.predicted_label);
    j["source"] = to_string(record.source);
    j["attempts"] = record.attempts;
    j["raw_response"] = record.raw_response;
    return j;
}

ReasoningRecord record_from_json(const ordered_json& j) {
    ReasoningRecord r;
    r.sample_id = get_string(j, "sample_id");
    auto chain_it = j.find("chain");
    if (chain_it == j.end() || !chain_it->is_object()) throw ParseError("missing \"chain\" object");
    r.chain.text_analysis = get_string(*chain_it, "text_analysis");
    r.chain.image_analysis = get_string(*chain_it, "image_analysis");
    r.chain.conflict_resolution = get_string(*chain_it, "conflict_resolution");
    r.chain.conclusion = get_string(*chain_it, "conclusion");
    r.predicted_label = parse_label(get_string(j, "predicted_label"));
    r.source = parse_record_source(get_string(j, "source"));
    auto attempts_it = j.find("attempts");
    if (attempts_it == j.end() || !attempts_it->is_number_integer()) {
        throw ParseError("missing integer field \"attempts\"");
    }
    r.attempts = attempts_it->get<int>();
    r.raw_response = get_string(j, "raw_response");
    return r;
}

ordered_json entry_to_json(const DatasetEntry& entry) {
    ordered_json j;
    j["sample"] = sample_to_json(entry.sample);
    j["record"] = record_to_json(entry.record);
    return j;
}

DatasetEntry entry_from_json(const ordered_json& j) {
    auto sample_it = j.find("sample");
    auto record_it = j.find("record");
    if (sample_it == j.end() || record_it == j.end()) {
        throw ParseError("dataset entry needs \"sample\" and \"record\" objects");
    }
    return DatasetEntry{sample_from_json(*sample_it), record_from_json(*record_it)};
}

std::vector<Sample> load_corpus(const std::filesystem::path& path, bool fine_grained) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path.string());

    std::vector<Sample> samples;
    std::set<std::string> ids;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
            samples.push_back(sample_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        const Sample& s = samples.back();
        if (!ids.insert(s.id).second) {
            throw ValidationError(path.string() + ": duplicate sample id \"" + s.id + "\"");
        }
        if (fine_grained && !s.aspect) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": fine-grained corpus but sample \"" + s.id + "\" has no aspect");
        }
        if (!fine_grained && s.aspect) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": coarse-grained corpus but sample \"" + s.id + "\" has an aspect");
        }
    }
    return samples;
}

size_t save_corpus(const std::vector<Sample>& samples, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus file: " + path.string());
    size_t bytes = 0;
    for (const auto& s : samples) {
        std::string line = sample_to_json(s).dump();
        line.push_back('\n');
        out << line;
        bytes += line.size();
    }
    if (!out) throw IoError("write failed: " + path.string());
    return bytes;
}

std::filesystem::path dataset_sidecar_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".meta.json");
}

size_t save_dataset(const ReasoningDataset& ds, const std::filesystem::path& path) {
    validate_dataset(ds); // refuse before any write

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write dataset file: " + path.string());
    size_t bytes = 0;
    for (const auto& entry : ds.entries) {
        std::string line = entry_to_json(entry).dump();
        line.push_back('\n');
        out << line;
        bytes += line.size();
    }
    if (!out) throw IoError("write failed: " + path.string());
    out.close();

    ordered_json meta;
    meta["name"] = ds.name;
    meta["role"] = to_string(ds.role);
    meta["count"] = ds.size();
    ordered_json prov = ordered_json::object();
    for (const auto& [k, v] : ds.provenance) prov[k] = v;
    meta["provenance"] = std::move(prov);
    std::ofstream meta_out(dataset_sidecar_path(path), std::ios::binary);
    if (!meta_out) throw IoError("cannot write sidecar: " + dataset_sidecar_path(path).string());
    meta_out << meta.dump(2) << "\n";
    if (!meta_out) throw IoError("write failed: " + dataset_sidecar_path(path).string());
    return bytes;
}

ReasoningDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream meta_in(dataset_sidecar_path(path));
    if (!meta_in) throw IoError("cannot open dataset sidecar: " + dataset_sidecar_path(path).string());
    ordered_json meta;
    try {
        meta_in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(dataset_sidecar_path(path).string() + ": " + e.what());
    }

    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path.string());
    std::vector<DatasetEntry> entries;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            entries.push_back(entry_from_json(ordered_json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }

    std::map<std::string, std::string> provenance;
    if (meta.contains("provenance")) {
        for (const auto& [k, v] : meta["provenance"].items()) {
            provenance[k] = v.get<std::string>();
        }
    }
    auto ds = make_dataset(meta.at("name").get<std::string>(),
                           parse_dataset_role(meta.at("role").get<std::string>()), std::move(entries),
                           std::move(provenance));
    const size_t declared = meta.at("count").get<size_t>();
    if (declared != ds.size()) {
        throw ValidationError(path.string() + ": sidecar count " + std::to_string(declared) +
                              " does not match " + std::to_string(ds.size()) + " entries");
    }
    return ds;
}

} // namespace cotforge
