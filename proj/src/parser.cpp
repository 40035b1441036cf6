#include "cotforge/parser.hpp"

#include "cotforge/dataset_io.hpp"
#include "cotforge/util.hpp"

#include <array>
#include <fstream>
#include <sstream>

namespace cotforge {

namespace {

constexpr std::array<const char*, 4> kSectionNames = {"text analysis", "image analysis",
                                                      "conflict resolution", "conclusion"};

bool is_decor(char c) { return c == '#' || c == '*' || c == '-' || c == '>' || c == '_' || c == '`'; }

// Leading markdown decoration and whitespace, for header matching only.
std::string_view strip_decor_prefix(std::string_view line) {
    size_t i = 0;
    while (i < line.size() &&
           (is_decor(line[i]) || std::isspace(static_cast<unsigned char>(line[i])))) {
        ++i;
    }
    return line.substr(i);
}

// If `line` opens with `name` (case-insensitive) followed by optional
// decoration and a colon, returns the text after the colon.
std::optional<std::string> match_labeled_line(std::string_view line, std::string_view name) {
    std::string_view rest = strip_decor_prefix(line);
    if (rest.size() < name.size()) return std::nullopt;
    for (size_t i = 0; i < name.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(rest[i])) != name[i]) return std::nullopt;
    }
    size_t i = name.size();
    while (i < rest.size() &&
           (rest[i] == '*' || rest[i] == '_' || rest[i] == ' ' || rest[i] == '\t')) {
        ++i;
    }
    if (i >= rest.size() || rest[i] != ':') return std::nullopt;
    ++i;
    std::string_view body = rest.substr(i);
    size_t start = 0;
    while (start < body.size() &&
           (body[start] == '*' || body[start] == '_' ||
            std::isspace(static_cast<unsigned char>(body[start])))) {
        ++start;
    }
    return std::string(body.substr(start));
}

std::string strip_decor_around(std::string_view token) {
    size_t begin = 0;
    size_t end = token.size();
    auto droppable = [](char c) {
        return is_decor(c) || c == '"' || c == '\'' || c == '.' || c == '!' || c == ',' ||
               std::isspace(static_cast<unsigned char>(c));
    };
    while (begin < end && droppable(token[begin])) ++begin;
    while (end > begin && droppable(token[end - 1])) --end;
    return std::string(token.substr(begin, end - begin));
}

} // namespace

std::string to_string(ParseDefect::Kind kind) {
    switch (kind) {
    case ParseDefect::Kind::missing_section: return "missing_section";
    case ParseDefect::Kind::empty_section: return "empty_section";
    case ParseDefect::Kind::duplicate_section: return "duplicate_section";
    case ParseDefect::Kind::out_of_order_section: return "out_of_order_section";
    case ParseDefect::Kind::missing_label: return "missing_label";
    case ParseDefect::Kind::invalid_label: return "invalid_label";
    case ParseDefect::Kind::multiple_labels: return "multiple_labels";
    }
    return "unknown";
}

ParseOutcome parse_reasoning(const std::string& raw) {
    std::array<std::vector<std::string>, 4> bodies; // one list of body chunks per section
    std::array<int, 4> header_count{0, 0, 0, 0};
    std::vector<int> header_sequence;
    std::vector<std::string> label_tokens;

    int current_section = -1;
    std::istringstream lines(raw);
    std::string line;
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();

        bool matched = false;
        for (int s = 0; s < 4; ++s) {
            if (auto inline_body = match_labeled_line(line, kSectionNames[s])) {
                header_count[s]++;
                if (header_count[s] == 1) header_sequence.push_back(s);
                current_section = s;
                if (!trim(*inline_body).empty()) bodies[s].push_back(*inline_body);
                matched = true;
                break;
            }
        }
        if (matched) continue;

        if (auto token = match_labeled_line(line, "sentiment")) {
            label_tokens.push_back(*token);
            current_section = -1; // the label line terminates the conclusion body
            continue;
        }

        if (current_section >= 0 && !trim(line).empty()) {
            bodies[current_section].push_back(line);
        }
    }

    ParseOutcome outcome;
    static constexpr std::array<const char*, 4> kFieldNames = {"text_analysis", "image_analysis",
                                                               "conflict_resolution", "conclusion"};
    for (int s = 0; s < 4; ++s) {
        if (header_count[s] == 0) {
            outcome.defects.push_back({ParseDefect::Kind::missing_section, kFieldNames[s]});
        } else if (header_count[s] > 1) {
            outcome.defects.push_back({ParseDefect::Kind::duplicate_section, kFieldNames[s]});
        } else if (bodies[s].empty()) {
            outcome.defects.push_back({ParseDefect::Kind::empty_section, kFieldNames[s]});
        }
    }
    for (size_t i = 1; i < header_sequence.size(); ++i) {
        if (header_sequence[i] < header_sequence[i - 1]) {
            outcome.defects.push_back(
                {ParseDefect::Kind::out_of_order_section, kFieldNames[header_sequence[i]]});
        }
    }

    std::optional<SentimentLabel> label;
    if (label_tokens.empty()) {
        outcome.defects.push_back({ParseDefect::Kind::missing_label, ""});
    } else if (label_tokens.size() > 1) {
        outcome.defects.push_back(
            {ParseDefect::Kind::multiple_labels, std::to_string(label_tokens.size()) + " label lines"});
    } else {
        std::string token = strip_decor_around(label_tokens.front());
        label = try_parse_label(token);
        if (!label) {
            // Tolerate a trailing remark after the label word itself.
            const auto space = token.find_first_of(" \t");
            if (space != std::string::npos) label = try_parse_label(token.substr(0, space));
        }
        if (!label) {
            outcome.defects.push_back({ParseDefect::Kind::invalid_label, token});
        }
    }

    if (!outcome.defects.empty()) return outcome;

    ReasoningChain chain;
    auto join = [](const std::vector<std::string>& chunks) {
        std::string out;
        for (size_t i = 0; i < chunks.size(); ++i) {
            if (i) out.push_back('\n');
            out += chunks[i];
        }
        return trim(out);
    };
    chain.text_analysis = join(bodies[0]);
    chain.image_analysis = join(bodies[1]);
    chain.conflict_resolution = join(bodies[2]);
    chain.conclusion = join(bodies[3]);
    outcome.chain = std::move(chain);
    outcome.label = label;
    return outcome;
}

std::string format_chain(const ReasoningChain& chain, SentimentLabel label) {
    std::ostringstream out;
    out << "Text Analysis: " << chain.text_analysis << "\n";
    out << "Image Analysis: " << chain.image_analysis << "\n";
    out << "Conflict Resolution: " << chain.conflict_resolution << "\n";
    out << "Conclusion: " << chain.conclusion << "\n";
    out << "Sentiment: " << to_string(label) << "\n";
    return out.str();
}

ArcResult generate_with_arc(const Sample& sample, PromptStage stage, Gateway& gateway,
                            const TemplateSet& templates, const ArcPolicy& policy,
                            RecordSource source) {
    if (policy.max_attempts < 1) throw ConfigError("ArcPolicy.max_attempts must be >= 1");

    const RenderedPrompt prompt = stage == PromptStage::predict
                                      ? render_prediction(sample, templates)
                                      : render_explain(sample, templates);

    ArcFailure failure;
    failure.sample_id = sample.id;
    failure.stage = stage;

    for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
        const std::string raw = gateway.complete(prompt, attempt);
        ParseOutcome outcome = parse_reasoning(raw);
        // An N/A image analysis for an image-bearing sample is an incomplete
        // structure; regenerate like any other defect.
        if (outcome.ok() && sample.image_ref && trim(outcome.chain->image_analysis) == "N/A") {
            outcome.defects.push_back(
                {ParseDefect::Kind::empty_section, "image_analysis (N/A despite image)"});
            outcome.chain.reset();
            outcome.label.reset();
        }
        if (outcome.ok()) {
            ReasoningRecord record;
            record.sample_id = sample.id;
            record.chain = std::move(*outcome.chain);
            record.source = source;
            record.attempts = attempt;
            record.raw_response = raw;
            if (stage == PromptStage::explain) {
                if (*outcome.label != sample.gold_label) {
                    warn("sample " + sample.id + ": explain output emitted \"" +
                         to_string(*outcome.label) + "\" instead of the gold label \"" +
                         to_string(sample.gold_label) + "\"; keeping gold");
                }
                record.predicted_label = sample.gold_label;
            } else {
                record.predicted_label = *outcome.label;
            }
            return record;
        }
        failure.raw_responses.push_back(raw);
        failure.defect_lists.push_back(std::move(outcome.defects));
    }
    return failure;
}

void append_quarantine(const std::vector<ArcFailure>& failures, const std::filesystem::path& path,
                       const std::string& config_digest) {
    if (failures.empty()) return;
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot open quarantine file: " + path.string());
    for (const auto& failure : failures) {
        ordered_json j;
        if (!config_digest.empty()) j["config_digest"] = config_digest;
        j["sample_id"] = failure.sample_id;
        j["stage"] = to_string(failure.stage);
        j["attempts"] = failure.raw_responses.size();
        ordered_json defect_lists = ordered_json::array();
        for (const auto& defects : failure.defect_lists) {
            ordered_json list = ordered_json::array();
            for (const auto& d : defects) {
                list.push_back({{"kind", to_string(d.kind)}, {"detail", d.detail}});
            }
            defect_lists.push_back(std::move(list));
        }
        j["defects"] = std::move(defect_lists);
        j["raw_responses"] = failure.raw_responses;
        out << j.dump() << "\n";
    }
}

} // namespace cotforge
