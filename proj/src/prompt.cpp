#include "cotforge/prompt.hpp"

#include "cotforge/errors.hpp"
#include "cotforge/util.hpp"

#include <array>
#include <fstream>
#include <sstream>

namespace cotforge {

namespace {

constexpr std::array<const char*, 4> kSectionHeaders = {
    "Text Analysis:", "Image Analysis:", "Conflict Resolution:", "Conclusion:"};

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open template asset: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Positions of needle in haystack, case-insensitive.
std::vector<size_t> find_all_ci(const std::string& haystack, const std::string& needle) {
    const std::string h = to_lower(haystack);
    const std::string n = to_lower(needle);
    std::vector<size_t> positions;
    size_t pos = h.find(n);
    while (pos != std::string::npos) {
        positions.push_back(pos);
        pos = h.find(n, pos + 1);
    }
    return positions;
}

size_t count_placeholder(const std::string& text, const std::string& name) {
    return find_all_ci(text, "{" + name + "}").size();
}

void check_known_placeholders(const std::string& text, const std::string& asset) {
    size_t i = 0;
    while ((i = text.find('{', i)) != std::string::npos) {
        size_t close = text.find('}', i);
        if (close == std::string::npos) {
            throw ValidationError(asset + ": unterminated placeholder");
        }
        const std::string key = text.substr(i + 1, close - i - 1);
        if (key != "text" && key != "aspect" && key != "gold_label") {
            throw ValidationError(asset + ": unknown placeholder {" + key + "}");
        }
        i = close + 1;
    }
}

std::string fill(const std::string& text, const Sample& sample,
                 const std::optional<std::string>& gold) {
    std::vector<std::pair<std::string, std::string>> values;
    values.emplace_back("text", sample.text);
    if (sample.aspect) values.emplace_back("aspect", *sample.aspect);
    if (gold) values.emplace_back("gold_label", *gold);
    return fill_placeholders(text, values);
}

void check_variant(const Sample& sample, const TemplateSet& set) {
    if (sample.aspect.has_value() != set.base.fine_grained) {
        throw ConfigError(std::string("sample \"") + sample.id + "\" is " +
                          (sample.aspect ? "fine" : "coarse") + "-grained but the template set is " +
                          (set.base.fine_grained ? "fine" : "coarse") + "-grained");
    }
}

} // namespace

std::string to_string(PromptStage stage) {
    return stage == PromptStage::predict ? "predict" : "explain";
}

void validate_template_set(const TemplateSet& set) {
    // The reasoning format must name the four sections exactly once, in order.
    size_t previous = 0;
    for (const char* header : kSectionHeaders) {
        auto positions = find_all_ci(set.base.reasoning_format, header);
        if (positions.size() != 1) {
            throw ValidationError(std::string("reasoning_format must name \"") + header +
                                  "\" exactly once");
        }
        if (positions[0] < previous) {
            throw ValidationError("reasoning_format sections out of order at \"" +
                                  std::string(header) + "\"");
        }
        previous = positions[0];
    }

    check_known_placeholders(set.base.task_description, "task_description");
    check_known_placeholders(set.base.sentiment_definition, "sentiment_definition");
    check_known_placeholders(set.base.reasoning_format, "reasoning_format");
    check_known_placeholders(set.predict_instruction, "predict_instruction");
    check_known_placeholders(set.explain_instruction, "explain_instruction");

    if (count_placeholder(set.predict_instruction, "text") == 0) {
        throw ValidationError("predict_instruction is missing the {text} placeholder");
    }
    if (count_placeholder(set.predict_instruction, "gold_label") != 0) {
        throw ValidationError("predict_instruction must not reference {gold_label}");
    }
    if (count_placeholder(set.explain_instruction, "text") == 0) {
        throw ValidationError("explain_instruction is missing the {text} placeholder");
    }
    if (count_placeholder(set.explain_instruction, "gold_label") != 1) {
        throw ValidationError("explain_instruction must reference {gold_label} exactly once");
    }
    const size_t aspect_slots = count_placeholder(set.base.task_description, "aspect");
    if (set.base.fine_grained && aspect_slots == 0) {
        throw ValidationError("fine-grained task_description is missing the {aspect} placeholder");
    }
    if (!set.base.fine_grained && aspect_slots != 0) {
        throw ValidationError("coarse task_description must not reference {aspect}");
    }
}

TemplateSet load_template_set(const std::filesystem::path& dir, bool fine_grained) {
    TemplateSet set;
    set.base.task_description =
        read_text_file(dir / (fine_grained ? "task_description_fine.txt" : "task_description_coarse.txt"));
    set.base.sentiment_definition = read_text_file(dir / "sentiment_definition.txt");
    set.base.reasoning_format = read_text_file(dir / "reasoning_format.txt");
    set.base.fine_grained = fine_grained;
    set.predict_instruction = read_text_file(dir / "predict_instruction.txt");
    set.explain_instruction = read_text_file(dir / "explain_instruction.txt");
    validate_template_set(set);
    return set;
}

RenderedPrompt render_prediction(const Sample& sample, const TemplateSet& set) {
    validate_sample(sample);
    check_variant(sample, set);
    RenderedPrompt prompt;
    prompt.stage = PromptStage::predict;
    prompt.system_text = fill(set.base.task_description, sample, std::nullopt) + "\n" +
                         set.base.sentiment_definition;
    prompt.user_text = set.base.reasoning_format + "\n" +
                       fill(set.predict_instruction, sample, std::nullopt);
    prompt.image_ref = sample.image_ref;
    return prompt;
}

RenderedPrompt render_explain(const Sample& sample, const TemplateSet& set) {
    validate_sample(sample);
    check_variant(sample, set);
    RenderedPrompt prompt;
    prompt.stage = PromptStage::explain;
    prompt.system_text = fill(set.base.task_description, sample, std::nullopt) + "\n" +
                         set.base.sentiment_definition;
    prompt.user_text = set.base.reasoning_format + "\n" +
                       fill(set.explain_instruction, sample, to_string(sample.gold_label));
    prompt.image_ref = sample.image_ref;
    return prompt;
}

TemplateSet builtin_template_set(bool fine_grained) {
    TemplateSet set;
    set.base.fine_grained = fine_grained;
    set.base.task_description =
        fine_grained
            ? "You are an expert in aspect-based multimodal sentiment analysis. Given a social media "
              "post consisting of a text and, when provided, an attached image, determine the "
              "sentiment expressed toward the aspect term \"{aspect}\" and lay out the reasoning "
              "that leads to your decision.\n"
            : "You are an expert in multimodal sentiment analysis. Given a social media post "
              "consisting of a text and, when provided, an attached image, determine the overall "
              "sentiment the post conveys and lay out the reasoning that leads to your decision.\n";
    set.base.sentiment_definition =
        "Sentiment must be exactly one of three labels: negative (criticism, sadness, anger, fear, "
        "or disapproval dominates), neutral (factual reporting or no clear emotional stance), "
        "positive (joy, praise, excitement, or approval dominates).\n";
    set.base.reasoning_format =
        "Write your reasoning in exactly four sections, in this order, each starting on its own "
        "line with the section header:\n"
        "Text Analysis: what the wording, tone, and figurative language of the text convey.\n"
        "Image Analysis: what the visual content contributes; write N/A if no image is provided.\n"
        "Conflict Resolution: how agreements or disagreements between the modalities are weighed "
        "and resolved.\n"
        "Conclusion: the sentiment that follows from the reasoning above.\n"
        "After the four sections, finish with one final line of the form:\n"
        "Sentiment: <negative|neutral|positive>\n";
    set.predict_instruction =
        "Analyze the following post and predict its sentiment.\n"
        "\n"
        "Text: {text}\n"
        "\n"
        "Work through the four sections, then state the predicted label on the final Sentiment "
        "line.\n";
    set.explain_instruction =
        "The post below is known to carry the sentiment \"{gold_label}\". Explain why.\n"
        "\n"
        "Text: {text}\n"
        "\n"
        "Work through the four sections to justify that sentiment, then restate the given label on "
        "the final Sentiment line.\n";
    validate_template_set(set);
    return set;
}

} // namespace cotforge
