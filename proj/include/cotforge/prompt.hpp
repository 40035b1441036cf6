#pragma once

#include "cotforge/sample.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace cotforge {

// Shared prompt prefix: task description, sentiment definition, and the
// four-section reasoning format.
struct BasicTemplate {
    std::string task_description;
    std::string sentiment_definition;
    std::string reasoning_format;
    bool fine_grained = false;
};

// Basic template plus the stage-specific instruction blocks.
struct TemplateSet {
    BasicTemplate base;
    std::string predict_instruction;
    std::string explain_instruction;
};

enum class PromptStage { predict, explain };

std::string to_string(PromptStage stage);

struct RenderedPrompt {
    std::string system_text;
    std::string user_text;
    std::optional<std::string> image_ref;
    PromptStage stage = PromptStage::predict;
};

// Validates placeholder usage and the section order of reasoning_format.
// Throws ParseError (bad placeholder syntax) or ValidationError.
TemplateSet load_template_set(const std::filesystem::path& dir, bool fine_grained);
void validate_template_set(const TemplateSet& set);

// Pure functions of (sample, template set). A fine-grained sample rendered
// against a coarse template set (or vice versa) is a ConfigError.
RenderedPrompt render_prediction(const Sample& sample, const TemplateSet& set);
RenderedPrompt render_explain(const Sample& sample, const TemplateSet& set);

// Built-in assets mirroring templates/ so tests and the toy pipeline do not
// depend on an install prefix.
TemplateSet builtin_template_set(bool fine_grained);

} // namespace cotforge
