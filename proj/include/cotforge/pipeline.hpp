#pragma once

#include "cotforge/builder.hpp"
#include "cotforge/tokenizer.hpp"
#include "cotforge/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cotforge {

struct CorpusConfig {
    std::filesystem::path train;
    std::filesystem::path dev;
    std::filesystem::path test;
    bool fine_grained = false;
};

struct ToySetup {
    int embed_dim = 32;
    int vocab_size = 96;
    size_t max_seq_len = 48;
    double init_scale = 0.3;
};

// Single JSON document (versioned schema) driving every stage. Secrets stay
// in environment variables; the file only names them.
struct PipelineConfig {
    int schema_version = 1;
    CorpusConfig corpus;
    std::filesystem::path templates_dir = "templates";
    bool use_builtin_templates = true;
    EndpointConfig teacher;
    EndpointConfig assistant;
    ArcPolicy arc;
    LossWeights weights;
    TrainConfig train;
    ToySetup model;
    std::string transport = "mock"; // live | mock | replay
    std::optional<std::filesystem::path> cache_dir;
    std::filesystem::path output_dir = "out";
    size_t checkpoint_every = 100;
    // CLI-only location override; not part of the JSON schema or digest.
    std::optional<std::filesystem::path> quarantine_override;

    // Digest over the semantic content of the config; output/cache locations
    // select where artifacts go, not what they contain, and are excluded.
    std::string digest() const;

    ordered_json to_json() const;
    static PipelineConfig from_json(const ordered_json& j);
    static PipelineConfig from_file(const std::filesystem::path& path);
    void validate() const;
};

enum class Stage { synthesize, augment, build, train, distill, evaluate, report };

std::string to_string(Stage stage);
Stage parse_stage(std::string_view name);

struct StageSelection {
    std::vector<Stage> stages;
    int synthesize_stage = 0; // 0 = both, 1 or 2 = that teacher stage only
};

// Executes the requested stages in dependency order. Missing upstream
// artifacts raise DependencyError naming the artifact path.
void run_pipeline(const PipelineConfig& cfg, const StageSelection& selection);

// Consolidated summary (dataset counts, classification, generation) written
// as JSON and a plain-text table. Raises Error when nothing exists to report.
void write_report(const PipelineConfig& cfg);

// Table-5-style contrast: full student vs the no-assistant (lambda_kd = 0,
// teacher-data-only) variant.
void run_ablation(const PipelineConfig& cfg);

// Artifact layout under output_dir.
struct ArtifactPaths {
    std::filesystem::path root;
    explicit ArtifactPaths(const std::filesystem::path& out) : root(out) {}

    std::filesystem::path datasets_dir() const { return root / "datasets"; }
    std::filesystem::path stage1() const { return datasets_dir() / "teacher_stage1.jsonl"; }
    std::filesystem::path stage2() const { return datasets_dir() / "teacher_stage2.jsonl"; }
    std::filesystem::path mispredicted() const { return datasets_dir() / "stage1_mispredicted.jsonl"; }
    std::filesystem::path teacher_full() const { return datasets_dir() / "teacher_full.jsonl"; }
    std::filesystem::path assistant_aug() const { return datasets_dir() / "assistant_aug.jsonl"; }
    std::filesystem::path full() const { return datasets_dir() / "full.jsonl"; }
    std::filesystem::path quarantine() const { return root / "quarantine.jsonl"; }
    std::filesystem::path build_report() const { return root / "build_report.json"; }
    std::filesystem::path checkpoints_dir() const { return root / "checkpoints"; }
    std::filesystem::path models_dir() const { return root / "models"; }
    std::filesystem::path vocab() const { return models_dir() / "vocab.json"; }
    std::filesystem::path assistant_model() const { return models_dir() / "assistant.bin"; }
    std::filesystem::path student_model() const { return models_dir() / "student.bin"; }
    std::filesystem::path assistant_log() const { return models_dir() / "train_log_assistant.jsonl"; }
    std::filesystem::path student_log() const { return models_dir() / "train_log_student.jsonl"; }
    std::filesystem::path eval_dir() const { return root / "eval"; }
    std::filesystem::path predictions(const std::string& who) const {
        return eval_dir() / ("predictions_" + who + ".jsonl");
    }
    std::filesystem::path classification(const std::string& who) const {
        return eval_dir() / ("classification_" + who + ".json");
    }
    std::filesystem::path generation() const { return eval_dir() / "generation_assistant.json"; }
    std::filesystem::path report_dir() const { return root / "report"; }
    std::filesystem::path summary_json() const { return report_dir() / "summary.json"; }
    std::filesystem::path summary_text() const { return report_dir() / "summary.txt"; }
    std::filesystem::path ablation() const { return report_dir() / "ablation.json"; }
};

} // namespace cotforge
