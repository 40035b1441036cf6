#pragma once

#include "cotforge/dataset_io.hpp"
#include "cotforge/parser.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cotforge {

// Count accounting across the synthesis stages; mirrors the dataset-size
// bookkeeping of the build reports.
struct BuildReport {
    size_t corpus_total = 0;        // N
    size_t stage1_kept = 0;         // N_t1
    size_t stage1_mispredicted = 0; // routed to stage 2 (incl. stage-1 ARC failures)
    size_t stage2_kept = 0;         // N_t2
    size_t quarantined = 0;         // stage-2 ARC failures
    size_t assistant_kept = 0;      // N_a
    size_t assistant_processed = 0;
    double assistant_train_accuracy = 0.0;
    size_t teacher_total = 0; // |D_t|
    size_t full_total = 0;    // |D_all|
    size_t gateway_calls = 0;
    double wall_clock_s = 0.0;

    // N_t1 + N_t2 + quarantined == N and |D_all| == |D_t| + N_a whenever the
    // corresponding stages ran. Throws ValidationError otherwise.
    void validate() const;

    ordered_json to_json() const;
    std::string table() const;
};

struct StageOptions {
    ArcPolicy policy;
    std::optional<std::filesystem::path> quarantine_path;
    // When set, completed work is journaled here and interrupted runs resume
    // without re-spending endpoint calls.
    std::optional<std::filesystem::path> checkpoint_dir;
    size_t checkpoint_every = 100;
    int workers = 0; // 0 = use the gateway's max_in_flight
    std::string config_digest;
};

struct Stage1Result {
    ReasoningDataset dataset; // role teacher_stage1
    std::vector<Sample> mispredicted;
};

// Stage 1: label-free prediction; keep samples the teacher got right, route
// the rest (plus ARC failures) to stage 2. Gateway calls are issued in
// ascending sample-id order.
Stage1Result run_stage1(const std::vector<Sample>& corpus, Gateway& gateway,
                        const TemplateSet& templates, const StageOptions& opts);

struct Stage2Result {
    ReasoningDataset dataset; // role teacher_stage2
    std::vector<ArcFailure> quarantined;
};

Stage2Result run_stage2(const std::vector<Sample>& mispredicted, Gateway& gateway,
                        const TemplateSet& templates, const StageOptions& opts);

struct AugmentResult {
    ReasoningDataset dataset; // role assistant_aug
    double train_accuracy = 0.0;
    size_t processed = 0;
};

// Assistant-side data expansion over the training split only. Any non-train
// sample aborts with a ValidationError before a single endpoint call.
AugmentResult augment_with_assistant(const std::vector<Sample>& train_corpus, Gateway& gateway,
                                     const TemplateSet& templates, const StageOptions& opts);

// teacher_full + assistant_aug -> full.
ReasoningDataset build_full(const ReasoningDataset& teacher, const ReasoningDataset& assistant);

// No training dataset may carry dev/test samples; asserted on every save.
void assert_no_leakage(const ReasoningDataset& ds);

// Count consistency: N + round(acc * N) vs the reported full size.
long long expected_full_count(long long train_count, double assistant_accuracy);
bool count_consistency_ok(long long train_count, double assistant_accuracy,
                          long long reported_full, long long tolerance = 3);

} // namespace cotforge
