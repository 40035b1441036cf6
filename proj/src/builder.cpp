#include "cotforge/builder.hpp"

#include "cotforge/util.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace cotforge {

void BuildReport::validate() const {
    if (corpus_total > 0 && stage1_kept + stage1_mispredicted != corpus_total) {
        throw ValidationError("stage-1 partition does not cover the corpus");
    }
    // stage 2 covers every mispredicted sample once it has run; zero kept and
    // zero quarantined means it has not run yet
    const size_t stage2_processed = stage2_kept + quarantined;
    if (corpus_total > 0 && stage2_processed != 0 &&
        stage1_kept + stage2_processed != corpus_total) {
        throw ValidationError("N_t1 + N_t2 + quarantined must equal N");
    }
    if (full_total > 0 && full_total != teacher_total + assistant_kept) {
        throw ValidationError("|D_all| must equal |D_t| + N_a");
    }
}

ordered_json BuildReport::to_json() const {
    ordered_json j;
    j["corpus_total"] = corpus_total;
    j["stage1_kept"] = stage1_kept;
    j["stage1_mispredicted"] = stage1_mispredicted;
    j["stage2_kept"] = stage2_kept;
    j["quarantined"] = quarantined;
    j["teacher_total"] = teacher_total;
    j["assistant_processed"] = assistant_processed;
    j["assistant_kept"] = assistant_kept;
    j["assistant_train_accuracy"] = assistant_train_accuracy;
    j["full_total"] = full_total;
    j["gateway_calls"] = gateway_calls;
    j["wall_clock_s"] = wall_clock_s;
    return j;
}

std::string BuildReport::table() const {
    std::ostringstream out;
    out << std::left << std::setw(26) << "counter" << "value\n";
    auto row = [&](const char* name, const std::string& value) {
        out << std::left << std::setw(26) << name << value << "\n";
    };
    row("N (train)", std::to_string(corpus_total));
    row("N_t1", std::to_string(stage1_kept));
    row("N_t2", std::to_string(stage2_kept));
    row("quarantined", std::to_string(quarantined));
    row("|D_t|", std::to_string(teacher_total));
    row("N_a", std::to_string(assistant_kept));
    std::ostringstream acc;
    acc << std::fixed << std::setprecision(1) << assistant_train_accuracy * 100.0;
    row("assistant train acc %", acc.str());
    row("|D_all|", std::to_string(full_total));
    row("gateway calls", std::to_string(gateway_calls));
    return out.str();
}

namespace {

std::vector<Sample> sorted_by_id(std::vector<Sample> samples) {
    std::sort(samples.begin(), samples.end(),
              [](const Sample& a, const Sample& b) { return a.id < b.id; });
    return samples;
}

// Journal of per-sample ARC outcomes. Lines are committed in input order so
// repeated runs produce identical bytes; a summary checkpoint file is
// refreshed every `checkpoint_every` commits and on abort.
class StageJournal {
public:
    StageJournal(const StageOptions& opts, const std::string& tag, size_t total)
        : enabled_(opts.checkpoint_dir.has_value()), every_(opts.checkpoint_every), total_(total) {
        if (!enabled_) return;
        std::filesystem::create_directories(*opts.checkpoint_dir);
        journal_path_ = *opts.checkpoint_dir / (tag + ".journal.jsonl");
        summary_path_ = *opts.checkpoint_dir / (tag + ".ckpt.json");
    }

    // Outcomes recorded by a previous interrupted run, keyed by sample id.
    std::map<std::string, ArcResult> load_previous() {
        std::map<std::string, ArcResult> previous;
        if (!enabled_ || !std::filesystem::exists(journal_path_)) return previous;
        std::ifstream in(journal_path_);
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            ordered_json j = ordered_json::parse(line);
            const std::string id = j.at("sample_id").get<std::string>();
            if (j.at("kind") == "record") {
                previous.emplace(id, record_from_json(j.at("record")));
            } else {
                ArcFailure failure;
                failure.sample_id = id;
                failure.stage = j.at("stage") == "explain" ? PromptStage::explain
                                                           : PromptStage::predict;
                for (const auto& raw : j.at("raw_responses")) {
                    failure.raw_responses.push_back(raw.get<std::string>());
                    // parse is pure, so defects re-derive exactly on resume
                    failure.defect_lists.push_back(parse_reasoning(failure.raw_responses.back()).defects);
                }
                previous.emplace(id, std::move(failure));
            }
        }
        committed_ = previous.size();
        return previous;
    }

    void open_for_append() {
        if (!enabled_) return;
        out_.open(journal_path_, std::ios::binary | std::ios::app);
        if (!out_) throw IoError("cannot open journal: " + journal_path_.string());
    }

    void commit(const std::string& sample_id, const ArcResult& result) {
        if (!enabled_) return;
        ordered_json j;
        j["sample_id"] = sample_id;
        if (const auto* record = std::get_if<ReasoningRecord>(&result)) {
            j["kind"] = "record";
            j["record"] = record_to_json(*record);
        } else {
            const auto& failure = std::get<ArcFailure>(result);
            j["kind"] = "failure";
            j["stage"] = to_string(failure.stage);
            j["raw_responses"] = failure.raw_responses;
        }
        out_ << j.dump() << "\n" << std::flush;
        ++committed_;
        if (committed_ % every_ == 0) write_summary();
    }

    void write_summary() {
        if (!enabled_) return;
        ordered_json j;
        j["committed"] = committed_;
        j["total"] = total_;
        std::ofstream out(summary_path_, std::ios::binary);
        out << j.dump(2) << "\n";
    }

private:
    bool enabled_;
    size_t every_;
    size_t total_;
    size_t committed_ = 0;
    std::filesystem::path journal_path_;
    std::filesystem::path summary_path_;
    std::ofstream out_;
};

// Runs generate_with_arc over samples (already sorted by id) with a bounded
// worker pool. Results come back in input order.
std::vector<ArcResult> run_samples(const std::vector<Sample>& samples, PromptStage stage,
                                   RecordSource source, Gateway& gateway,
                                   const TemplateSet& templates, const StageOptions& opts,
                                   const std::string& tag) {
    StageJournal journal(opts, tag, samples.size());
    auto previous = journal.load_previous();
    journal.open_for_append();

    std::vector<std::optional<ArcResult>> slots(samples.size());
    std::vector<size_t> pending;
    for (size_t i = 0; i < samples.size(); ++i) {
        auto it = previous.find(samples[i].id);
        if (it != previous.end()) {
            slots[i] = it->second;
        } else {
            pending.push_back(i);
        }
    }

    const int workers = std::max(1, std::min<int>(opts.workers > 0
                                                      ? opts.workers
                                                      : gateway.config().max_in_flight,
                                                  static_cast<int>(pending.size()) + 1));

    std::atomic<size_t> next{0};
    std::atomic<bool> abort{false};
    std::mutex commit_mutex;
    size_t commit_cursor = 0;
    std::exception_ptr first_error;

    // Journal lines are committed strictly in input order; previously
    // journaled slots do not re-commit.
    std::vector<bool> needs_commit(samples.size(), false);
    for (size_t i : pending) needs_commit[i] = true;

    auto advance_commits = [&]() {
        while (commit_cursor < slots.size() && slots[commit_cursor].has_value()) {
            if (needs_commit[commit_cursor]) {
                journal.commit(samples[commit_cursor].id, *slots[commit_cursor]);
            }
            ++commit_cursor;
        }
    };
    {
        std::lock_guard lock(commit_mutex);
        advance_commits();
    }

    auto worker = [&]() {
        while (!abort.load()) {
            const size_t k = next.fetch_add(1);
            if (k >= pending.size()) return;
            const size_t i = pending[k];
            try {
                ArcResult result =
                    generate_with_arc(samples[i], stage, gateway, templates, opts.policy, source);
                std::lock_guard lock(commit_mutex);
                slots[i] = std::move(result);
                advance_commits();
            } catch (...) {
                std::lock_guard lock(commit_mutex);
                if (!first_error) first_error = std::current_exception();
                abort.store(true);
                return;
            }
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (int t = 0; t < workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    if (first_error) {
        journal.write_summary();
        warn(tag + ": aborted; progress checkpointed, re-run to resume");
        std::rethrow_exception(first_error);
    }
    journal.write_summary();

    std::vector<ArcResult> results;
    results.reserve(slots.size());
    for (auto& slot : slots) results.push_back(std::move(*slot));
    return results;
}

void write_quarantine_sorted(std::vector<ArcFailure> failures, const StageOptions& opts) {
    if (failures.empty() || !opts.quarantine_path) return;
    std::sort(failures.begin(), failures.end(),
              [](const ArcFailure& a, const ArcFailure& b) { return a.sample_id < b.sample_id; });
    append_quarantine(failures, *opts.quarantine_path, opts.config_digest);
}

} // namespace

Stage1Result run_stage1(const std::vector<Sample>& corpus, Gateway& gateway,
                        const TemplateSet& templates, const StageOptions& opts) {
    const auto samples = sorted_by_id(corpus);
    auto results = run_samples(samples, PromptStage::predict, RecordSource::teacher_stage1, gateway,
                               templates, opts, "stage1");

    std::vector<DatasetEntry> kept;
    std::vector<Sample> mispredicted;
    for (size_t i = 0; i < samples.size(); ++i) {
        if (auto* record = std::get_if<ReasoningRecord>(&results[i])) {
            if (record->predicted_label == samples[i].gold_label) {
                kept.push_back({samples[i], std::move(*record)});
                continue;
            }
        }
        // Wrong label or structural ARC failure: both go to stage 2.
        mispredicted.push_back(samples[i]);
    }

    std::map<std::string, std::string> provenance;
    provenance["stage"] = "1";
    provenance["arc_max_attempts"] = std::to_string(opts.policy.max_attempts);
    provenance["corpus_size"] = std::to_string(samples.size());
    return Stage1Result{
        make_dataset("teacher_stage1", DatasetRole::teacher_stage1, std::move(kept),
                     std::move(provenance)),
        std::move(mispredicted)};
}

Stage2Result run_stage2(const std::vector<Sample>& mispredicted, Gateway& gateway,
                        const TemplateSet& templates, const StageOptions& opts) {
    const auto samples = sorted_by_id(mispredicted);
    auto results = run_samples(samples, PromptStage::explain, RecordSource::teacher_stage2, gateway,
                               templates, opts, "stage2");

    std::vector<DatasetEntry> kept;
    std::vector<ArcFailure> quarantined;
    for (size_t i = 0; i < samples.size(); ++i) {
        if (auto* record = std::get_if<ReasoningRecord>(&results[i])) {
            kept.push_back({samples[i], std::move(*record)});
        } else {
            quarantined.push_back(std::move(std::get<ArcFailure>(results[i])));
        }
    }
    write_quarantine_sorted(quarantined, opts);

    std::map<std::string, std::string> provenance;
    provenance["stage"] = "2";
    provenance["arc_max_attempts"] = std::to_string(opts.policy.max_attempts);
    provenance["input_size"] = std::to_string(samples.size());
    return Stage2Result{make_dataset("teacher_stage2", DatasetRole::teacher_stage2, std::move(kept),
                                     std::move(provenance)),
                        std::move(quarantined)};
}

AugmentResult augment_with_assistant(const std::vector<Sample>& train_corpus, Gateway& gateway,
                                     const TemplateSet& templates, const StageOptions& opts) {
    // Label-leakage guard: reject dev/test samples before any endpoint call.
    for (const auto& sample : train_corpus) {
        if (sample.split != Split::train) {
            throw ValidationError("augmentation input contains non-train sample \"" + sample.id +
                                  "\" (split=" + to_string(sample.split) +
                                  "); refusing before any endpoint call");
        }
    }

    const auto samples = sorted_by_id(train_corpus);
    auto results = run_samples(samples, PromptStage::predict, RecordSource::assistant, gateway,
                               templates, opts, "augment");

    std::vector<DatasetEntry> kept;
    for (size_t i = 0; i < samples.size(); ++i) {
        if (auto* record = std::get_if<ReasoningRecord>(&results[i])) {
            if (record->predicted_label == samples[i].gold_label) {
                kept.push_back({samples[i], std::move(*record)});
            }
        }
    }

    AugmentResult out;
    out.processed = samples.size();
    out.train_accuracy =
        samples.empty() ? 0.0
                        : static_cast<double>(kept.size()) / static_cast<double>(samples.size());
    std::map<std::string, std::string> provenance;
    provenance["stage"] = "augment";
    provenance["arc_max_attempts"] = std::to_string(opts.policy.max_attempts);
    provenance["input_size"] = std::to_string(samples.size());
    out.dataset = make_dataset("assistant_aug", DatasetRole::assistant_aug, std::move(kept),
                               std::move(provenance));
    return out;
}

ReasoningDataset build_full(const ReasoningDataset& teacher, const ReasoningDataset& assistant) {
    if (teacher.role != DatasetRole::teacher_full) {
        throw ValidationError("build_full expects a teacher_full dataset, got " +
                              to_string(teacher.role));
    }
    if (assistant.role != DatasetRole::assistant_aug) {
        throw ValidationError("build_full expects an assistant_aug dataset, got " +
                              to_string(assistant.role));
    }
    ReasoningDataset merged = merge_datasets(teacher, assistant);
    merged.role = DatasetRole::full; // empty assistant side still re-tags
    merged.name = "full";
    validate_dataset(merged);
    return merged;
}

void assert_no_leakage(const ReasoningDataset& ds) {
    for (const auto& entry : ds.entries) {
        if (entry.sample.split != Split::train) {
            throw ValidationError("dataset \"" + ds.name + "\" leaks " +
                                  to_string(entry.sample.split) + "-split sample \"" +
                                  entry.sample.id + "\" into training data");
        }
    }
}

long long expected_full_count(long long train_count, double assistant_accuracy) {
    return train_count +
           std::llround(assistant_accuracy * static_cast<double>(train_count));
}

bool count_consistency_ok(long long train_count, double assistant_accuracy,
                          long long reported_full, long long tolerance) {
    return std::llabs(expected_full_count(train_count, assistant_accuracy) - reported_full) <=
           tolerance;
}

} // namespace cotforge
