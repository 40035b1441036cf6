// cotforge: two-stage CoT synthesis, assistant augmentation, toy distillation
// training, and evaluation, driven by one JSON config.

#include "cotforge/metrics.hpp"
#include "cotforge/pipeline.hpp"
#include "cotforge/util.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace {

using namespace cotforge;

struct GlobalFlags {
    std::string config_path;
    std::string output_dir;
    std::string transport;
    std::string cache_dir;
    std::string endpoint;
    std::string model;
    std::string assistant_endpoint;
    std::string assistant_model;
    std::string quarantine_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_global_flags(CLI::App* app, GlobalFlags& flags) {
    app->add_option("--config", flags.config_path, "pipeline config JSON");
    app->add_option("--out", flags.output_dir, "output directory override");
    app->add_option("--transport", flags.transport, "live|mock|replay")
        ->check(CLI::IsMember({"live", "mock", "replay"}));
    app->add_option("--cache-dir", flags.cache_dir, "record/replay cache directory");
    app->add_option("--endpoint", flags.endpoint, "teacher base URL override");
    app->add_option("--model", flags.model, "teacher model name override");
    app->add_option("--assistant-endpoint", flags.assistant_endpoint,
                    "assistant base URL override");
    app->add_option("--assistant-model", flags.assistant_model, "assistant model name override");
    app->add_option("--quarantine-path", flags.quarantine_path, "ARC failure report file");
    app->add_option("--seed", flags.seed, "training seed override")
        ->each([&flags](const std::string&) { flags.seed_set = true; });
}

PipelineConfig resolve_config(const GlobalFlags& flags) {
    if (flags.config_path.empty()) {
        throw ConfigError("--config is required for pipeline commands");
    }
    PipelineConfig cfg = PipelineConfig::from_file(flags.config_path);
    if (!flags.output_dir.empty()) cfg.output_dir = flags.output_dir;
    if (!flags.transport.empty()) cfg.transport = flags.transport;
    if (!flags.cache_dir.empty()) cfg.cache_dir = flags.cache_dir;
    if (!flags.endpoint.empty()) cfg.teacher.base_url = flags.endpoint;
    if (!flags.model.empty()) cfg.teacher.model_name = flags.model;
    if (!flags.assistant_endpoint.empty()) cfg.assistant.base_url = flags.assistant_endpoint;
    if (!flags.assistant_model.empty()) cfg.assistant.model_name = flags.assistant_model;
    if (!flags.quarantine_path.empty()) cfg.quarantine_override = flags.quarantine_path;
    if (flags.seed_set) cfg.train.seed = flags.seed;
    return cfg;
}

int run_stages(const GlobalFlags& flags, std::vector<Stage> stages, int synthesize_stage = 0) {
    PipelineConfig cfg = resolve_config(flags);
    StageSelection selection;
    selection.stages = std::move(stages);
    selection.synthesize_stage = synthesize_stage;
    run_pipeline(cfg, selection);
    return 0;
}

// File-driven evaluation: pred/gold JSONL with {"id", "label"[, "reasoning"]}.
struct EvalFileRow {
    std::string id;
    SentimentLabel label;
    std::string reasoning;
};

std::vector<EvalFileRow> load_eval_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<EvalFileRow> rows;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            auto j = ordered_json::parse(line);
            EvalFileRow row;
            row.id = j.at("id").get<std::string>();
            row.label = parse_label(j.at("label").get<std::string>());
            row.reasoning = j.value("reasoning", "");
            rows.push_back(std::move(row));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return rows;
}

int evaluate_files(const std::string& pred_path, const std::string& gold_path,
                   const std::string& metrics, const std::string& out_path,
                   const GlobalFlags& flags) {
    auto pred = load_eval_file(pred_path);
    auto gold = load_eval_file(gold_path);
    if (pred.size() != gold.size()) {
        throw ValidationError("pred and gold files differ in row count");
    }
    std::map<std::string, const EvalFileRow*> gold_by_id;
    for (const auto& row : gold) gold_by_id[row.id] = &row;

    const bool want_cls = metrics.find("cls") != std::string::npos;
    const bool want_gen = metrics.find("gen") != std::string::npos;

    ordered_json out;
    if (want_cls) {
        std::vector<SentimentLabel> g;
        std::vector<SentimentLabel> p;
        for (const auto& row : pred) {
            auto it = gold_by_id.find(row.id);
            if (it == gold_by_id.end()) {
                throw ValidationError("prediction id \"" + row.id + "\" missing from gold file");
            }
            g.push_back(it->second->label);
            p.push_back(row.label);
        }
        out["classification"] = classification_metrics(g, p).to_json();
    }
    if (want_gen) {
        std::vector<std::string> hyps;
        std::vector<std::string> refs;
        std::vector<std::string> ids;
        for (const auto& row : pred) {
            auto it = gold_by_id.find(row.id);
            if (it == gold_by_id.end() || row.reasoning.empty() || it->second->reasoning.empty()) {
                continue;
            }
            hyps.push_back(row.reasoning);
            refs.push_back(it->second->reasoning);
            ids.push_back(row.id);
        }
        if (hyps.empty()) {
            out["generation"] = nullptr;
        } else if (!flags.transport.empty() && flags.transport != "live") {
            // Embedding similarity via the mock or replay endpoint.
            EndpointConfig e;
            std::optional<std::filesystem::path> cache;
            if (!flags.cache_dir.empty()) cache = flags.cache_dir;
            Gateway embedder(e, make_transport(flags.transport, cache), cache);
            auto hv = embedder.embed(hyps);
            auto rv = embedder.embed(refs);
            out["generation"] = generation_metrics(hyps, refs, &hv, &rv, &ids).to_json();
        } else {
            out["generation"] = generation_metrics(hyps, refs, nullptr, nullptr, &ids).to_json();
        }
    }

    if (out_path.empty()) {
        std::cout << out.dump(2) << "\n";
    } else {
        std::ofstream f(out_path, std::ios::binary);
        if (!f) throw IoError("cannot write " + out_path);
        f << out.dump(2) << "\n";
        std::cout << "wrote " << out_path << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Teacher-assistant-student reasoning-distillation pipeline"};
    app.require_subcommand(1);

    GlobalFlags flags;

    auto* synth = app.add_subcommand("synthesize", "two-stage teacher CoT synthesis");
    add_global_flags(synth, flags);
    std::string synth_stage = "both";
    std::string corpus_override;
    synth->add_option("--stage", synth_stage, "1|2|both")
        ->check(CLI::IsMember({"1", "2", "both"}));
    synth->add_option("--corpus", corpus_override, "train corpus path override");

    auto* augment = app.add_subcommand("augment", "assistant data expansion over the train split");
    add_global_flags(augment, flags);

    auto* build = app.add_subcommand("build", "merge teacher and assistant datasets");
    add_global_flags(build, flags);
    std::string build_teacher;
    std::string build_assistant;
    std::string build_out;
    build->add_option("--teacher", build_teacher, "teacher_full dataset path (file mode)");
    build->add_option("--assistant", build_assistant, "assistant_aug dataset path (file mode)");
    build->add_option("--build-out", build_out, "output dataset path (file mode)");

    auto* train_cmd = app.add_subcommand("train", "train the toy assistant model");
    add_global_flags(train_cmd, flags);
    auto* distill = app.add_subcommand("distill", "train the toy student with soft labels");
    add_global_flags(distill, flags);

    auto* evaluate = app.add_subcommand("evaluate", "score predictions or pipeline artifacts");
    add_global_flags(evaluate, flags);
    std::string pred_path;
    std::string gold_path;
    std::string metrics = "cls,gen";
    std::string eval_out;
    evaluate->add_option("--pred", pred_path, "predictions JSONL (file mode)");
    evaluate->add_option("--gold", gold_path, "gold JSONL (file mode)");
    evaluate->add_option("--metrics", metrics, "comma list: cls,gen");
    evaluate->add_option("--eval-out", eval_out, "report path (file mode)");

    auto* report = app.add_subcommand("report", "consolidated summary tables");
    add_global_flags(report, flags);
    auto* ablate = app.add_subcommand("ablate", "full vs w/o-assistant student contrast");
    add_global_flags(ablate, flags);

    auto* run = app.add_subcommand("run", "run a stage subset in dependency order");
    add_global_flags(run, flags);
    std::string stages_csv = "synthesize,augment,build,train,distill,evaluate,report";
    run->add_option("--stages", stages_csv, "comma-separated stage list");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) {
            PipelineConfig cfg = resolve_config(flags);
            if (!corpus_override.empty()) cfg.corpus.train = corpus_override;
            StageSelection selection;
            selection.stages = {Stage::synthesize};
            selection.synthesize_stage = synth_stage == "both" ? 0 : std::stoi(synth_stage);
            run_pipeline(cfg, selection);
            return 0;
        }
        if (augment->parsed()) return run_stages(flags, {Stage::augment});
        if (build->parsed()) {
            if (!build_teacher.empty() || !build_assistant.empty()) {
                // file mode: --out (or --build-out) names the merged dataset
                const std::string out_path = !build_out.empty() ? build_out : flags.output_dir;
                if (build_teacher.empty() || build_assistant.empty() || out_path.empty()) {
                    throw ConfigError("file mode needs --teacher, --assistant and --out");
                }
                auto merged = build_full(load_dataset(build_teacher), load_dataset(build_assistant));
                save_dataset(merged, out_path);
                std::cout << "wrote " << out_path << " (" << merged.size() << " entries)\n";
                return 0;
            }
            return run_stages(flags, {Stage::build});
        }
        if (train_cmd->parsed()) return run_stages(flags, {Stage::train});
        if (distill->parsed()) return run_stages(flags, {Stage::distill});
        if (evaluate->parsed()) {
            if (!pred_path.empty() || !gold_path.empty()) {
                if (pred_path.empty() || gold_path.empty()) {
                    throw ConfigError("file mode needs both --pred and --gold");
                }
                // file mode: --out (or --eval-out) names the report file
                const std::string out_path = !eval_out.empty() ? eval_out : flags.output_dir;
                return evaluate_files(pred_path, gold_path, metrics, out_path, flags);
            }
            return run_stages(flags, {Stage::evaluate});
        }
        if (report->parsed()) return run_stages(flags, {Stage::report});
        if (ablate->parsed()) {
            run_ablation(resolve_config(flags));
            return 0;
        }
        if (run->parsed()) {
            std::vector<Stage> stages;
            std::stringstream ss(stages_csv);
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (!trim(item).empty()) stages.push_back(parse_stage(item));
            }
            return run_stages(flags, stages);
        }
    } catch (const cotforge::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
