#include "cotforge/pipeline.hpp"

#include "cotforge/metrics.hpp"
#include "cotforge/util.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace cotforge {

namespace {

ordered_json endpoint_to_json(const EndpointConfig& e) {
    ordered_json j;
    j["base_url"] = e.base_url;
    j["model"] = e.model_name;
    j["api_key_env"] = e.api_key_env;
    j["timeout_s"] = e.timeout_s;
    j["max_in_flight"] = e.max_in_flight;
    j["retry"] = {{"initial_backoff_s", e.retry.initial_backoff_s},
                  {"multiplier", e.retry.multiplier},
                  {"max_attempts", e.retry.max_attempts}};
    j["temperature"] = e.temperature;
    j["retry_temperature"] = e.retry_temperature;
    j["sampling_seed"] = e.sampling_seed;
    j["embedding_model"] = e.embedding_model;
    return j;
}

EndpointConfig endpoint_from_json(const ordered_json& j) {
    EndpointConfig e;
    e.base_url = j.value("base_url", e.base_url);
    e.model_name = j.value("model", e.model_name);
    e.api_key_env = j.value("api_key_env", e.api_key_env);
    e.timeout_s = j.value("timeout_s", e.timeout_s);
    e.max_in_flight = j.value("max_in_flight", e.max_in_flight);
    if (j.contains("retry")) {
        const auto& r = j["retry"];
        e.retry.initial_backoff_s = r.value("initial_backoff_s", e.retry.initial_backoff_s);
        e.retry.multiplier = r.value("multiplier", e.retry.multiplier);
        e.retry.max_attempts = r.value("max_attempts", e.retry.max_attempts);
    }
    e.temperature = j.value("temperature", e.temperature);
    e.retry_temperature = j.value("retry_temperature", e.retry_temperature);
    e.sampling_seed = j.value("sampling_seed", e.sampling_seed);
    e.embedding_model = j.value("embedding_model", e.embedding_model);
    return e;
}

} // namespace

ordered_json PipelineConfig::to_json() const {
    ordered_json j;
    j["schema_version"] = schema_version;
    j["corpus"] = {{"train", corpus.train.string()},
                   {"dev", corpus.dev.string()},
                   {"test", corpus.test.string()},
                   {"fine_grained", corpus.fine_grained}};
    j["templates_dir"] = templates_dir.string();
    j["use_builtin_templates"] = use_builtin_templates;
    j["teacher"] = endpoint_to_json(teacher);
    j["assistant"] = endpoint_to_json(assistant);
    j["arc"] = {{"max_attempts", arc.max_attempts}};
    j["loss_weights"] = {{"lambda_cls", weights.lambda_cls},
                         {"lambda_rea", weights.lambda_rea},
                         {"lambda_kd", weights.lambda_kd},
                         {"tau", weights.tau},
                         {"scale_kl_by_tau_sq", weights.scale_kl_by_tau_sq}};
    j["train"] = {{"initial_lr", train.initial_lr},
                  {"plateau_patience", train.plateau_patience},
                  {"lr_floor", train.lr_floor},
                  {"batch_size", train.batch_size},
                  {"grad_accumulation", train.grad_accumulation},
                  {"max_epochs", train.max_epochs},
                  {"seed", train.seed},
                  {"weight_decay", train.weight_decay}};
    j["model"] = {{"embed_dim", model.embed_dim},
                  {"vocab_size", model.vocab_size},
                  {"max_seq_len", model.max_seq_len},
                  {"init_scale", model.init_scale}};
    j["transport"] = transport;
    j["cache_dir"] = cache_dir ? ordered_json(cache_dir->string()) : ordered_json(nullptr);
    j["output_dir"] = output_dir.string();
    j["checkpoint_every"] = checkpoint_every;
    return j;
}

PipelineConfig PipelineConfig::from_json(const ordered_json& j) {
    PipelineConfig cfg;
    cfg.schema_version = j.value("schema_version", 0);
    if (cfg.schema_version != 1) {
        throw ConfigError("unsupported or missing schema_version (expected 1)");
    }
    if (j.contains("corpus")) {
        const auto& c = j["corpus"];
        cfg.corpus.train = c.value("train", std::string{});
        cfg.corpus.dev = c.value("dev", std::string{});
        cfg.corpus.test = c.value("test", std::string{});
        cfg.corpus.fine_grained = c.value("fine_grained", false);
    }
    cfg.templates_dir = j.value("templates_dir", std::string{"templates"});
    cfg.use_builtin_templates = j.value("use_builtin_templates", true);
    if (j.contains("teacher")) cfg.teacher = endpoint_from_json(j["teacher"]);
    if (j.contains("assistant")) cfg.assistant = endpoint_from_json(j["assistant"]);
    if (j.contains("arc")) cfg.arc.max_attempts = j["arc"].value("max_attempts", 3);
    if (!j.contains("loss_weights") || !j["loss_weights"].contains("tau")) {
        // The temperature has no reported reference value; it must be an
        // explicit choice in every config file.
        throw ConfigError("loss_weights.tau is a required config field");
    }
    {
        const auto& w = j["loss_weights"];
        cfg.weights.lambda_cls = w.value("lambda_cls", cfg.weights.lambda_cls);
        cfg.weights.lambda_rea = w.value("lambda_rea", cfg.weights.lambda_rea);
        cfg.weights.lambda_kd = w.value("lambda_kd", cfg.weights.lambda_kd);
        cfg.weights.tau = w["tau"].get<double>();
        cfg.weights.scale_kl_by_tau_sq = w.value("scale_kl_by_tau_sq", false);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        cfg.train.initial_lr = t.value("initial_lr", cfg.train.initial_lr);
        cfg.train.plateau_patience = t.value("plateau_patience", cfg.train.plateau_patience);
        cfg.train.lr_floor = t.value("lr_floor", cfg.train.lr_floor);
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.grad_accumulation = t.value("grad_accumulation", cfg.train.grad_accumulation);
        cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
        cfg.train.seed = t.value("seed", cfg.train.seed);
        cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        cfg.model.embed_dim = m.value("embed_dim", cfg.model.embed_dim);
        cfg.model.vocab_size = m.value("vocab_size", cfg.model.vocab_size);
        cfg.model.max_seq_len = m.value("max_seq_len", cfg.model.max_seq_len);
        cfg.model.init_scale = m.value("init_scale", cfg.model.init_scale);
    }
    cfg.transport = j.value("transport", std::string{"mock"});
    if (j.contains("cache_dir") && !j["cache_dir"].is_null()) {
        cfg.cache_dir = std::filesystem::path(j["cache_dir"].get<std::string>());
    }
    cfg.output_dir = j.value("output_dir", std::string{"out"});
    cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
    return cfg;
}

PipelineConfig PipelineConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

void PipelineConfig::validate() const {
    validate_endpoint_config(teacher);
    validate_endpoint_config(assistant);
    validate_loss_weights(weights);
    validate_train_config(train);
    if (arc.max_attempts < 1) throw ConfigError("arc.max_attempts must be >= 1");
    if (transport != "live" && transport != "mock" && transport != "replay") {
        throw ConfigError("transport must be live, mock, or replay");
    }
    if (transport == "replay" && !cache_dir) {
        throw ConfigError("replay transport requires cache_dir");
    }
    if (model.vocab_size < 8) throw ConfigError("model.vocab_size too small");
    if (model.embed_dim < 1) throw ConfigError("model.embed_dim must be >= 1");
}

std::string PipelineConfig::digest() const {
    // Sorted-key canonical form, minus the location fields.
    nlohmann::json canonical = nlohmann::json::parse(to_json().dump());
    canonical.erase("output_dir");
    canonical.erase("cache_dir");
    return sha256_hex(canonical.dump());
}

std::string to_string(Stage stage) {
    switch (stage) {
    case Stage::synthesize: return "synthesize";
    case Stage::augment: return "augment";
    case Stage::build: return "build";
    case Stage::train: return "train";
    case Stage::distill: return "distill";
    case Stage::evaluate: return "evaluate";
    case Stage::report: return "report";
    }
    throw DomainError("invalid Stage");
}

Stage parse_stage(std::string_view name) {
    const std::string s = to_lower(trim(name));
    if (s == "synthesize") return Stage::synthesize;
    if (s == "augment") return Stage::augment;
    if (s == "build") return Stage::build;
    if (s == "train") return Stage::train;
    if (s == "distill") return Stage::distill;
    if (s == "evaluate") return Stage::evaluate;
    if (s == "report") return Stage::report;
    throw ConfigError("unknown stage \"" + std::string(name) + "\"");
}

// ---------------------------------------------------------------------------
// Stage implementations

namespace {

struct PipelineContext {
    const PipelineConfig& cfg;
    ArtifactPaths paths;
    std::string digest;
    bool replay;

    explicit PipelineContext(const PipelineConfig& config)
        : cfg(config), paths(config.output_dir), digest(config.digest()),
          replay(config.transport == "replay") {}

    Gateway make_gateway(const EndpointConfig& endpoint) const {
        return Gateway(endpoint, make_transport(cfg.transport, cfg.cache_dir), cfg.cache_dir);
    }

    TemplateSet templates() const {
        if (cfg.use_builtin_templates) return builtin_template_set(cfg.corpus.fine_grained);
        return load_template_set(cfg.templates_dir, cfg.corpus.fine_grained);
    }

    StageOptions stage_options() const {
        StageOptions opts;
        opts.policy = cfg.arc;
        opts.quarantine_path = cfg.quarantine_override ? *cfg.quarantine_override
                                                       : paths.quarantine();
        opts.checkpoint_dir = paths.checkpoints_dir();
        opts.checkpoint_every = cfg.checkpoint_every;
        opts.config_digest = digest;
        return opts;
    }

    void require(const std::filesystem::path& artifact, const std::string& producer) const {
        if (!std::filesystem::exists(artifact)) {
            throw DependencyError("missing artifact " + artifact.string() + "; run the " +
                                  producer + " stage first");
        }
    }

    ReasoningDataset load_tagged(const std::filesystem::path& path,
                                 const std::string& producer) const {
        require(path, producer);
        return load_dataset(path);
    }

    void save_tagged(ReasoningDataset ds, const std::filesystem::path& path) const {
        assert_no_leakage(ds);
        ds.provenance["config_digest"] = digest;
        save_dataset(ds, path);
    }
};

BuildReport load_build_report(const std::filesystem::path& path) {
    BuildReport report;
    if (!std::filesystem::exists(path)) return report;
    std::ifstream in(path);
    ordered_json j;
    in >> j;
    report.corpus_total = j.value("corpus_total", 0u);
    report.stage1_kept = j.value("stage1_kept", 0u);
    report.stage1_mispredicted = j.value("stage1_mispredicted", 0u);
    report.stage2_kept = j.value("stage2_kept", 0u);
    report.quarantined = j.value("quarantined", 0u);
    report.teacher_total = j.value("teacher_total", 0u);
    report.assistant_processed = j.value("assistant_processed", 0u);
    report.assistant_kept = j.value("assistant_kept", 0u);
    report.assistant_train_accuracy = j.value("assistant_train_accuracy", 0.0);
    report.full_total = j.value("full_total", 0u);
    report.gateway_calls = j.value("gateway_calls", 0u);
    report.wall_clock_s = j.value("wall_clock_s", 0.0);
    return report;
}

void save_build_report(const BuildReport& report, const PipelineContext& ctx) {
    ordered_json j = report.to_json();
    j["config_digest"] = ctx.digest;
    std::ofstream out(ctx.paths.build_report(), std::ios::binary);
    if (!out) throw IoError("cannot write build report: " + ctx.paths.build_report().string());
    out << j.dump(2) << "\n";
}

// Digest sidecar for JSONL artifacts whose line schema stays fixed.
void write_jsonl_meta(const std::filesystem::path& path, const std::string& digest, size_t count) {
    ordered_json meta;
    meta["config_digest"] = digest;
    meta["count"] = count;
    std::ofstream out(path.string() + ".meta.json", std::ios::binary);
    out << meta.dump(2) << "\n";
}

class StageTimer {
public:
    double elapsed_or_zero(bool replay) const {
        if (replay) return 0.0; // replay runs must be byte-reproducible
        return std::chrono::duration<double>(clock::now() - start_).count();
    }

private:
    using clock = std::chrono::steady_clock;
    clock::time_point start_ = clock::now();
};

void stage_synthesize(const PipelineContext& ctx, int which) {
    StageTimer timer;
    std::filesystem::create_directories(ctx.paths.datasets_dir());
    const auto templates = ctx.templates();
    Gateway teacher = ctx.make_gateway(ctx.cfg.teacher);
    auto opts = ctx.stage_options();

    BuildReport report = load_build_report(ctx.paths.build_report());
    std::error_code ec;
    std::filesystem::remove(*opts.quarantine_path, ec); // fresh run, no stale lines

    if (which == 0 || which == 1) {
        auto corpus = load_corpus(ctx.cfg.corpus.train, ctx.cfg.corpus.fine_grained);
        const auto counts = split_counts(corpus);
        std::cout << "loaded " << corpus.size() << " samples from "
                  << ctx.cfg.corpus.train.string() << " (train " << counts[0] << ", dev "
                  << counts[1] << ", test " << counts[2] << ")\n";
        auto stage1 = run_stage1(corpus, teacher, templates, opts);
        ctx.save_tagged(stage1.dataset, ctx.paths.stage1());
        save_corpus(stage1.mispredicted, ctx.paths.mispredicted());
        write_jsonl_meta(ctx.paths.mispredicted(), ctx.digest, stage1.mispredicted.size());
        report.corpus_total = corpus.size();
        report.stage1_kept = stage1.dataset.size();
        report.stage1_mispredicted = stage1.mispredicted.size();
    }

    if (which == 0 || which == 2) {
        ctx.require(ctx.paths.mispredicted(), "synthesize --stage 1");
        ctx.require(ctx.paths.stage1(), "synthesize --stage 1");
        auto mispredicted = load_corpus(ctx.paths.mispredicted(), ctx.cfg.corpus.fine_grained);
        auto stage2 = run_stage2(mispredicted, teacher, templates, opts);
        ctx.save_tagged(stage2.dataset, ctx.paths.stage2());
        report.stage2_kept = stage2.dataset.size();
        report.quarantined = stage2.quarantined.size();

        auto merged = merge_datasets(load_dataset(ctx.paths.stage1()), stage2.dataset);
        merged.name = "teacher_full";
        ctx.save_tagged(merged, ctx.paths.teacher_full());
        report.teacher_total = merged.size();
    }

    report.gateway_calls += teacher.stats().chat_calls;
    report.wall_clock_s += timer.elapsed_or_zero(ctx.replay);
    report.validate();
    save_build_report(report, ctx);
}

void stage_augment(const PipelineContext& ctx) {
    StageTimer timer;
    std::filesystem::create_directories(ctx.paths.datasets_dir());
    const auto templates = ctx.templates();
    Gateway assistant = ctx.make_gateway(ctx.cfg.assistant);
    auto opts = ctx.stage_options();

    auto corpus = load_corpus(ctx.cfg.corpus.train, ctx.cfg.corpus.fine_grained);
    auto result = augment_with_assistant(corpus, assistant, templates, opts);
    ctx.save_tagged(result.dataset, ctx.paths.assistant_aug());

    BuildReport report = load_build_report(ctx.paths.build_report());
    report.assistant_processed = result.processed;
    report.assistant_kept = result.dataset.size();
    report.assistant_train_accuracy = result.train_accuracy;
    report.gateway_calls += assistant.stats().chat_calls;
    report.wall_clock_s += timer.elapsed_or_zero(ctx.replay);
    report.validate();
    save_build_report(report, ctx);
}

void stage_build(const PipelineContext& ctx) {
    auto teacher = ctx.load_tagged(ctx.paths.teacher_full(), "synthesize");
    auto assistant = ctx.load_tagged(ctx.paths.assistant_aug(), "augment");
    auto full = build_full(teacher, assistant);
    ctx.save_tagged(full, ctx.paths.full());

    BuildReport report = load_build_report(ctx.paths.build_report());
    report.teacher_total = teacher.size();
    report.assistant_kept = assistant.size();
    report.full_total = full.size();
    report.validate();
    save_build_report(report, ctx);
}

// Deterministic 90/10 train/validation split over encoded entries.
void split_for_validation(const std::vector<TokenizedExample>& all,
                          std::vector<TokenizedExample>& train_out,
                          std::vector<TokenizedExample>& val_out) {
    train_out.clear();
    val_out.clear();
    for (size_t i = 0; i < all.size(); ++i) {
        if (all.size() >= 10 && i % 10 == 9) {
            val_out.push_back(all[i]);
        } else {
            train_out.push_back(all[i]);
        }
    }
}

TrainConfig with_seed(TrainConfig cfg, std::uint64_t seed) {
    cfg.seed = seed;
    return cfg;
}

ToyModel train_toy_model(const PipelineContext& ctx, const ReasoningDataset& data,
                         TrainRole role, const ToyModel* frozen_assistant,
                         const ToyVocab& vocab, const std::filesystem::path& model_path,
                         const std::filesystem::path& log_path, const LossWeights& weights) {
    EncodeOptions encode_opts{ctx.cfg.model.max_seq_len};
    auto encoded = encode_dataset(data, vocab, encode_opts);
    std::vector<TokenizedExample> train_set;
    std::vector<TokenizedExample> val_set;
    split_for_validation(encoded, train_set, val_set);

    ToyModelConfig model_cfg{static_cast<int>(vocab.size()), ctx.cfg.model.embed_dim,
                             ctx.cfg.model.init_scale};
    const std::uint64_t seed =
        ctx.cfg.train.seed + (role == TrainRole::student ? 1000003 : 0);
    ToyModel model(model_cfg, seed);
    auto result = train(model, train_set, val_set, with_seed(ctx.cfg.train, seed), weights, role,
                        frozen_assistant);
    write_train_log(result.log, log_path);
    write_jsonl_meta(log_path, ctx.digest, result.log.size());

    ordered_json extras;
    extras["config_digest"] = ctx.digest;
    extras["role"] = role == TrainRole::student ? "student" : "assistant";
    model.save(model_path, extras);
    return model;
}

void stage_train(const PipelineContext& ctx) {
    std::filesystem::create_directories(ctx.paths.models_dir());
    auto teacher_data = ctx.load_tagged(ctx.paths.teacher_full(), "synthesize");

    std::vector<std::string> texts;
    for (const auto& entry : teacher_data.entries) {
        texts.push_back(entry.sample.text);
        if (entry.sample.aspect) texts.push_back(*entry.sample.aspect);
        texts.push_back(chain_text(entry.record.chain));
    }
    auto vocab = ToyVocab::build(texts, static_cast<size_t>(ctx.cfg.model.vocab_size));
    vocab.save(ctx.paths.vocab(), ctx.digest);

    train_toy_model(ctx, teacher_data, TrainRole::assistant, nullptr, vocab,
                    ctx.paths.assistant_model(), ctx.paths.assistant_log(), ctx.cfg.weights);
}

void stage_distill(const PipelineContext& ctx) {
    std::filesystem::create_directories(ctx.paths.models_dir());
    ctx.require(ctx.paths.assistant_model(), "train");
    ctx.require(ctx.paths.vocab(), "train");
    auto full_data = ctx.load_tagged(ctx.paths.full(), "build");
    auto vocab = ToyVocab::load(ctx.paths.vocab());
    auto assistant = ToyModel::load(ctx.paths.assistant_model());

    train_toy_model(ctx, full_data, TrainRole::student, &assistant, vocab,
                    ctx.paths.student_model(), ctx.paths.student_log(), ctx.cfg.weights);
}

void evaluate_classifier(const PipelineContext& ctx, const ToyModel& model,
                         const std::string& who, const std::vector<Sample>& test_corpus,
                         const ToyVocab& vocab) {
    EncodeOptions opts{ctx.cfg.model.max_seq_len};
    std::vector<SentimentLabel> gold;
    std::vector<SentimentLabel> pred;
    std::ofstream preds(ctx.paths.predictions(who), std::ios::binary);
    if (!preds) throw IoError("cannot write predictions for " + who);
    for (const auto& sample : test_corpus) {
        auto example = encode_example(sample, nullptr, vocab, opts);
        const auto predicted = static_cast<SentimentLabel>(model.predict_class(example.input_ids));
        gold.push_back(sample.gold_label);
        pred.push_back(predicted);
        ordered_json line;
        line["id"] = sample.id;
        line["gold"] = to_string(sample.gold_label);
        line["pred"] = to_string(predicted);
        preds << line.dump() << "\n";
    }
    write_jsonl_meta(ctx.paths.predictions(who), ctx.digest, gold.size());
    auto report = classification_metrics(gold, pred);
    ordered_json j = report.to_json();
    j["config_digest"] = ctx.digest;
    j["model"] = who;
    std::ofstream out(ctx.paths.classification(who), std::ios::binary);
    out << j.dump(2) << "\n";
}

void stage_evaluate(const PipelineContext& ctx) {
    std::filesystem::create_directories(ctx.paths.eval_dir());
    ctx.require(ctx.paths.student_model(), "distill");
    ctx.require(ctx.paths.assistant_model(), "train");
    ctx.require(ctx.paths.vocab(), "train");

    auto vocab = ToyVocab::load(ctx.paths.vocab());
    auto assistant_model = ToyModel::load(ctx.paths.assistant_model());
    auto student_model = ToyModel::load(ctx.paths.student_model());
    auto test_corpus = load_corpus(ctx.cfg.corpus.test, ctx.cfg.corpus.fine_grained);

    evaluate_classifier(ctx, student_model, "student", test_corpus, vocab);
    evaluate_classifier(ctx, assistant_model, "assistant", test_corpus, vocab);

    // Reasoning quality: assistant-generated chains against the teacher's
    // chains for the same samples, teacher text as gold-standard reference.
    auto teacher_data = ctx.load_tagged(ctx.paths.teacher_full(), "synthesize");
    auto assistant_data = ctx.load_tagged(ctx.paths.assistant_aug(), "augment");
    std::map<std::string, const DatasetEntry*> teacher_by_id;
    for (const auto& entry : teacher_data.entries) teacher_by_id[entry.sample.id] = &entry;

    std::vector<std::string> hyps;
    std::vector<std::string> refs;
    std::vector<std::string> pair_ids;
    for (const auto& entry : assistant_data.entries) {
        auto it = teacher_by_id.find(entry.sample.id);
        if (it == teacher_by_id.end()) continue;
        hyps.push_back(chain_text(entry.record.chain));
        refs.push_back(chain_text(it->second->record.chain));
        pair_ids.push_back(entry.sample.id);
    }

    ordered_json gen_json;
    if (hyps.empty()) {
        warn("evaluate: no overlapping samples between assistant and teacher datasets");
        gen_json["pairs"] = 0;
    } else {
        Gateway embedder = ctx.make_gateway(ctx.cfg.assistant);
        auto hyp_vecs = embedder.embed(hyps);
        auto ref_vecs = embedder.embed(refs);
        auto report = generation_metrics(hyps, refs, &hyp_vecs, &ref_vecs, &pair_ids);
        gen_json = report.to_json();
    }
    gen_json["config_digest"] = ctx.digest;
    std::ofstream out(ctx.paths.generation(), std::ios::binary);
    out << gen_json.dump(2) << "\n";
}

ordered_json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    ordered_json j;
    in >> j;
    return j;
}

std::string format_cell(const ordered_json& j, const char* key) {
    if (!j.contains(key)) return "n/a";
    const auto& v = j[key];
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer() || v.is_number_unsigned()) {
        return std::to_string(v.get<long long>());
    }
    if (v.is_number()) {
        std::ostringstream out;
        out << std::fixed << std::setprecision(1) << v.get<double>();
        return out.str();
    }
    return "n/a";
}

} // namespace

void write_report(const PipelineConfig& cfg) {
    PipelineContext ctx(cfg);
    std::filesystem::create_directories(ctx.paths.report_dir());

    const bool have_build = std::filesystem::exists(ctx.paths.build_report());
    const bool have_cls_student = std::filesystem::exists(ctx.paths.classification("student"));
    const bool have_cls_assistant = std::filesystem::exists(ctx.paths.classification("assistant"));
    const bool have_gen = std::filesystem::exists(ctx.paths.generation());
    if (!have_build && !have_cls_student && !have_cls_assistant && !have_gen) {
        throw Error("nothing to report under " + cfg.output_dir.string());
    }

    ordered_json summary;
    summary["config_digest"] = ctx.digest;
    std::ostringstream text;
    text << "cotforge summary (config " << ctx.digest.substr(0, 12) << ")\n\n";

    if (have_build) {
        const auto build = read_json_file(ctx.paths.build_report());
        summary["counts"] = build;
        // corpus statistics row: split sizes plus the expanded training set
        ordered_json splits = ordered_json::object();
        text << "dataset counts\n";
        const std::pair<const char*, std::filesystem::path> corpus_files[] = {
            {"train", cfg.corpus.train}, {"dev", cfg.corpus.dev}, {"test", cfg.corpus.test}};
        text << "  corpus          ";
        for (const auto& [name, path] : corpus_files) {
            std::string cell = "n/a";
            if (std::filesystem::exists(path)) {
                try {
                    cell = std::to_string(load_corpus(path, cfg.corpus.fine_grained).size());
                } catch (const Error&) {
                }
            }
            splits[name] = cell;
            text << name << " " << cell << "  ";
        }
        text << "expanded " << format_cell(build, "full_total") << "\n";
        summary["splits"] = std::move(splits);
        text << "  train N          " << format_cell(build, "corpus_total") << "\n";
        text << "  N_t1             " << format_cell(build, "stage1_kept") << "\n";
        text << "  N_t2             " << format_cell(build, "stage2_kept") << "\n";
        text << "  quarantined      " << format_cell(build, "quarantined") << "\n";
        text << "  |D_t|            " << format_cell(build, "teacher_total") << "\n";
        text << "  N_a              " << format_cell(build, "assistant_kept") << "\n";
        text << "  |D_all|          " << format_cell(build, "full_total") << "\n\n";
    } else {
        summary["counts"] = nullptr;
    }

    text << "classification (test split)\n";
    text << "  model       Acc    w-F1   m-F1\n";
    ordered_json cls = ordered_json::object();
    for (const char* who : {"assistant", "student"}) {
        const auto path = ctx.paths.classification(who);
        if (std::filesystem::exists(path)) {
            auto j = read_json_file(path);
            cls[who] = j;
            text << "  " << std::left << std::setw(10) << who << "  " << format_cell(j, "Acc")
                 << "   " << format_cell(j, "w-F1") << "   " << format_cell(j, "m-F1") << "\n";
        } else {
            cls[who] = nullptr;
            text << "  " << std::left << std::setw(10) << who << "  n/a    n/a    n/a\n";
        }
    }
    summary["classification"] = std::move(cls);
    text << "\n";

    text << "generated reasoning (assistant vs teacher reference)\n";
    text << "  Sim    Meteor  Bleu   Rouge-L  Dist-1  Dist-2\n";
    if (have_gen) {
        auto j = read_json_file(ctx.paths.generation());
        summary["generation"] = j;
        text << "  " << format_cell(j, "Sim") << "   " << format_cell(j, "Meteor") << "   "
             << format_cell(j, "Bleu") << "   " << format_cell(j, "Rouge-L") << "     "
             << format_cell(j, "Dist-1") << "    " << format_cell(j, "Dist-2") << "\n";
    } else {
        summary["generation"] = nullptr;
        text << "  n/a    n/a     n/a    n/a      n/a     n/a\n";
    }

    std::ofstream json_out(ctx.paths.summary_json(), std::ios::binary);
    json_out << summary.dump(2) << "\n";
    std::ofstream text_out(ctx.paths.summary_text(), std::ios::binary);
    text_out << text.str();
    std::cout << text.str();
}

void run_ablation(const PipelineConfig& cfg) {
    PipelineContext ctx(cfg);
    std::filesystem::create_directories(ctx.paths.report_dir());
    ctx.require(ctx.paths.assistant_model(), "train");
    ctx.require(ctx.paths.vocab(), "train");
    auto teacher_data = ctx.load_tagged(ctx.paths.teacher_full(), "synthesize");
    auto full_data = ctx.load_tagged(ctx.paths.full(), "build");
    auto vocab = ToyVocab::load(ctx.paths.vocab());
    auto assistant = ToyModel::load(ctx.paths.assistant_model());
    auto test_corpus = load_corpus(ctx.cfg.corpus.test, ctx.cfg.corpus.fine_grained);

    EncodeOptions opts{ctx.cfg.model.max_seq_len};
    std::vector<TokenizedExample> test_set;
    for (const auto& sample : test_corpus) {
        test_set.push_back(encode_example(sample, nullptr, vocab, opts));
    }

    auto run_variant = [&](const ReasoningDataset& data, const LossWeights& weights,
                           const char* tag) {
        auto model = train_toy_model(ctx, data, TrainRole::student, &assistant, vocab,
                                     ctx.paths.models_dir() / (std::string("student_") + tag + ".bin"),
                                     ctx.paths.models_dir() /
                                         (std::string("train_log_student_") + tag + ".jsonl"),
                                     weights);
        std::vector<SentimentLabel> gold;
        std::vector<SentimentLabel> pred;
        for (size_t i = 0; i < test_corpus.size(); ++i) {
            gold.push_back(test_corpus[i].gold_label);
            pred.push_back(static_cast<SentimentLabel>(model.predict_class(test_set[i].input_ids)));
        }
        return classification_metrics(gold, pred);
    };

    auto full_report = run_variant(full_data, ctx.cfg.weights, "full");
    LossWeights no_soft = ctx.cfg.weights;
    no_soft.lambda_kd = 0.0; // hard labels only, teacher data only
    auto ablated_report = run_variant(teacher_data, no_soft, "wo_asst");

    ordered_json j;
    j["config_digest"] = ctx.digest;
    j["full"] = full_report.to_json();
    j["wo_asst"] = ablated_report.to_json();
    std::ofstream out(ctx.paths.ablation(), std::ios::binary);
    out << j.dump(2) << "\n";
    std::cout << "ablation: full Acc " << percent(full_report.accuracy) << " vs w/o Asst Acc "
              << percent(ablated_report.accuracy) << "\n";
}

void run_pipeline(const PipelineConfig& cfg, const StageSelection& selection) {
    cfg.validate();
    PipelineContext ctx(cfg);
    std::filesystem::create_directories(cfg.output_dir);

    // Canonical dependency order regardless of request order.
    static constexpr Stage kOrder[] = {Stage::synthesize, Stage::augment, Stage::build,
                                       Stage::train, Stage::distill, Stage::evaluate,
                                       Stage::report};
    std::set<Stage> requested(selection.stages.begin(), selection.stages.end());
    for (Stage stage : kOrder) {
        if (!requested.count(stage)) continue;
        switch (stage) {
        case Stage::synthesize: stage_synthesize(ctx, selection.synthesize_stage); break;
        case Stage::augment: stage_augment(ctx); break;
        case Stage::build: stage_build(ctx); break;
        case Stage::train: stage_train(ctx); break;
        case Stage::distill: stage_distill(ctx); break;
        case Stage::evaluate: stage_evaluate(ctx); break;
        case Stage::report: write_report(cfg); break;
        }
    }
}

} // namespace cotforge
