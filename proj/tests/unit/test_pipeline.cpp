#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cotforge/pipeline.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>

using namespace cotforge;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    auto dir =
        fs::temp_directory_path() / ("cotforge_pipe_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

PipelineConfig demo_config(const fs::path& out_dir, const std::string& transport = "mock",
                           std::optional<fs::path> cache = std::nullopt) {
    PipelineConfig cfg;
    cfg.corpus.train = fs::path(COTFORGE_DEMO_DIR) / "train.jsonl";
    cfg.corpus.dev = fs::path(COTFORGE_DEMO_DIR) / "dev.jsonl";
    cfg.corpus.test = fs::path(COTFORGE_DEMO_DIR) / "test.jsonl";
    cfg.output_dir = out_dir;
    cfg.transport = transport;
    cfg.cache_dir = cache;
    cfg.train.max_epochs = 3; // keep the fixture run quick
    cfg.train.grad_accumulation = 4;
    cfg.train.seed = 11;
    cfg.model.embed_dim = 16;
    cfg.model.vocab_size = 64;
    cfg.teacher.model_name = "teacher-mock";
    cfg.assistant.model_name = "assistant-mock";
    cfg.teacher.retry.initial_backoff_s = 0.001;
    cfg.assistant.retry.initial_backoff_s = 0.001;
    return cfg;
}

StageSelection all_stages() {
    return {{Stage::synthesize, Stage::augment, Stage::build, Stage::train, Stage::distill,
             Stage::evaluate, Stage::report},
            0};
}

} // namespace

TEST_CASE("config JSON round trip, digest stability, and validation") {
    const auto dir = fresh_dir("cfg");
    PipelineConfig cfg = demo_config(dir / "out");
    auto j = cfg.to_json();
    auto back = PipelineConfig::from_json(j);
    CHECK(back.digest() == cfg.digest());
    CHECK(back.transport == "mock");
    CHECK(back.weights.tau == cfg.weights.tau);

    SUBCASE("digest ignores output and cache locations") {
        PipelineConfig moved = cfg;
        moved.output_dir = dir / "elsewhere";
        moved.cache_dir = dir / "some_cache";
        CHECK(moved.digest() == cfg.digest());
        moved.weights.tau = 4.0;
        CHECK(moved.digest() != cfg.digest());
    }

    SUBCASE("tau is a required config field") {
        auto missing = j;
        missing["loss_weights"].erase("tau");
        CHECK_THROWS_WITH_AS(PipelineConfig::from_json(missing), doctest::Contains("tau"),
                             ConfigError);
    }

    SUBCASE("schema version is enforced") {
        auto wrong = j;
        wrong["schema_version"] = 2;
        CHECK_THROWS_AS(PipelineConfig::from_json(wrong), ConfigError);
    }

    SUBCASE("replay transport requires a cache directory") {
        PipelineConfig replay = cfg;
        replay.transport = "replay";
        replay.cache_dir.reset();
        CHECK_THROWS_AS(replay.validate(), ConfigError);
    }
}

TEST_CASE("full fixture run under the mock transport produces every artifact") {
    const auto root = fresh_dir("full");
    PipelineConfig cfg = demo_config(root / "out");
    run_pipeline(cfg, all_stages());

    ArtifactPaths paths(cfg.output_dir);
    for (const auto& artifact :
         {paths.stage1(), paths.stage2(), paths.teacher_full(), paths.assistant_aug(),
          paths.full(), paths.build_report(), paths.vocab(), paths.assistant_model(),
          paths.student_model(), paths.classification("student"),
          paths.classification("assistant"), paths.generation(), paths.summary_json(),
          paths.summary_text()}) {
        CAPTURE(artifact.string());
        CHECK(fs::exists(artifact));
    }

    SUBCASE("build report counts satisfy the partition and union invariants") {
        std::ifstream in(paths.build_report());
        ordered_json report;
        in >> report;
        CHECK(report["corpus_total"] == 20);
        CHECK(report["stage1_kept"].get<size_t>() + report["stage2_kept"].get<size_t>() +
                  report["quarantined"].get<size_t>() ==
              20);
        CHECK(report["full_total"].get<size_t>() ==
              report["teacher_total"].get<size_t>() + report["assistant_kept"].get<size_t>());
        CHECK(report["config_digest"] == cfg.digest());
    }

    SUBCASE("datasets carry the config digest in provenance") {
        auto ds = load_dataset(paths.full());
        CHECK(ds.provenance.at("config_digest") == cfg.digest());
        CHECK(ds.role == DatasetRole::full);
    }

    SUBCASE("training logs exist with one JSON line per epoch") {
        std::ifstream in(paths.student_log());
        std::string line;
        size_t lines = 0;
        double last_lr = 0;
        while (std::getline(in, line)) {
            auto j = ordered_json::parse(line);
            CHECK(j.contains("loss_total"));
            CHECK(j.contains("loss_soft_rea"));
            last_lr = j["lr"].get<double>();
            ++lines;
        }
        CHECK(lines == 3);
        CHECK(last_lr > 0);
    }

    SUBCASE("summary text renders the three table blocks") {
        std::ifstream in(paths.summary_text());
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        CHECK(text.find("dataset counts") != std::string::npos);
        CHECK(text.find("classification (test split)") != std::string::npos);
        CHECK(text.find("generated reasoning") != std::string::npos);
        CHECK(text.find("n/a") == std::string::npos); // everything populated on a full run
    }
}

TEST_CASE("stage dependency errors name the missing artifact") {
    const auto root = fresh_dir("deps");

    SUBCASE("evaluate before anything") {
        PipelineConfig cfg = demo_config(root / "out1");
        CHECK_THROWS_AS(run_pipeline(cfg, {{Stage::evaluate}, 0}), DependencyError);
    }
    SUBCASE("distill before train") {
        PipelineConfig cfg = demo_config(root / "out2");
        CHECK_THROWS_WITH_AS(run_pipeline(cfg, {{Stage::distill}, 0}),
                             doctest::Contains("assistant.bin"), DependencyError);
    }
    SUBCASE("build before augment") {
        PipelineConfig cfg = demo_config(root / "out3");
        run_pipeline(cfg, {{Stage::synthesize}, 0});
        CHECK_THROWS_WITH_AS(run_pipeline(cfg, {{Stage::build}, 0}),
                             doctest::Contains("assistant_aug"), DependencyError);
    }
    SUBCASE("report with nothing to report") {
        PipelineConfig cfg = demo_config(root / "out4");
        CHECK_THROWS_WITH_AS(run_pipeline(cfg, {{Stage::report}, 0}),
                             doctest::Contains("nothing to report"), Error);
    }
}

TEST_CASE("report renders n/a cells when generation metrics are missing") {
    const auto root = fresh_dir("partial");
    PipelineConfig cfg = demo_config(root / "out");
    // run everything except evaluate: classification and generation absent
    run_pipeline(cfg, {{Stage::synthesize, Stage::augment, Stage::build}, 0});
    write_report(cfg);
    std::ifstream in(ArtifactPaths(cfg.output_dir).summary_text());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find("n/a") != std::string::npos);
    std::ifstream jin(ArtifactPaths(cfg.output_dir).summary_json());
    ordered_json summary;
    jin >> summary;
    CHECK(summary["generation"].is_null());
    CHECK(summary["classification"]["student"].is_null());
    CHECK_FALSE(summary["counts"].is_null());
}

TEST_CASE("mock-transport stages re-run idempotently via their journals") {
    const auto root = fresh_dir("idem");
    PipelineConfig cfg = demo_config(root / "out");
    run_pipeline(cfg, {{Stage::synthesize, Stage::augment, Stage::build}, 0});
    ArtifactPaths paths(cfg.output_dir);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    const auto before_full = slurp(paths.full());
    const auto before_stage1 = slurp(paths.stage1());
    run_pipeline(cfg, {{Stage::synthesize, Stage::augment, Stage::build}, 0});
    CHECK(slurp(paths.full()) == before_full);
    CHECK(slurp(paths.stage1()) == before_stage1);
}

TEST_CASE("synthesize stage 2 alone requires stage 1 artifacts") {
    const auto root = fresh_dir("stage2only");
    PipelineConfig cfg = demo_config(root / "out");
    CHECK_THROWS_AS(run_pipeline(cfg, {{Stage::synthesize}, 2}), DependencyError);
    run_pipeline(cfg, {{Stage::synthesize}, 1});
    CHECK_NOTHROW(run_pipeline(cfg, {{Stage::synthesize}, 2}));
    CHECK(fs::exists(ArtifactPaths(cfg.output_dir).teacher_full()));
}

TEST_CASE("ablation writes the full vs w/o-assistant contrast") {
    const auto root = fresh_dir("ablate");
    PipelineConfig cfg = demo_config(root / "out");
    run_pipeline(cfg, {{Stage::synthesize, Stage::augment, Stage::build, Stage::train}, 0});
    run_ablation(cfg);
    ArtifactPaths paths(cfg.output_dir);
    REQUIRE(fs::exists(paths.ablation()));
    std::ifstream in(paths.ablation());
    ordered_json j;
    in >> j;
    CHECK(j.contains("full"));
    CHECK(j.contains("wo_asst"));
    CHECK(j["full"]["Acc"].is_number());
}
