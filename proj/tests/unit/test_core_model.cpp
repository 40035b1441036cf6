#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cotforge/dataset_io.hpp"
#include "cotforge/errors.hpp"
#include "cotforge/parser.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace cotforge;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / ("cotforge_core_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    return dir;
}

Sample make_sample(const std::string& id, SentimentLabel label = SentimentLabel::positive,
                   Split split = Split::train) {
    Sample s;
    s.id = id;
    s.text = "text for " + id;
    s.image_ref = "img/" + id + ".jpg";
    s.gold_label = label;
    s.split = split;
    return s;
}

ReasoningRecord make_record(const std::string& sample_id, SentimentLabel label,
                            RecordSource source) {
    ReasoningRecord r;
    r.sample_id = sample_id;
    r.chain = {"text is upbeat", "image agrees", "no conflict", "overall " + to_string(label)};
    r.predicted_label = label;
    r.source = source;
    r.attempts = 1;
    r.raw_response = format_chain(r.chain, label);
    return r;
}

DatasetEntry make_entry(const std::string& id, SentimentLabel label, RecordSource source,
                        Split split = Split::train) {
    return {make_sample(id, label, split), make_record(id, label, source)};
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("labels parse case-insensitively and reject anything else") {
    CHECK(parse_label("negative") == SentimentLabel::negative);
    CHECK(parse_label("  Neutral ") == SentimentLabel::neutral);
    CHECK(parse_label("POSITIVE") == SentimentLabel::positive);
    CHECK(to_string(parse_label("Positive")) == "positive");
    CHECK_THROWS_AS(parse_label("happy"), ValidationError);
    CHECK_THROWS_AS(parse_label(""), ValidationError);
    // fixed total order used for tie-breaking
    CHECK(static_cast<int>(SentimentLabel::negative) < static_cast<int>(SentimentLabel::neutral));
    CHECK(static_cast<int>(SentimentLabel::neutral) < static_cast<int>(SentimentLabel::positive));
}

TEST_CASE("sample validation enforces non-empty trimmed text") {
    Sample s = make_sample("s1");
    CHECK_NOTHROW(validate_sample(s));
    s.text = "   \t\n ";
    CHECK_THROWS_AS(validate_sample(s), ValidationError);
    s.text = "ok";
    s.id = "";
    CHECK_THROWS_AS(validate_sample(s), ValidationError);
}

TEST_CASE("corpus loader round trips, counts splits, rejects duplicates") {
    const auto dir = temp_dir();
    const auto path = dir / "corpus.jsonl";

    std::vector<Sample> samples;
    samples.push_back(make_sample("a1", SentimentLabel::negative, Split::train));
    samples.push_back(make_sample("a2", SentimentLabel::neutral, Split::dev));
    samples.push_back(make_sample("a3", SentimentLabel::positive, Split::test));
    samples.push_back(make_sample("a4", SentimentLabel::positive, Split::train));
    save_corpus(samples, path);

    auto loaded = load_corpus(path, false);
    REQUIRE(loaded.size() == 4);
    CHECK(loaded == samples);
    auto counts = split_counts(loaded);
    CHECK(counts[0] == 2);
    CHECK(counts[1] == 1);
    CHECK(counts[2] == 1);

    SUBCASE("empty file gives empty collection") {
        const auto empty_path = dir / "empty.jsonl";
        std::ofstream(empty_path).close();
        auto empty = load_corpus(empty_path, false);
        CHECK(empty.empty());
        CHECK(split_counts(empty) == std::array<size_t, 3>{0, 0, 0});
    }

    SUBCASE("duplicate ids are named in the error") {
        samples.push_back(make_sample("a1"));
        const auto dup_path = dir / "dup.jsonl";
        save_corpus(samples, dup_path);
        CHECK_THROWS_WITH_AS(load_corpus(dup_path, false),
                             doctest::Contains("duplicate sample id \"a1\""), ValidationError);
    }

    SUBCASE("malformed line reports its line number") {
        std::ofstream out(dir / "bad.jsonl");
        out << sample_to_json(make_sample("b1")).dump() << "\n";
        out << "{not json\n";
        out.close();
        CHECK_THROWS_WITH_AS(load_corpus(dir / "bad.jsonl", false), doctest::Contains(":2:"),
                             ParseError);
    }

    SUBCASE("aspect presence must match the fine_grained flag") {
        CHECK_THROWS_AS(load_corpus(path, true), ValidationError); // no aspects but fine requested
        std::vector<Sample> fine = samples;
        fine.resize(2);
        fine[0].aspect = "team";
        fine[1].aspect = "match";
        const auto fine_path = dir / "fine.jsonl";
        save_corpus(fine, fine_path);
        CHECK(load_corpus(fine_path, true).size() == 2);
        CHECK_THROWS_AS(load_corpus(fine_path, false), ValidationError);
    }
}

TEST_CASE("full-scale corpus load: 3608 train records") {
    const auto dir = temp_dir();
    const auto path = dir / "mvsa_single.jsonl";
    {
        std::ofstream out(path);
        for (int i = 0; i < 3608; ++i) {
            Sample s = make_sample("mvsa" + std::to_string(i),
                                   all_labels()[static_cast<size_t>(i % 3)], Split::train);
            out << sample_to_json(s).dump() << "\n";
        }
    }
    auto samples = load_corpus(path, false);
    CHECK(samples.size() == 3608);
    CHECK(split_counts(samples)[0] == 3608);
}

TEST_CASE("dataset save/load round trips field-for-field") {
    const auto dir = temp_dir();
    std::vector<DatasetEntry> entries;
    entries.push_back(make_entry("s2", SentimentLabel::negative, RecordSource::teacher_stage1));
    entries.push_back(make_entry("s1", SentimentLabel::positive, RecordSource::teacher_stage1));
    auto ds = make_dataset("t1", DatasetRole::teacher_stage1, entries, {{"k", "v"}});
    // canonical order applied
    CHECK(ds.entries[0].sample.id == "s1");

    const auto path = dir / "ds.jsonl";
    const size_t bytes = save_dataset(ds, path);
    CHECK(bytes > 0);
    {
        std::ifstream in(path);
        std::string line;
        size_t lines = 0;
        while (std::getline(in, line)) ++lines;
        CHECK(lines == 2);
    }
    auto loaded = load_dataset(path);
    CHECK(datasets_equal(ds, loaded));
    CHECK(loaded.entries == ds.entries);
    CHECK(loaded.provenance.at("k") == "v");

    SUBCASE("byte-identical canonical re-serialization") {
        const auto path2 = dir / "ds2.jsonl";
        save_dataset(loaded, path2);
        CHECK(slurp(path) == slurp(path2));
    }

    SUBCASE("empty dataset writes zero lines plus a sidecar") {
        auto empty = make_dataset("none", DatasetRole::assistant_aug, {});
        const auto empty_path = dir / "empty_ds.jsonl";
        CHECK(save_dataset(empty, empty_path) == 0);
        CHECK(fs::exists(dataset_sidecar_path(empty_path)));
        auto loaded_empty = load_dataset(empty_path);
        CHECK(loaded_empty.size() == 0);
        CHECK(loaded_empty.role == DatasetRole::assistant_aug);
    }

    SUBCASE("equality ignores provenance timestamps") {
        auto other = loaded;
        other.provenance["run_timestamp"] = "2020-01-01";
        CHECK(datasets_equal(ds, other));
        other.provenance["k"] = "different";
        CHECK_FALSE(datasets_equal(ds, other));
    }
}

TEST_CASE("role invariants are enforced before any write") {
    const auto dir = temp_dir();

    SUBCASE("teacher_stage1 rejects mispredicted entries") {
        auto entry = make_entry("s1", SentimentLabel::positive, RecordSource::teacher_stage1);
        entry.record.predicted_label = SentimentLabel::negative;
        CHECK_THROWS_AS(make_dataset("bad", DatasetRole::teacher_stage1, {entry}), ValidationError);
        // construct through the permissive role, then flip: save must refuse
        auto ds = make_dataset("bad", DatasetRole::teacher_full, {entry});
        ds.role = DatasetRole::teacher_stage1;
        const auto path = dir / "never.jsonl";
        CHECK_THROWS_AS(save_dataset(ds, path), ValidationError);
        CHECK_FALSE(fs::exists(path));
    }

    SUBCASE("assistant_aug rejects non-train splits") {
        auto entry = make_entry("s1", SentimentLabel::positive, RecordSource::assistant, Split::dev);
        CHECK_THROWS_AS(make_dataset("bad", DatasetRole::assistant_aug, {entry}), ValidationError);
    }

    SUBCASE("record/sample id mismatch is rejected") {
        auto entry = make_entry("s1", SentimentLabel::positive, RecordSource::teacher_stage1);
        entry.record.sample_id = "other";
        CHECK_THROWS_AS(make_dataset("bad", DatasetRole::teacher_stage1, {entry}), ValidationError);
    }

    SUBCASE("N/A image analysis is only valid for text-only samples") {
        auto entry = make_entry("s1", SentimentLabel::positive, RecordSource::teacher_stage1);
        entry.record.chain.image_analysis = "N/A"; // sample carries an image_ref
        CHECK_THROWS_AS(make_dataset("bad", DatasetRole::teacher_stage1, {entry}), ValidationError);
        entry.sample.image_ref.reset();
        CHECK_NOTHROW(make_dataset("ok", DatasetRole::teacher_stage1, {entry}));
    }
}

TEST_CASE("merge_datasets: cardinality, role transitions, conflicts") {
    SUBCASE("stage1 + stage2 -> teacher_full") {
        auto a = make_dataset(
            "t1", DatasetRole::teacher_stage1,
            {make_entry("s1", SentimentLabel::positive, RecordSource::teacher_stage1)});
        auto b = make_dataset(
            "t2", DatasetRole::teacher_stage2,
            {make_entry("s2", SentimentLabel::negative, RecordSource::teacher_stage2)});
        auto merged = merge_datasets(a, b);
        CHECK(merged.role == DatasetRole::teacher_full);
        CHECK(merged.size() == 2);
        CHECK(merged.provenance.at("parent_a") == "t1");
        CHECK(merged.provenance.at("parent_b") == "t2");
    }

    SUBCASE("reference counts: 3608 teacher + 2875 assistant = 6483") {
        std::vector<DatasetEntry> teacher_entries;
        for (int i = 0; i < 3608; ++i) {
            teacher_entries.push_back(make_entry("m" + std::to_string(i), SentimentLabel::neutral,
                                                 RecordSource::teacher_stage1));
        }
        std::vector<DatasetEntry> assistant_entries;
        for (int i = 0; i < 2875; ++i) {
            assistant_entries.push_back(
                make_entry("m" + std::to_string(i), SentimentLabel::neutral, RecordSource::assistant));
        }
        auto teacher = make_dataset("t", DatasetRole::teacher_full, teacher_entries);
        auto assistant = make_dataset("a", DatasetRole::assistant_aug, assistant_entries);
        auto full = merge_datasets(teacher, assistant);
        CHECK(full.size() == 6483);
        CHECK(full.role == DatasetRole::full);
    }

    SUBCASE("empty left side is an identity element") {
        auto empty = make_dataset("empty", DatasetRole::teacher_full, {});
        auto b = make_dataset(
            "b", DatasetRole::teacher_full,
            {make_entry("s1", SentimentLabel::positive, RecordSource::teacher_stage1)});
        auto merged = merge_datasets(empty, b);
        CHECK(merged.size() == b.size());
        CHECK(merged.entries == b.entries);
        CHECK(merged.role == DatasetRole::teacher_full);
    }

    SUBCASE("overlapping (sample_id, source) pairs collide") {
        auto a = make_dataset(
            "a", DatasetRole::teacher_stage1,
            {make_entry("s1", SentimentLabel::positive, RecordSource::teacher_stage1)});
        auto b = make_dataset(
            "b", DatasetRole::teacher_stage1,
            {make_entry("s1", SentimentLabel::positive, RecordSource::teacher_stage1)});
        CHECK_THROWS_WITH_AS(merge_datasets(a, b), doctest::Contains("s1"), ValidationError);
    }

    SUBCASE("same sample under different sources does not collide") {
        auto a = make_dataset(
            "a", DatasetRole::teacher_full,
            {make_entry("s1", SentimentLabel::positive, RecordSource::teacher_stage1)});
        auto b = make_dataset("b", DatasetRole::assistant_aug,
                              {make_entry("s1", SentimentLabel::positive, RecordSource::assistant)});
        CHECK(merge_datasets(a, b).size() == 2);
    }
}

TEST_CASE("property: random datasets survive save/load byte-for-byte") {
    const auto dir = temp_dir();
    std::mt19937_64 rng(20240817);
    const char* words[] = {"glad", "sun", "rain", "crowd", "quiet", "vivid", "flat", "sharp"};

    for (int round = 0; round < 25; ++round) {
        std::vector<DatasetEntry> entries;
        std::set<std::string> used;
        const size_t n = rng() % 12;
        for (size_t i = 0; i < n; ++i) {
            auto label = all_labels()[rng() % 3];
            std::string id = "r" + std::to_string(rng() % 1000) + "_" + std::to_string(i);
            if (!used.insert(id).second) continue;
            auto entry = make_entry(id, label, RecordSource::teacher_stage2);
            entry.sample.text.clear();
            for (int w = 0; w < 1 + static_cast<int>(rng() % 6); ++w) {
                entry.sample.text += std::string(words[rng() % 8]) + " ";
            }
            entry.sample.text += "!";
            if (rng() % 2) entry.sample.image_ref.reset();
            entry.record.attempts = 1 + static_cast<int>(rng() % 3);
            entries.push_back(std::move(entry));
        }
        auto ds = make_dataset("prop" + std::to_string(round), DatasetRole::teacher_stage2, entries,
                               {{"round", std::to_string(round)}});
        const auto path = dir / ("prop" + std::to_string(round) + ".jsonl");
        save_dataset(ds, path);
        auto loaded = load_dataset(path);
        REQUIRE(datasets_equal(ds, loaded));

        const auto path2 = dir / ("prop" + std::to_string(round) + "_b.jsonl");
        save_dataset(loaded, path2);
        REQUIRE(slurp(path) == slurp(path2));
    }
}
