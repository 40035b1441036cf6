#include "cotforge/metrics.hpp"

#include "cotforge/errors.hpp"
#include "cotforge/util.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

namespace cotforge {

using nlohmann::ordered_json;

Tokens tokenize(std::string_view text) {
    Tokens tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };
    for (char c : text) {
        const unsigned char u = static_cast<unsigned char>(c);
        if (std::isspace(u)) {
            flush();
        } else if (u < 128 && std::ispunct(u)) {
            flush();
            tokens.emplace_back(1, c);
        } else {
            current.push_back(static_cast<char>(std::tolower(u)));
        }
    }
    flush();
    return tokens;
}

double percent(double value) { return std::round(value * 1000.0) / 10.0; }

// ---------------------------------------------------------------------------
// Classification

ClassificationReport classification_metrics(std::span<const SentimentLabel> gold,
                                            std::span<const SentimentLabel> pred) {
    if (gold.size() != pred.size()) throw ShapeError("gold/pred length mismatch");
    if (gold.empty()) throw ShapeError("classification_metrics needs at least one pair");

    ClassificationReport report;
    report.total = gold.size();
    for (size_t i = 0; i < gold.size(); ++i) {
        report.confusion[static_cast<size_t>(gold[i])][static_cast<size_t>(pred[i])]++;
    }

    size_t trace = 0;
    double weighted_sum = 0.0;
    double macro_sum = 0.0;
    for (size_t c = 0; c < kNumLabels; ++c) {
        size_t tp = report.confusion[c][c];
        size_t fn = 0;
        size_t fp = 0;
        for (size_t other = 0; other < kNumLabels; ++other) {
            if (other == c) continue;
            fn += report.confusion[c][other];
            fp += report.confusion[other][c];
        }
        trace += tp;
        PerClassStats& stats = report.per_class[c];
        stats.support = tp + fn;
        stats.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
        stats.recall = stats.support == 0 ? 0.0 : static_cast<double>(tp) / stats.support;
        stats.f1 = (stats.precision + stats.recall) == 0.0
                       ? 0.0
                       : 2.0 * stats.precision * stats.recall / (stats.precision + stats.recall);
        weighted_sum += stats.f1 * static_cast<double>(stats.support);
        macro_sum += stats.f1;
    }
    report.accuracy = static_cast<double>(trace) / static_cast<double>(report.total);
    report.weighted_f1 = weighted_sum / static_cast<double>(report.total);
    report.macro_f1 = macro_sum / static_cast<double>(kNumLabels);
    return report;
}

ordered_json ClassificationReport::to_json() const {
    ordered_json j;
    j["Acc"] = percent(accuracy);
    j["w-F1"] = percent(weighted_f1);
    j["m-F1"] = percent(macro_f1);
    j["total"] = total;
    ordered_json per = ordered_json::object();
    for (size_t c = 0; c < kNumLabels; ++c) {
        per[to_string(static_cast<SentimentLabel>(c))] = {
            {"precision", percent(per_class[c].precision)},
            {"recall", percent(per_class[c].recall)},
            {"f1", percent(per_class[c].f1)},
            {"support", per_class[c].support}};
    }
    j["per_class"] = std::move(per);
    ordered_json matrix = ordered_json::array();
    for (const auto& row : confusion) matrix.push_back(row);
    j["confusion"] = std::move(matrix);
    return j;
}

// ---------------------------------------------------------------------------
// BLEU

namespace {

constexpr int kBleuOrder = 4;

std::string join_ngram(const Tokens& tokens, size_t start, int n) {
    std::string key;
    for (int i = 0; i < n; ++i) {
        if (i) key.push_back('\x1f');
        key += tokens[start + i];
    }
    return key;
}

std::unordered_map<std::string, size_t> ngram_counts(const Tokens& tokens, int n) {
    std::unordered_map<std::string, size_t> counts;
    if (tokens.size() < static_cast<size_t>(n)) return counts;
    for (size_t start = 0; start + n <= tokens.size(); ++start) {
        counts[join_ngram(tokens, start, n)]++;
    }
    return counts;
}

struct BleuTallies {
    std::array<size_t, kBleuOrder> matches{0, 0, 0, 0};
    std::array<size_t, kBleuOrder> totals{0, 0, 0, 0};
    size_t hyp_len = 0;
    size_t ref_len = 0;
};

void accumulate_bleu(const Tokens& hyp, const std::vector<Tokens>& refs, BleuTallies& tallies) {
    if (refs.empty()) throw ShapeError("bleu needs at least one reference");
    tallies.hyp_len += hyp.size();
    // Closest reference length, ties to the shorter.
    size_t best_ref = refs.front().size();
    for (const auto& ref : refs) {
        const auto diff = [&](size_t len) {
            return len > hyp.size() ? len - hyp.size() : hyp.size() - len;
        };
        if (diff(ref.size()) < diff(best_ref) ||
            (diff(ref.size()) == diff(best_ref) && ref.size() < best_ref)) {
            best_ref = ref.size();
        }
    }
    tallies.ref_len += best_ref;

    for (int n = 1; n <= kBleuOrder; ++n) {
        auto hyp_counts = ngram_counts(hyp, n);
        std::unordered_map<std::string, size_t> clip;
        for (const auto& ref : refs) {
            for (const auto& [gram, count] : ngram_counts(ref, n)) {
                auto& best = clip[gram];
                best = std::max(best, count);
            }
        }
        size_t total = 0;
        size_t matched = 0;
        for (const auto& [gram, count] : hyp_counts) {
            total += count;
            auto it = clip.find(gram);
            if (it != clip.end()) matched += std::min(count, it->second);
        }
        tallies.matches[n - 1] += matched;
        tallies.totals[n - 1] += total;
    }
}

double bleu_from_tallies(const BleuTallies& tallies) {
    if (tallies.hyp_len == 0) return 0.0;
    double log_precision_sum = 0.0;
    int used_orders = 0;
    for (int n = 0; n < kBleuOrder; ++n) {
        double matches = static_cast<double>(tallies.matches[n]);
        double total = static_cast<double>(tallies.totals[n]);
        if (total == 0.0) continue; // every hypothesis shorter than this order
        if (matches == 0.0) {
            if (n == 0) return 0.0; // no unigram overlap at all
            matches += 1.0;         // add-one smoothing on higher orders
            total += 1.0;
        }
        log_precision_sum += std::log(matches / total);
        ++used_orders;
    }
    if (used_orders == 0) return 0.0;
    const double geo_mean = std::exp(log_precision_sum / used_orders);
    const double bp = tallies.hyp_len >= tallies.ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(tallies.ref_len) /
                                               static_cast<double>(tallies.hyp_len));
    return bp * geo_mean;
}

} // namespace

double sentence_bleu(const Tokens& hypothesis, const std::vector<Tokens>& references) {
    BleuTallies tallies;
    accumulate_bleu(hypothesis, references, tallies);
    return bleu_from_tallies(tallies);
}

double corpus_bleu(const std::vector<Tokens>& hypotheses, const std::vector<Tokens>& references) {
    if (hypotheses.size() != references.size()) throw ShapeError("bleu corpus size mismatch");
    if (hypotheses.empty()) throw ShapeError("bleu corpus must be non-empty");
    BleuTallies tallies;
    for (size_t i = 0; i < hypotheses.size(); ++i) {
        accumulate_bleu(hypotheses[i], {references[i]}, tallies);
    }
    return bleu_from_tallies(tallies);
}

// ---------------------------------------------------------------------------
// ROUGE-L

namespace {

size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<size_t> previous(b.size() + 1, 0);
    std::vector<size_t> current(b.size() + 1, 0);
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j) {
            current[j] = a[i - 1] == b[j - 1] ? previous[j - 1] + 1
                                              : std::max(previous[j], current[j - 1]);
        }
        std::swap(previous, current);
    }
    return previous[b.size()];
}

} // namespace

double rouge_l(const Tokens& hypothesis, const Tokens& reference) {
    if (hypothesis.empty() && reference.empty()) {
        warn("rouge_l: both sides empty; defined as 0");
        return 0.0;
    }
    if (hypothesis.empty() || reference.empty()) return 0.0;
    const double lcs = static_cast<double>(lcs_length(hypothesis, reference));
    if (lcs == 0.0) return 0.0;
    const double precision = lcs / static_cast<double>(hypothesis.size());
    const double recall = lcs / static_cast<double>(reference.size());
    return 2.0 * precision * recall / (precision + recall);
}

// ---------------------------------------------------------------------------
// METEOR-lite

namespace {

// Light suffix stripping; enough to align inflection without a synonym stage.
std::string stem(const std::string& token) {
    static const char* kSuffixes[] = {"ingly", "edly", "ing", "ied", "ies", "ed", "es", "ly", "s"};
    for (const char* suffix : kSuffixes) {
        const size_t len = std::char_traits<char>::length(suffix);
        if (token.size() > len + 2 && token.ends_with(suffix)) {
            return token.substr(0, token.size() - len);
        }
    }
    return token;
}

constexpr double kMeteorAlpha = 0.9;
constexpr double kMeteorGamma = 0.5;
constexpr double kMeteorBeta = 3.0;

} // namespace

double meteor_lite(const Tokens& hypothesis, const Tokens& reference) {
    if (reference.empty()) {
        warn("meteor_lite: empty reference; defined as 0");
        return 0.0;
    }
    if (hypothesis.empty()) return 0.0;

    // Greedy in-order alignment: exact pass first, stemmed pass on leftovers.
    std::vector<int> hyp_to_ref(hypothesis.size(), -1);
    std::vector<bool> ref_used(reference.size(), false);
    for (int pass = 0; pass < 2; ++pass) {
        for (size_t i = 0; i < hypothesis.size(); ++i) {
            if (hyp_to_ref[i] >= 0) continue;
            for (size_t j = 0; j < reference.size(); ++j) {
                if (ref_used[j]) continue;
                const bool match = pass == 0 ? hypothesis[i] == reference[j]
                                             : stem(hypothesis[i]) == stem(reference[j]);
                if (match) {
                    hyp_to_ref[i] = static_cast<int>(j);
                    ref_used[j] = true;
                    break;
                }
            }
        }
    }

    size_t matches = 0;
    size_t chunks = 0;
    int previous_ref = -2;
    for (size_t i = 0; i < hypothesis.size(); ++i) {
        if (hyp_to_ref[i] < 0) continue;
        ++matches;
        if (hyp_to_ref[i] != previous_ref + 1) ++chunks;
        previous_ref = hyp_to_ref[i];
    }
    if (matches == 0) return 0.0;

    const double m = static_cast<double>(matches);
    const double precision = m / static_cast<double>(hypothesis.size());
    const double recall = m / static_cast<double>(reference.size());
    const double f_mean =
        precision * recall / (kMeteorAlpha * precision + (1.0 - kMeteorAlpha) * recall);
    const double penalty =
        kMeteorGamma * std::pow(static_cast<double>(chunks) / m, kMeteorBeta);
    return f_mean * (1.0 - penalty);
}

// ---------------------------------------------------------------------------
// Distinct-N

double distinct_n(const std::vector<Tokens>& hypotheses, int n) {
    if (n != 1 && n != 2) throw DomainError("distinct_n supports n in {1,2}");
    std::unordered_map<std::string, size_t> seen;
    size_t total = 0;
    for (const auto& hyp : hypotheses) {
        if (hyp.size() < static_cast<size_t>(n)) continue;
        for (size_t start = 0; start + n <= hyp.size(); ++start) {
            seen[join_ngram(hyp, start, n)]++;
            ++total;
        }
    }
    if (total == 0) {
        warn("distinct_n: empty n-gram pool; defined as 0");
        return 0.0;
    }
    return static_cast<double>(seen.size()) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Embeddings

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("cosine dimension mismatch");
    double dot = 0.0;
    double norm_a = 0.0;
    double norm_b = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        norm_a += a[i] * a[i];
        norm_b += b[i] * b[i];
    }
    if (norm_a == 0.0 || norm_b == 0.0) throw DomainError("cosine of a zero vector is undefined");
    return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

GenerationReport generation_metrics(const std::vector<std::string>& hypotheses,
                                    const std::vector<std::string>& references,
                                    const std::vector<std::vector<double>>* hyp_vectors,
                                    const std::vector<std::vector<double>>* ref_vectors,
                                    const std::vector<std::string>* ids) {
    if (hypotheses.size() != references.size()) throw ShapeError("hyp/ref count mismatch");
    if (hypotheses.empty()) throw ShapeError("generation_metrics needs at least one pair");
    if (ids && ids->size() != hypotheses.size()) throw ShapeError("id count mismatch");

    std::vector<Tokens> hyp_tokens;
    std::vector<Tokens> ref_tokens;
    hyp_tokens.reserve(hypotheses.size());
    ref_tokens.reserve(references.size());
    for (size_t i = 0; i < hypotheses.size(); ++i) {
        hyp_tokens.push_back(tokenize(hypotheses[i]));
        ref_tokens.push_back(tokenize(references[i]));
    }

    GenerationReport report;
    report.pairs = hypotheses.size();
    report.bleu = corpus_bleu(hyp_tokens, ref_tokens);
    report.per_sample.resize(hypotheses.size());
    double bleu_sum = 0.0;
    double rouge_sum = 0.0;
    double meteor_sum = 0.0;
    for (size_t i = 0; i < hyp_tokens.size(); ++i) {
        auto& row = report.per_sample[i];
        row.id = ids ? (*ids)[i] : std::to_string(i);
        row.bleu = sentence_bleu(hyp_tokens[i], {ref_tokens[i]});
        row.rouge = rouge_l(hyp_tokens[i], ref_tokens[i]);
        row.meteor = meteor_lite(hyp_tokens[i], ref_tokens[i]);
        bleu_sum += row.bleu;
        rouge_sum += row.rouge;
        meteor_sum += row.meteor;
    }
    const double inv = 1.0 / static_cast<double>(hyp_tokens.size());
    report.bleu_sentence = bleu_sum * inv;
    report.rouge = rouge_sum * inv;
    report.meteor = meteor_sum * inv;
    report.dist1 = distinct_n(hyp_tokens, 1);
    report.dist2 = distinct_n(hyp_tokens, 2);

    if (hyp_vectors && ref_vectors) {
        if (hyp_vectors->size() != hypotheses.size() || ref_vectors->size() != references.size()) {
            throw ShapeError("embedding vector count mismatch");
        }
        double sim_sum = 0.0;
        size_t used = 0;
        for (size_t i = 0; i < hyp_vectors->size(); ++i) {
            try {
                const double sim = cosine_similarity((*hyp_vectors)[i], (*ref_vectors)[i]);
                report.per_sample[i].sim = sim;
                report.per_sample[i].has_sim = true;
                sim_sum += sim;
                ++used;
            } catch (const DomainError&) {
                warn("generation_metrics: zero embedding vector; pair " + std::to_string(i) +
                     " skipped");
            }
        }
        if (used > 0) {
            report.sim = sim_sum / static_cast<double>(used);
            report.has_sim = true;
        }
    }
    return report;
}

ordered_json GenerationReport::to_json() const {
    ordered_json j;
    if (has_sim) {
        j["Sim"] = percent(sim);
    } else {
        j["Sim"] = "n/a";
    }
    j["Meteor"] = percent(meteor);
    j["Bleu"] = percent(bleu);
    j["Bleu-sentence"] = percent(bleu_sentence);
    j["Rouge-L"] = percent(rouge);
    j["Dist-1"] = percent(dist1);
    j["Dist-2"] = percent(dist2);
    j["pairs"] = pairs;
    ordered_json rows = ordered_json::array();
    for (const auto& row : per_sample) {
        ordered_json r;
        r["id"] = row.id;
        r["Bleu"] = percent(row.bleu);
        r["Rouge-L"] = percent(row.rouge);
        r["Meteor"] = percent(row.meteor);
        if (row.has_sim) {
            r["Sim"] = percent(row.sim);
        } else {
            r["Sim"] = "n/a";
        }
        rows.push_back(std::move(r));
    }
    j["per_sample"] = std::move(rows);
    return j;
}

} // namespace cotforge
