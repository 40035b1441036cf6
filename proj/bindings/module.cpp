#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cotforge/builder.hpp"
#include "cotforge/metrics.hpp"
#include "cotforge/pipeline.hpp"
#include "cotforge/synthetic.hpp"
#include "cotforge/trainer.hpp"

namespace py = pybind11;
using namespace cotforge;

namespace {

py::object json_to_py(const ordered_json& j) {
    py::module_ json = py::module_::import("json");
    return json.attr("loads")(j.dump());
}

Sample sample_from_dict(const py::dict& d) {
    Sample s;
    s.id = d["id"].cast<std::string>();
    s.text = d["text"].cast<std::string>();
    if (d.contains("image_ref") && !d["image_ref"].is_none()) {
        s.image_ref = d["image_ref"].cast<std::string>();
    }
    if (d.contains("aspect") && !d["aspect"].is_none()) {
        s.aspect = d["aspect"].cast<std::string>();
    }
    s.gold_label = parse_label(d["gold_label"].cast<std::string>());
    if (d.contains("split")) s.split = parse_split(d["split"].cast<std::string>());
    validate_sample(s);
    return s;
}

} // namespace

PYBIND11_MODULE(_cotforge, m) {
    m.doc() = "Reasoning-distillation pipeline core (CoT synthesis, losses, metrics)";

    py::register_exception<Error>(m, "CotforgeError");

    // labels and parsing
    m.def("parse_label", [](const std::string& s) { return to_string(parse_label(s)); });
    m.def("labels", [] {
        std::vector<std::string> out;
        for (auto label : all_labels()) out.push_back(to_string(label));
        return out;
    });

    // reasoning parser
    m.def("parse_reasoning", [](const std::string& raw) {
        const ParseOutcome outcome = parse_reasoning(raw);
        py::dict d;
        d["ok"] = outcome.ok();
        if (outcome.ok()) {
            py::dict chain;
            chain["text_analysis"] = outcome.chain->text_analysis;
            chain["image_analysis"] = outcome.chain->image_analysis;
            chain["conflict_resolution"] = outcome.chain->conflict_resolution;
            chain["conclusion"] = outcome.chain->conclusion;
            d["chain"] = chain;
            d["label"] = to_string(*outcome.label);
        } else {
            py::list defects;
            for (const auto& defect : outcome.defects) {
                defects.append(py::make_tuple(to_string(defect.kind), defect.detail));
            }
            d["defects"] = defects;
        }
        return d;
    });
    m.def("format_chain",
          [](const std::string& text_analysis, const std::string& image_analysis,
             const std::string& conflict_resolution, const std::string& conclusion,
             const std::string& label) {
              return format_chain(
                  ReasoningChain{text_analysis, image_analysis, conflict_resolution, conclusion},
                  parse_label(label));
          });

    // prompts
    m.def(
        "render_prompt",
        [](const py::dict& sample, const std::string& stage, bool fine_grained) {
            const Sample s = sample_from_dict(sample);
            const TemplateSet set = builtin_template_set(fine_grained);
            const RenderedPrompt prompt = stage == "explain" ? render_explain(s, set)
                                                             : render_prediction(s, set);
            py::dict d;
            d["system_text"] = prompt.system_text;
            d["user_text"] = prompt.user_text;
            d["stage"] = to_string(prompt.stage);
            if (prompt.image_ref) d["image_ref"] = *prompt.image_ref;
            return d;
        },
        py::arg("sample"), py::arg("stage") = "predict", py::arg("fine_grained") = false);

    // losses
    m.def("temp_softmax", [](const std::vector<double>& z, double tau) {
        return temp_softmax(z, tau);
    });
    m.def("kl_divergence", [](const std::vector<double>& p_a, const std::vector<double>& p_s) {
        return kl_divergence(p_a, p_s);
    });
    m.def("multitask_loss", [](double l_cls, double l_rea, double lambda_cls, double lambda_rea) {
        LossWeights w;
        w.lambda_cls = lambda_cls;
        w.lambda_rea = lambda_rea;
        return multitask_loss(l_cls, l_rea, w);
    });
    m.def("total_student_loss",
          [](double hard_cls, double hard_rea, double soft_cls, double soft_rea, double lambda_cls,
             double lambda_rea, double lambda_kd) {
              LossWeights w;
              w.lambda_cls = lambda_cls;
              w.lambda_rea = lambda_rea;
              w.lambda_kd = lambda_kd;
              return total_student_loss(hard_cls, hard_rea, soft_cls, soft_rea, w);
          });
    m.def("masked_token_nll",
          [](const std::vector<std::vector<std::vector<double>>>& token_logits,
             const std::vector<std::vector<int>>& target_ids,
             const std::vector<int>& class_targets) {
              if (token_logits.size() != target_ids.size()) throw ShapeError("batch mismatch");
              std::vector<LogitTensor> logits;
              std::vector<TokenizedExample> examples;
              for (size_t i = 0; i < token_logits.size(); ++i) {
                  LogitTensor t;
                  const size_t rows = token_logits[i].size();
                  const size_t cols = rows ? token_logits[i][0].size() : 0;
                  t.token_logits = TokenLogits(rows, cols);
                  for (size_t r = 0; r < rows; ++r) {
                      if (token_logits[i][r].size() != cols) throw ShapeError("ragged logits");
                      for (size_t c = 0; c < cols; ++c) {
                          t.token_logits.at(r, c) = token_logits[i][r][c];
                      }
                  }
                  logits.push_back(std::move(t));
                  TokenizedExample e;
                  e.target_ids = target_ids[i];
                  e.input_ids.assign(target_ids[i].size(), 0);
                  e.class_target = i < class_targets.size() ? class_targets[i] : 0;
                  examples.push_back(std::move(e));
              }
              return masked_token_nll(logits, examples);
          });

    // metrics
    m.def("tokenize", [](const std::string& text) { return tokenize(text); });
    m.def("bleu", [](const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
        return sentence_bleu(hyp, {ref});
    });
    m.def("bleu_text", [](const std::string& hyp, const std::string& ref) {
        return sentence_bleu(tokenize(hyp), {tokenize(ref)});
    });
    m.def("rouge_l", [](const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
        return rouge_l(hyp, ref);
    });
    m.def("meteor_lite",
          [](const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
              return meteor_lite(hyp, ref);
          });
    m.def("distinct_n", [](const std::vector<std::vector<std::string>>& hyps, int n) {
        return distinct_n(hyps, n);
    });
    m.def("classification_metrics",
          [](const std::vector<std::string>& gold, const std::vector<std::string>& pred) {
              std::vector<SentimentLabel> g;
              std::vector<SentimentLabel> p;
              for (const auto& s : gold) g.push_back(parse_label(s));
              for (const auto& s : pred) p.push_back(parse_label(s));
              return json_to_py(classification_metrics(g, p).to_json());
          });

    // dataset plumbing
    m.def("load_corpus", [](const std::filesystem::path& path, bool fine_grained) {
        py::list out;
        for (const auto& sample : load_corpus(path, fine_grained)) {
            out.append(json_to_py(sample_to_json(sample)));
        }
        return out;
    });
    m.def("merge_dataset_files",
          [](const std::filesystem::path& a, const std::filesystem::path& b,
             const std::filesystem::path& out) {
              auto merged = merge_datasets(load_dataset(a), load_dataset(b));
              return save_dataset(merged, out);
          });
    m.def("expected_full_count", &expected_full_count);
    m.def("count_consistency_ok", &count_consistency_ok, py::arg("train_count"),
          py::arg("assistant_accuracy"), py::arg("reported_full"), py::arg("tolerance") = 3);

    // toy training surface
    m.def(
        "train_synthetic_demo",
        [](size_t examples, int epochs, double lambda_kd, std::uint64_t seed) {
            SyntheticSpec spec;
            spec.seed = seed;
            auto data = make_synthetic_dataset(spec, examples);
            ToyModelConfig mc{spec.vocab_size, 24, 0.3};
            LossWeights w;
            w.lambda_kd = lambda_kd;
            TrainConfig tc;
            tc.seed = seed;
            tc.max_epochs = epochs;
            tc.grad_accumulation = 5;

            ToyModel assistant(mc, seed);
            TrainConfig atc = tc;
            auto alog = train(assistant, data, {}, atc, w, TrainRole::assistant);

            ToyModel student(mc, seed + 1);
            auto slog = train(student, data, {}, tc, w, TrainRole::student, &assistant);

            py::dict out;
            out["assistant_first_loss"] = alog.log.front().loss_total;
            out["assistant_last_loss"] = alog.log.back().loss_total;
            out["student_first_loss"] = slog.log.front().loss_total;
            out["student_last_loss"] = slog.log.back().loss_total;
            out["student_accuracy"] = classification_accuracy(student, data);
            return out;
        },
        py::arg("examples") = 120, py::arg("epochs") = 6, py::arg("lambda_kd") = 0.3,
        py::arg("seed") = 7);

    m.attr("__version__") = "0.1.0";
}
