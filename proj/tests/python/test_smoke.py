"""Smoke tests for the _cotforge extension module."""

import json
import math
import os

import pytest

cf = pytest.importorskip("_cotforge")


def test_labels_and_parsing():
    assert cf.labels() == ["negative", "neutral", "positive"]
    assert cf.parse_label("  Positive ") == "positive"
    with pytest.raises(Exception):
        cf.parse_label("joyful")


def test_loss_kernels_match_frozen_values():
    p = cf.temp_softmax([1.0, 2.0], 1.0)
    assert p[0] == pytest.approx(0.2689414213699951, abs=1e-12)
    assert p[1] == pytest.approx(0.7310585786300049, abs=1e-12)
    assert cf.kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.143841036, abs=1e-8)
    assert cf.multitask_loss(1.0, 2.0, 0.2, 0.8) == pytest.approx(1.8)
    assert cf.total_student_loss(1.0, 1.0, 2.0, 2.0, 0.2, 0.8, 0.3) == pytest.approx(1.3)


def test_masked_nll_ignores_masked_positions():
    logits = [[[2.0, 2.0], [9.0, -9.0]]]
    targets = [[1, -100]]
    value = cf.masked_token_nll(logits, targets, [0])
    assert value == pytest.approx(math.log(2.0), abs=1e-12)


def test_reasoning_parser_round_trip():
    text = cf.format_chain("warm words", "N/A", "no conflict", "clearly glad", "positive")
    parsed = cf.parse_reasoning(text)
    assert parsed["ok"]
    assert parsed["label"] == "positive"
    assert parsed["chain"]["image_analysis"] == "N/A"

    bad = cf.parse_reasoning("Sentiment: happy")
    assert not bad["ok"]
    kinds = {kind for kind, _ in bad["defects"]}
    assert "missing_section" in kinds
    assert "invalid_label" in kinds


def test_prompt_rendering_invariants():
    sample = {"id": "s1", "text": "storm ruined the parade", "gold_label": "negative"}
    predict = cf.render_prompt(sample, "predict")
    explain = cf.render_prompt(sample, "explain")
    assert predict["system_text"] == explain["system_text"]
    # the predict prompt never depends on the gold label
    flipped = dict(sample, gold_label="positive")
    assert cf.render_prompt(flipped, "predict")["user_text"] == predict["user_text"]
    # the explain prompt asserts the gold label exactly once beyond the menu
    extra = explain["user_text"].count("negative") - predict["user_text"].count("negative")
    assert extra == 1


def test_generation_metrics():
    assert cf.bleu_text("a b c d", "a b c e") == pytest.approx(0.5946035575013605, abs=1e-12)
    assert cf.rouge_l(["a", "b", "c"], ["a", "c", "b"]) == pytest.approx(2.0 / 3.0)
    assert cf.distinct_n([["a", "a", "b"]], 1) == pytest.approx(2.0 / 3.0)
    report = cf.classification_metrics(
        ["positive", "positive", "negative"], ["positive", "negative", "negative"]
    )
    assert report["Acc"] == pytest.approx(66.7)
    assert report["m-F1"] == pytest.approx(44.4)


def test_dataset_arithmetic():
    assert cf.expected_full_count(3608, 0.797) == 6484
    assert cf.count_consistency_ok(3608, 0.797, 6483)
    assert not cf.count_consistency_ok(3608, 0.5, 6483)


def test_corpus_loading(tmp_path):
    demo_dir = os.environ.get("COTFORGE_DEMO_DIR")
    if demo_dir:
        corpus = cf.load_corpus(os.path.join(demo_dir, "train.jsonl"), False)
        assert len(corpus) == 20
        assert corpus[0]["gold_label"] in cf.labels()
    path = tmp_path / "tiny.jsonl"
    rows = [
        {"id": "x1", "text": "quiet morning", "image_ref": None, "aspect": None,
         "gold_label": "neutral", "split": "train"},
        {"id": "x1", "text": "duplicate id", "image_ref": None, "aspect": None,
         "gold_label": "neutral", "split": "train"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    with pytest.raises(Exception, match="duplicate"):
        cf.load_corpus(str(path), False)


def test_toy_training_runs_and_learns():
    out = cf.train_synthetic_demo(examples=120, epochs=6, lambda_kd=0.3, seed=7)
    assert out["assistant_last_loss"] < out["assistant_first_loss"]
    assert out["student_last_loss"] < out["student_first_loss"]
    assert 0.0 <= out["student_accuracy"] <= 1.0
