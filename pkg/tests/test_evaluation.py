import json
import random

import pytest

from vulnpipe.evaluation import (
    ConfusionCounts,
    Report,
    SplitMismatch,
    compare,
    config_digest,
    metrics,
    render_compare_text,
    render_report_text,
    report_from_dict,
)


def hand_metrics(tp, fp, fn, tn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 0.0
    return precision, recall, f1, accuracy


class TestMetrics:
    def test_perfect_classifier(self):
        m = metrics(ConfusionCounts(tp=10, fp=0, fn=0, tn=10))
        assert (m.precision, m.recall, m.f1, m.accuracy) == (1.0, 1.0, 1.0, 1.0)
        assert m.degenerate == ()

    def test_zero_division_conventions(self):
        m = metrics(ConfusionCounts(tp=0, fp=0, fn=5, tn=5))
        assert m.precision == 0.0 and "precision" in m.degenerate
        assert m.recall == 0.0
        assert m.f1 == 0.0 and "f1" in m.degenerate
        assert m.accuracy == 0.5

    def test_table_shaped_counts(self):
        # chosen to land near the insecure row of the reference layout
        m = metrics(ConfusionCounts(tp=85, fn=15, fp=11, tn=89))
        assert m.precision == pytest.approx(85 / 96)
        assert m.recall == pytest.approx(0.85)
        assert m.f1 == pytest.approx(2 * (85 / 96) * 0.85 / ((85 / 96) + 0.85))
        assert m.accuracy == pytest.approx(0.87)

    def test_thousand_random_counts_match_hand_formula(self):
        rng = random.Random(99)
        for _ in range(1000):
            tp, fp, fn, tn = (rng.randint(0, 40) for _ in range(4))
            m = metrics(ConfusionCounts(tp, fp, fn, tn))
            hp, hr, hf, ha = hand_metrics(tp, fp, fn, tn)
            assert abs(m.precision - hp) <= 1e-12
            assert abs(m.recall - hr) <= 1e-12
            assert abs(m.f1 - hf) <= 1e-12
            assert abs(m.accuracy - ha) <= 1e-12

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            ConfusionCounts(-1, 0, 0, 0)


def make_report(counts=ConfusionCounts(44, 6, 1, 39), model="cnn", split="s1"):
    return Report(
        model=model,
        seed=7,
        config_digest=config_digest({"m": model}),
        split_digest=config_digest({"s": split}),
        counts=counts,
        split_sizes={"train": 420, "validation": 90, "test": 90},
        runtime_seconds=1.25,
    )


class TestReport:
    def test_macro_f1_recomputable_from_counts(self):
        rng = random.Random(5)
        for _ in range(50):
            counts = ConfusionCounts(*(rng.randint(0, 30) for _ in range(4)))
            rep = make_report(counts)
            doc = rep.to_dict()
            f1_ins = metrics(counts).f1
            f1_sec = metrics(counts.swapped()).f1
            assert abs(doc["macro"]["f1"] - (f1_ins + f1_sec) / 2) <= 1e-12

    def test_json_excludes_runtime(self):
        doc = json.loads(make_report().to_json())
        assert "runtime" not in json.dumps(doc)

    def test_json_roundtrip(self):
        rep = make_report()
        back = report_from_dict(json.loads(rep.to_json()))
        assert back.to_json() == rep.to_json()

    def test_text_mirrors_table_rows(self):
        text = render_report_text(make_report())
        for needle in ("Secure functions", "Insecure functions", "Overall (macro)",
                       "Precision", "Recall", "F1-score", "runtime:"):
            assert needle in text

    def test_rates_within_unit_interval(self):
        rng = random.Random(1)
        for _ in range(100):
            rep = make_report(ConfusionCounts(*(rng.randint(0, 9) for _ in range(4))))
            doc = rep.to_dict()
            for row in doc["per_class"].values():
                for key in ("precision", "recall", "f1"):
                    assert 0.0 <= row[key] <= 1.0
            assert 0.0 <= doc["accuracy"] <= 1.0


class TestCompare:
    def test_identical_reports_zero_deltas(self):
        doc = json.loads(make_report().to_json())
        deltas = compare(doc, doc)
        assert all(v == 0.0 for v in deltas.values())

    def test_signed_deltas(self):
        a = json.loads(make_report(ConfusionCounts(45, 5, 0, 40)).to_json())
        b = json.loads(make_report(ConfusionCounts(30, 20, 15, 25)).to_json())
        deltas = compare(a, b)
        assert deltas["accuracy"] > 0
        assert deltas["insecure.f1"] > 0

    def test_mismatched_split_rejected(self):
        a = json.loads(make_report(split="s1").to_json())
        b = json.loads(make_report(split="s2").to_json())
        with pytest.raises(SplitMismatch):
            compare(a, b)

    def test_render_table(self):
        a = json.loads(make_report(model="cnn").to_json())
        b = json.loads(make_report(model="wl_svm").to_json())
        text = render_compare_text(a, b, compare(a, b))
        assert "cnn" in text and "wl_svm" in text and "delta" in text


class TestConfigDigest:
    def test_stable_under_key_order(self):
        assert config_digest({"a": 1, "b": 2}) == config_digest({"b": 2, "a": 1})

    def test_sensitive_to_values(self):
        assert config_digest({"a": 1}) != config_digest({"a": 2})
