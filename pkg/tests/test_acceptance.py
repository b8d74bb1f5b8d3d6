"""Acceptance criteria, one test (or test group) per criterion.

Each test carries a ``criterion`` marker; the conftest prints a PASS/FAIL line
per criterion at the end of the run. Tolerances and time limits are the
contractual ones. Run just this module with ``pytest tests/test_acceptance.py``.
"""

from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest

from sentgraph import cli
from sentgraph import tensor as T
from sentgraph.corpus import Sentence, SentimentTuple, Span, generate_synthetic, to_public_json
from sentgraph.graph import VIEWS, GraphLayer
from sentgraph.labeling import decode, encode_essential, pair_closure
from sentgraph.metrics import graph_f1
from sentgraph.model import ModelConfig
from sentgraph.training import TrainConfig, adaptive_threshold_loss, gradcheck, train

criterion = pytest.mark.criterion


# ---------------------------------------------------------------------------
# 1. codec round trip
# ---------------------------------------------------------------------------

@criterion(1, "codec round trip decode(encode(T)) == pair_closure(T), >= 1000 sentences, < 10 s")
def test_codec_round_trip():
    start = time.perf_counter()
    sentences = generate_synthetic(count=1200, seed=2024, overlap_fraction=0.4)
    mismatches = [s.sent_id for s in sentences if decode(encode_essential(s)) != pair_closure(s.gold)]
    elapsed = time.perf_counter() - start

    tuples = [t for s in sentences for t in s.gold]
    spans = [x for t in tuples for x in (t.holder, t.expression, t.target) if x is not None]
    assert any(len(x) == 1 for x in spans), "no single-token spans"
    assert any(len(x) >= 4 for x in spans), "no spans of length >= 4"
    assert any(t.holder is None for t in tuples) and any(t.target is None for t in tuples)
    overlapped = sum(1 for s in sentences if len(s.gold) > 1 and encode_essential(s).multi_label_cells())
    assert overlapped >= 100, overlapped
    assert mismatches == []
    assert elapsed < 10.0, f"{elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 2. overlapped tuples
# ---------------------------------------------------------------------------

@criterion(2, "overlapped tuples sharing a relation cell encode to a multi-label cell and decode exactly")
def test_nested_tuples_share_a_cell():
    # "Mary praised John 's criticism of the plan": the target of the first tuple contains the
    # second tuple's holder and expression, so cell (2, 4) carries the first tuple's Target label
    # and the second tuple's two holder relation labels
    tokens = "Mary praised John 's criticism of the plan".split()
    first = SentimentTuple(Span(0, 0), Span(1, 1), Span(2, 4), "Positive")
    second = SentimentTuple(Span(2, 2), Span(4, 4), Span(6, 7), "Negative")
    s = Sentence("nested", tokens, gold=[first, second])
    cells = encode_essential(s)
    assert {label.value for label in cells.labels_at(2, 4)} == {
        "Target", "ExpHead->HolderHead", "ExpTail->HolderTail"}
    assert decode(cells) == sorted([first, second], key=SentimentTuple.sort_key)


@criterion(2, "overlapped tuples sharing a relation cell encode to a multi-label cell and decode exactly")
def test_shared_expression_shares_holder_cell():
    # "John loved the food and the view": both tuples link the same holder and expression through
    # cell (0, 1), and the expression/first-target cell holds head and tail target links
    tokens = "John loved the food and the view".split()
    a = SentimentTuple(Span(0, 0), Span(1, 1), Span(2, 3), "Positive")
    b = SentimentTuple(Span(0, 0), Span(1, 1), Span(5, 6), "Positive")
    cells = encode_essential(Sentence("shared", tokens, gold=[a, b]))
    assert {label.value for label in cells.labels_at(0, 1)} == {"ExpHead->HolderHead", "ExpTail->HolderTail"}
    assert len(cells.multi_label_cells()) >= 1
    assert decode(cells) == [a, b]


# ---------------------------------------------------------------------------
# 3. gradient integrity
# ---------------------------------------------------------------------------

@criterion(3, "finite-difference check of the full loss, 4-token desk model, max rel. error < 1e-3, < 60 s")
def test_gradient_integrity():
    start = time.perf_counter()
    report = gradcheck(ModelConfig.preset("desk"), alpha=0.25, seed=0, epsilon=1e-4, tolerance=1e-3)
    elapsed = time.perf_counter() - start
    print(report.summary())
    assert report.passed, report.summary()
    assert report.max_rel_error < 1e-3
    assert elapsed < 60.0, f"{elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 4. loss closed forms
# ---------------------------------------------------------------------------

def _cell_loss(score: float, threshold: float, positive: bool) -> float:
    return adaptive_threshold_loss(T.Tensor([[[score]]]), T.Tensor([[threshold]]), np.array([[[positive]]])).item()


@criterion(4, "loss closed forms ln 2, ln 2, limit 0 within 1e-9")
def test_loss_closed_forms():
    assert abs(_cell_loss(0.0, 0.0, positive=False) - math.log(2)) < 1e-9
    assert abs(_cell_loss(0.0, 0.0, positive=True) - math.log(2)) < 1e-9
    assert abs(_cell_loss(60.0, 0.0, positive=True) - 0.0) < 1e-9


# ---------------------------------------------------------------------------
# 5. rotary shift invariance
# ---------------------------------------------------------------------------

@criterion(5, "attention scores invariant to uniform position shift within 1e-9, 100 cases per view")
@pytest.mark.parametrize("view", VIEWS)
def test_rotary_shift_invariance(view):
    cfg = ModelConfig.preset("desk")
    rng = np.random.default_rng(hash(view) % 2**32)
    worst = 0.0
    for case in range(100):
        layer = GraphLayer(cfg, cfg.hidden, np.random.default_rng(case))
        n = int(rng.integers(2, 16))
        H = T.Tensor(rng.normal(size=(n, cfg.hidden)))
        shift = int(rng.integers(1, 1000))
        a = layer.attention_scores(H, view, offset=0).data
        b = layer.attention_scores(H, view, offset=shift).data
        worst = max(worst, float(np.abs(a - b).max()))
    assert worst < 1e-9, worst


# ---------------------------------------------------------------------------
# 6. attention normalisation
# ---------------------------------------------------------------------------

@criterion(6, "every attention row sums to 1 within 1e-9")
def test_attention_rows_normalised():
    cfg = ModelConfig.preset("desk")
    rng = np.random.default_rng(6)
    for case in range(50):
        layer = GraphLayer(cfg, cfg.hidden, np.random.default_rng(case))
        H = T.Tensor(rng.normal(scale=3.0, size=(int(rng.integers(1, 20)), cfg.hidden)))
        for view, S in layer.all_scores(H).items():
            A = T.softmax(S, axis=1).data
            assert np.abs(A.sum(axis=1) - 1.0).max() < 1e-9, view


# ---------------------------------------------------------------------------
# 7. overfit
# ---------------------------------------------------------------------------

def _overfit(alpha: float, history_path):
    data = generate_synthetic(count=32, seed=0)
    cfg = TrainConfig.preset_defaults("desk").replace(alpha=alpha, epochs=300, eval_every=10, seed=0)
    start = time.perf_counter()
    result = train(data, cfg, ModelConfig.preset("desk"), dev=data, history_path=history_path)
    return result, time.perf_counter() - start


@criterion(7, "desk model overfits 32 synthetic sentences to train SF1 >= 0.95 in 300 epochs (< 10 min)")
def test_overfit_with_whole_labels(tmp_path):
    result, elapsed = _overfit(0.25, tmp_path / "history.jsonl")
    print(f"alpha=0.25: best train SF1 {result.best_dev_sf1:.4f} at epoch {result.best_epoch}, {elapsed:.0f}s")
    records = [json.loads(line) for line in (tmp_path / "history.jsonl").read_text().splitlines()]
    assert all(r["L_w"] is not None for r in records)
    assert result.best_dev_sf1 >= 0.95
    assert elapsed < 600


@criterion(7, "desk model overfits 32 synthetic sentences to train SF1 >= 0.95 in 300 epochs (< 10 min)")
def test_overfit_without_whole_labels(tmp_path):
    result, elapsed = _overfit(0.0, tmp_path / "history.jsonl")
    print(f"alpha=0: best train SF1 {result.best_dev_sf1:.4f} at epoch {result.best_epoch}, {elapsed:.0f}s")
    records = [json.loads(line) for line in (tmp_path / "history.jsonl").read_text().splitlines()]
    assert len(records) == 300
    assert all(r["L_w"] is None for r in records)
    assert all(r["L_all"] == r["L_e"] for r in records)
    assert result.best_dev_sf1 >= 0.95
    assert elapsed < 600


# ---------------------------------------------------------------------------
# 8. metric oracles
# ---------------------------------------------------------------------------

@criterion(8, "graph F1 hand case 16/17 within 1e-9; equals set F1 on 200 exact-span cases")
def test_metric_oracles():
    gold = [[SentimentTuple(Span(0, 1), Span(3, 5), Span(7, 10), "Positive")]]
    pred = [[SentimentTuple(Span(0, 1), Span(3, 4), Span(7, 10), "Positive")]]
    assert abs(graph_f1(pred, gold) - 16 / 17) < 1e-9

    rng = np.random.default_rng(8)
    pool = [Span(4 * k, 4 * k + int(rng.integers(0, 3))) for k in range(5)]  # pairwise disjoint
    polarities = ("Positive", "Neutral", "Negative")

    def draw():
        maybe = lambda: pool[int(rng.integers(5))] if rng.random() < 0.7 else None  # noqa: E731
        return SentimentTuple(maybe(), pool[int(rng.integers(5))], maybe(), polarities[int(rng.integers(3))])

    for _ in range(200):
        preds, golds = [], []
        for _ in range(int(rng.integers(1, 4))):
            g = [draw() for _ in range(int(rng.integers(0, 4)))]
            p = [t for t in g if rng.random() < 0.5] + [draw() for _ in range(int(rng.integers(0, 3)))]
            preds.append(p)
            golds.append(g)
        tp = sum(len(set(p) & set(g)) for p, g in zip(preds, golds))
        n = sum(len(set(p)) + len(set(g)) for p, g in zip(preds, golds))
        oracle = 2 * tp / n if tp else 0.0
        assert graph_f1(preds, golds) == oracle


# ---------------------------------------------------------------------------
# 9. end-to-end on the public JSON layout
# ---------------------------------------------------------------------------

@criterion(9, "train + evaluate run end to end on a public-layout corpus and report every metric")
def test_end_to_end_public_corpus(tmp_path, capsys):
    train_path, test_path = tmp_path / "train.json", tmp_path / "test.json"
    train_path.write_text(json.dumps([to_public_json(s) for s in generate_synthetic(count=24, seed=1)]))
    test_path.write_text(json.dumps([to_public_json(s) for s in generate_synthetic(count=8, seed=2)]))
    run_dir = tmp_path / "run"
    assert cli.run(["--preset", "desk", "train", str(train_path), "--epochs", "3", "--out-dir", str(run_dir)]) == 0
    pred = tmp_path / "pred.json"
    assert cli.run(["predict", str(run_dir / "model.npz"), str(test_path), "-o", str(pred)]) == 0
    capsys.readouterr()
    report_path = tmp_path / "report.json"
    assert cli.run(["evaluate", str(pred), str(test_path), "--out", str(report_path)]) == 0
    table = capsys.readouterr().out
    report = json.loads(report_path.read_text())
    for key in ("holder_f1", "target_f1", "expression_f1", "overall_span_f1", "targeted_f1", "nsf1", "sf1"):
        assert 0.0 <= report[key] <= 1.0
    for label in ("Holder F1", "Target F1", "Exp. F1", "Overall Span F1", "Targeted F1", "NSF1", "SF1"):
        assert label in table


# ---------------------------------------------------------------------------
# 10. alpha sweep
# ---------------------------------------------------------------------------

@criterion(10, "train with an alpha list prints an SF1-vs-alpha table (< 30 min)")
def test_alpha_sweep_table(tmp_path, capsys):
    data = tmp_path / "synth.json"
    assert cli.run(["synth", "--count", "16", "--seed", "10", "-o", str(data)]) == 0
    alphas = ["0", "0.1", "0.25", "0.5", "1"]
    start = time.perf_counter()
    code = cli.run(["--preset", "desk", "train", str(data), "--alpha", *alphas, "--epochs", "5",
                    "--out-dir", str(tmp_path / "sweep")])
    elapsed = time.perf_counter() - start
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split() == ["alpha", "dev", "SF1", "epoch"]
    assert len(lines) == 1 + len(alphas)
    for line, alpha in zip(lines[1:], alphas):
        cells = line.split()
        assert float(cells[0]) == float(alpha)
        assert 0.0 <= float(cells[1]) <= 1.0
    rows = json.loads((tmp_path / "sweep" / "alpha_sweep.json").read_text())
    assert [r["alpha"] for r in rows] == [float(a) for a in alphas]
    assert elapsed < 1800
