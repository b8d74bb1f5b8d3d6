import numpy as np
import pytest

from sentgraph.corpus import SentimentTuple, Span
from sentgraph.metrics import (bucket_ranges, bucketize, evaluate, graph_f1, relation_f1, span_f1, targeted_f1,
                               tuple_extent)


def tup(h, e, t, p="Positive"):
    span = lambda x: None if x is None else Span(*x)  # noqa: E731
    return SentimentTuple(span(h), span(e), span(t), p)


GOLD = [[tup((0, 1), (3, 5), (7, 10), "Neutral")], [tup(None, (2, 2), (0, 0), "Negative"),
                                                   tup((4, 4), (6, 7), None, "Positive")]]


def test_perfect_and_empty():
    report = evaluate(GOLD, GOLD)
    for name in report.METRIC_NAMES:
        assert getattr(report, name) == 1.0
    empty = evaluate([[], []], GOLD)
    for name in empty.METRIC_NAMES:
        assert getattr(empty, name) == 0.0
    assert evaluate([[]], [[]]).sf1 == 0.0


def test_span_f1_partial_expression():
    gold = [[tup(None, (3, 5), None)]]
    pred = [[tup(None, (3, 4), None)]]
    assert span_f1(pred, gold)["expression"] == pytest.approx(0.8, abs=1e-12)


def test_targeted_f1():
    gold = [[tup(None, (0, 0), (2, 2)), tup(None, (4, 4), (6, 6))]]
    assert targeted_f1([[tup(None, (0, 0), (2, 2), "Negative")]], gold) == 0.0
    assert targeted_f1(gold, gold) == 1.0
    assert targeted_f1([[tup(None, (0, 0), (2, 2))]], gold) == pytest.approx(2 / 3)


def test_graph_f1_hand_case():
    gold = [[tup((0, 1), (3, 5), (7, 10))]]
    pred = [[tup((0, 1), (3, 4), (7, 10))]]
    assert abs(graph_f1(pred, gold) - 16 / 17) < 1e-9


def test_polarity_flip():
    flipped = [[tup((0, 1), (3, 5), (7, 10), "Negative")]]
    gold = [[tup((0, 1), (3, 5), (7, 10), "Positive")]]
    assert graph_f1(flipped, gold, use_polarity=True) == 0.0
    assert graph_f1(flipped, gold, use_polarity=False) == 1.0


def test_absent_must_match_absent():
    gold = [[tup(None, (3, 5), (7, 10))]]
    assert graph_f1([[tup((0, 0), (3, 5), (7, 10))]], gold) == 0.0


def test_order_and_duplicates_do_not_matter():
    pred = [list(reversed(GOLD[0] * 2)), GOLD[1][::-1] + GOLD[1]]
    assert evaluate(pred, GOLD).to_json() == evaluate(GOLD, GOLD).to_json()


def test_length_mismatch():
    with pytest.raises(ValueError):
        evaluate([[]], GOLD)


def test_relation_f1():
    gold = [[tup((0, 1), (3, 5), None)]]
    assert relation_f1([[tup((1, 1), (4, 4), None)]], gold) == 1.0
    assert relation_f1([[tup(None, (3, 5), (0, 1))]], gold) == 0.0
    two = [[tup((0, 0), (3, 4), None), tup((8, 8), (3, 4), None)]]
    assert relation_f1(two, gold) == pytest.approx(2 / 3)


def _set_f1(pred, gold):
    tp = n_pred = n_gold = 0
    for p, g in zip(pred, gold):
        p, g = set(p), set(g)
        tp += len(p & g)
        n_pred += len(p)
        n_gold += len(g)
    return 0.0 if tp == 0 else 2 * tp / (n_pred + n_gold)


def random_exact_case(rng):
    # spans come from a pool of pairwise disjoint spans, so overlapping means identical
    pool = [Span(3 * k, 3 * k + int(rng.integers(0, 3))) for k in range(6)]
    pick = lambda: pool[int(rng.integers(len(pool)))]  # noqa: E731
    maybe = lambda: pick() if rng.random() < 0.7 else None  # noqa: E731
    pols = ("Positive", "Neutral", "Negative")
    out = []
    for _ in range(int(rng.integers(1, 4))):
        gold = [SentimentTuple(maybe(), pick(), maybe(), pols[int(rng.integers(3))])
                for _ in range(int(rng.integers(0, 4)))]
        pred = [t for t in gold if rng.random() < 0.6]
        pred += [SentimentTuple(maybe(), pick(), maybe(), pols[int(rng.integers(3))])
                 for _ in range(int(rng.integers(0, 3)))]
        out.append((pred, gold))
    return [p for p, _ in out], [g for _, g in out]


def test_graph_f1_equals_set_f1_on_exact_spans():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        pred, gold = random_exact_case(rng)
        assert graph_f1(pred, gold) == _set_f1(pred, gold)


def test_buckets_single_bucket_equals_global():
    pred = [[tup((0, 1), (3, 4), (7, 10))], []]
    gold = [[tup((0, 1), (3, 5), (7, 10))], [tup(None, (1, 1), None, "Negative")]]
    (row,) = bucketize(pred, gold, "tuple_extent", boundaries=[0])
    assert row["value"] == pytest.approx(graph_f1(pred, gold))
    (row,) = bucketize(pred, gold, "expression_length", boundaries=[1])
    assert row["value"] == pytest.approx(span_f1(pred, gold)["expression"])


def test_buckets_empty_and_split():
    gold = [[tup(None, (0, 0), None), tup(None, (2, 5), None)]]
    pred = [[tup(None, (0, 0), None), tup(None, (2, 3), None)]]
    rows = bucketize(pred, gold, "expression_length", boundaries=[1, 2, 4, 8])
    by_name = {r["bucket"]: r for r in rows}
    assert by_name["1"]["value"] == 1.0
    # pred (2,3) has length 2 and falls in "2-3"; gold (2,5) has length 4 and falls in "4-7"
    assert by_name["2-3"]["value"] == 0.0 and by_name["2-3"]["n_gold"] == 0
    assert by_name["4-7"]["value"] == 0.0 and by_name["4-7"]["n_pred"] == 0
    assert by_name[">=8"]["value"] is None


def test_bucket_helpers():
    assert bucket_ranges([4, 0, 8]) == [(0, 4), (4, 8), (8, float("inf"))]
    assert tuple_extent(tup((0, 1), (3, 5), (7, 10))) == 10
    assert tuple_extent(tup(None, (3, 3), None)) == 0
    with pytest.raises(ValueError):
        bucketize([[]], [[]], "nonsense")


def test_report_json_and_table():
    report = evaluate(GOLD, GOLD)
    report.buckets = {"expression_length": bucketize(GOLD, GOLD)}
    obj = report.to_json()
    assert set(obj) == set(report.METRIC_NAMES) | {"buckets"}
    lines = report.table().splitlines()
    assert lines[0].startswith("Holder F1") and lines[6].startswith("SF1")
