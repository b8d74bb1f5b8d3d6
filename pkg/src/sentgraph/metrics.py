"""Span, targeted, sentiment-graph and relation F1 scores.

All functions take parallel lists (one entry per sentence) of predicted and
gold tuple lists. Tuples are deduplicated per sentence, so scores do not
depend on tuple order or repetition. 0/0 precision or recall counts as 0.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

from .corpus import SentimentTuple, Span, _span_key

COMPONENTS = ("holder", "target", "expression")

TupleLists = Sequence[Sequence[SentimentTuple]]


def prf(tp: float, n_pred: float, n_gold: float) -> tuple[float, float, float]:
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def _check(pred: TupleLists, gold: TupleLists) -> None:
    if len(pred) != len(gold):
        raise ValueError(f"{len(pred)} predicted sentences vs {len(gold)} gold sentences")


def _component_tokens(tuples: Sequence[SentimentTuple], component: str) -> set[int]:
    out: set[int] = set()
    for t in tuples:
        span = getattr(t, component)
        if span is not None:
            out.update(span.tokens())
    return out


def span_f1(pred: TupleLists, gold: TupleLists) -> dict[str, float]:
    """Token-level micro F1 per component and pooled over all three ("overall")."""
    _check(pred, gold)
    counts = {c: [0, 0, 0] for c in COMPONENTS}
    for p_tuples, g_tuples in zip(pred, gold):
        for c in COMPONENTS:
            p, g = _component_tokens(p_tuples, c), _component_tokens(g_tuples, c)
            counts[c][0] += len(p & g)
            counts[c][1] += len(p)
            counts[c][2] += len(g)
    out = {c: prf(*counts[c])[2] for c in COMPONENTS}
    pooled = [sum(counts[c][k] for c in COMPONENTS) for k in range(3)]
    out["overall"] = prf(*pooled)[2]
    return out


def targeted_f1(pred: TupleLists, gold: TupleLists) -> float:
    """Exact target span plus polarity; (target, polarity) pairs deduplicated per sentence."""
    _check(pred, gold)
    tp = n_pred = n_gold = 0
    for p_tuples, g_tuples in zip(pred, gold):
        p = {(t.target, t.polarity) for t in p_tuples if t.target is not None}
        g = {(t.target, t.polarity) for t in g_tuples if t.target is not None}
        tp += len(p & g)
        n_pred += len(p)
        n_gold += len(g)
    return prf(tp, n_pred, n_gold)[2]


def _overlap_ratio(a: Span | None, b: Span | None) -> float | None:
    """|a & b| / |a|; 1 when both absent; None when the pair cannot match."""
    if a is None and b is None:
        return 1.0
    if a is None or b is None or not a.overlaps(b):
        return None
    inter = min(a.end, b.end) - max(a.start, b.start) + 1
    return inter / len(a)


def _weights(p: tuple, g: tuple) -> tuple[float, float] | None:
    # p, g are (holder, expression, target, polarity-or-None) keys
    if p[3] != g[3] or not p[1].overlaps(g[1]):
        return None
    pw = rw = 0.0
    for a, b in zip(p[:3], g[:3]):
        fwd = _overlap_ratio(a, b)
        if fwd is None:
            return None
        pw += fwd
        rw += _overlap_ratio(b, a)
    return pw / 3.0, rw / 3.0


def _key(t: SentimentTuple, use_polarity: bool) -> tuple:
    return t.holder, t.expression, t.target, t.polarity if use_polarity else None


def _key_order(k: tuple):
    return _span_key(k[1]), _span_key(k[0]), _span_key(k[2]), k[3] or ""


def tuple_weights(p: SentimentTuple, g: SentimentTuple, use_polarity: bool) -> tuple[float, float] | None:
    """(precision weight, recall weight) of a pred/gold pair, or None if they do not match."""
    return _weights(_key(p, use_polarity), _key(g, use_polarity))


def _greedy(pairs: list[tuple[float, float, int, int]]) -> float:
    """Greedy one-to-one matching by (weight, secondary weight) descending; returns summed weight."""
    used_p, used_g, total = set(), set(), 0.0
    for w, _, i, j in sorted(pairs, key=lambda x: (-x[0], -x[1], x[2], x[3])):
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        total += w
    return total


def graph_counts(pred: Sequence[SentimentTuple], gold: Sequence[SentimentTuple],
                 use_polarity: bool) -> tuple[float, float, int, int]:
    """(precision weight sum, recall weight sum, #pred, #gold) for one sentence.

    Without polarity, tuples differing only in polarity count as one graph.
    """
    pred_keys = {_key(t, use_polarity) for t in pred}
    gold_keys = sorted({_key(t, use_polarity) for t in gold}, key=_key_order)
    # only predictions that match some gold tuple take part in the matching; sorting just those keeps
    # the same relative order (and hence the same tie-breaks) as sorting every prediction
    scored = []
    for p in pred_keys:
        row = [(j, w) for j, g in enumerate(gold_keys) if (w := _weights(p, g)) is not None]
        if row:
            scored.append((p, row))
    scored.sort(key=lambda item: _key_order(item[0]))
    p_pairs, r_pairs = [], []
    for i, (_, row) in enumerate(scored):
        for j, (pw, rw) in row:
            p_pairs.append((pw, rw, i, j))
            r_pairs.append((rw, pw, i, j))
    return _greedy(p_pairs), _greedy(r_pairs), len(pred_keys), len(gold_keys)


def graph_f1(pred: TupleLists, gold: TupleLists, use_polarity: bool = True) -> float:
    """Sentiment-graph F1 (SF1 with polarity, NSF1 without) with overlap-weighted matches."""
    _check(pred, gold)
    pw = rw = 0.0
    n_pred = n_gold = 0
    for p_tuples, g_tuples in zip(pred, gold):
        a, b, c, d = graph_counts(p_tuples, g_tuples, use_polarity)
        pw += a
        rw += b
        n_pred += c
        n_gold += d
    if not (n_pred and n_gold) or not (pw and rw):
        return 0.0
    # 2PR/(P+R) with P = pw/n_pred, R = rw/n_gold, folded into one division so that
    # integral weights (exact matches) give the correctly rounded 2tp/(n_pred + n_gold)
    return 2 * pw * rw / (pw * n_gold + rw * n_pred)


def relation_pairs(tuples: Sequence[SentimentTuple]) -> list[tuple[Span, Span, str]]:
    pairs = set()
    for t in tuples:
        if t.holder is not None:
            pairs.add((t.expression, t.holder, "exp-holder"))
        if t.target is not None:
            pairs.add((t.expression, t.target, "exp-target"))
    return sorted(pairs, key=lambda x: (x[2], x[0], x[1]))


def relation_f1(pred: TupleLists, gold: TupleLists) -> float:
    """Typed expression-argument pairs; a match needs both spans to overlap and the same type."""
    _check(pred, gold)
    tp = n_pred = n_gold = 0
    for p_tuples, g_tuples in zip(pred, gold):
        p, g = relation_pairs(p_tuples), relation_pairs(g_tuples)
        pairs = [(1.0, 0.0, i, j) for i, a in enumerate(p) for j, b in enumerate(g)
                 if a[2] == b[2] and a[0].overlaps(b[0]) and a[1].overlaps(b[1])]
        tp += int(_greedy(pairs))
        n_pred += len(p)
        n_gold += len(g)
    return prf(tp, n_pred, n_gold)[2]


@dataclass
class EvalReport:
    holder_f1: float
    target_f1: float
    expression_f1: float
    overall_span_f1: float
    targeted_f1: float
    nsf1: float
    sf1: float
    relation_f1: float
    buckets: dict = field(default_factory=dict)

    METRIC_NAMES = ("holder_f1", "target_f1", "expression_f1", "overall_span_f1", "targeted_f1", "nsf1", "sf1",
                    "relation_f1")

    def to_json(self) -> dict:
        out = asdict(self)
        if not self.buckets:
            out.pop("buckets")
        return out

    def table(self) -> str:
        labels = {
            "holder_f1": "Holder F1", "target_f1": "Target F1", "expression_f1": "Exp. F1",
            "overall_span_f1": "Overall Span F1", "targeted_f1": "Targeted F1", "nsf1": "NSF1", "sf1": "SF1",
            "relation_f1": "Relation F1",
        }
        lines = [f"{labels[k]:<16} {100 * getattr(self, k):6.2f}" for k in self.METRIC_NAMES]
        for name, rows in self.buckets.items():
            lines.append(f"-- {name}")
            for row in rows:
                value = "-" if row["value"] is None else f"{100 * row['value']:6.2f}"
                lines.append(f"   {row['bucket']:<12} {value:>6}  (gold {row['n_gold']}, pred {row['n_pred']})")
        return "\n".join(lines)


def evaluate(pred: TupleLists, gold: TupleLists) -> EvalReport:
    spans = span_f1(pred, gold)
    return EvalReport(
        holder_f1=spans["holder"],
        target_f1=spans["target"],
        expression_f1=spans["expression"],
        overall_span_f1=spans["overall"],
        targeted_f1=targeted_f1(pred, gold),
        nsf1=graph_f1(pred, gold, use_polarity=False),
        sf1=graph_f1(pred, gold, use_polarity=True),
        relation_f1=relation_f1(pred, gold),
    )


# ---------------------------------------------------------------------------
# length buckets
# ---------------------------------------------------------------------------

DEFAULT_BOUNDARIES = {"expression_length": (1, 2, 4, 8), "tuple_extent": (0, 4, 8, 16)}


def expression_length(t: SentimentTuple) -> int:
    return len(t.expression)


def tuple_extent(t: SentimentTuple) -> int:
    """Distance from the leftmost to the rightmost token of the tuple."""
    spans = [s for s in (t.holder, t.expression, t.target) if s is not None]
    return max(s.end for s in spans) - min(s.start for s in spans)


def bucket_ranges(boundaries: Sequence[int]) -> list[tuple[int, float]]:
    """Half-open ranges [b_k, b_{k+1}) with the last one unbounded."""
    bounds = sorted(boundaries)
    return [(lo, hi) for lo, hi in zip(bounds, list(bounds[1:]) + [float("inf")])]


def _range_name(lo: int, hi: float) -> str:
    if hi == float("inf"):
        return f">={lo}"
    return f"{lo}" if hi == lo + 1 else f"{lo}-{int(hi) - 1}"


def bucketize(pred: TupleLists, gold: TupleLists, by: str = "expression_length",
              boundaries: Sequence[int] | None = None) -> list[dict]:
    """Recompute a metric on the tuples falling into each length bucket.

    ``by="expression_length"`` reports expression span F1; ``by="tuple_extent"``
    reports SF1. Gold and predicted tuples are each filtered by their own
    length. A bucket with neither gold nor predicted tuples has value None.
    """
    _check(pred, gold)
    if by == "expression_length":
        key: Callable[[SentimentTuple], int] = expression_length
        metric = lambda p, g: span_f1(p, g)["expression"]  # noqa: E731
    elif by == "tuple_extent":
        key = tuple_extent
        metric = lambda p, g: graph_f1(p, g, use_polarity=True)  # noqa: E731
    else:
        raise ValueError(f"unknown bucketing {by!r}")
    if boundaries is None:
        boundaries = DEFAULT_BOUNDARIES[by]
    rows = []
    for lo, hi in bucket_ranges(boundaries):
        p_sel = [[t for t in ts if lo <= key(t) < hi] for ts in pred]
        g_sel = [[t for t in ts if lo <= key(t) < hi] for ts in gold]
        n_pred, n_gold = sum(map(len, p_sel)), sum(map(len, g_sel))
        value = metric(p_sel, g_sel) if n_pred or n_gold else None
        rows.append({"bucket": _range_name(lo, hi), "low": lo, "high": None if hi == float("inf") else hi,
                     "value": value, "n_gold": n_gold, "n_pred": n_pred})
    return rows
