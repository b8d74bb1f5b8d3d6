"""Token-pair label codec.

Essential labels live in upper-triangular cells ``(i, j)``, ``i <= j``, in
token coordinates. Span labels sit on the (start, end) cell of a component;
relation labels sit on the ordered cell of the two head tokens (or the two
tail tokens) of an expression and its holder/target. Direction is recovered
at decode time from which span is the expression.

Whole labels are three binary matrices over the sentence with a sentinel
token prepended, so they use *shifted* coordinates (token ``t`` is row
``t + 1``, the sentinel is row 0).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Iterable

import numpy as np

from .corpus import POLARITIES, Sentence, SentimentTuple, Span, canonical_tuples


class EssentialLabel(str, Enum):
    HOLDER = "Holder"
    TARGET = "Target"
    EXP_POSITIVE = "Exp:Positive"
    EXP_NEUTRAL = "Exp:Neutral"
    EXP_NEGATIVE = "Exp:Negative"
    HEAD_HOLDER = "ExpHead->HolderHead"
    TAIL_HOLDER = "ExpTail->HolderTail"
    HEAD_TARGET = "ExpHead->TargetHead"
    TAIL_TARGET = "ExpTail->TargetTail"


class WholeLabel(str, Enum):
    SPAN = "span"
    REL = "rel"
    CLS = "cls"


ESSENTIAL_LABELS: tuple[EssentialLabel, ...] = tuple(EssentialLabel)
WHOLE_LABELS: tuple[WholeLabel, ...] = tuple(WholeLabel)
SPAN_LABELS = ESSENTIAL_LABELS[:5]
RELATION_LABELS = ESSENTIAL_LABELS[5:]
LABEL_INDEX = {label: k for k, label in enumerate(ESSENTIAL_LABELS)}

_EXP_LABEL = {
    "Positive": EssentialLabel.EXP_POSITIVE,
    "Neutral": EssentialLabel.EXP_NEUTRAL,
    "Negative": EssentialLabel.EXP_NEGATIVE,
}
_EXP_POLARITY = {v: k for k, v in _EXP_LABEL.items()}
_RELATIONS = {
    "holder": (EssentialLabel.HEAD_HOLDER, EssentialLabel.TAIL_HOLDER),
    "target": (EssentialLabel.HEAD_TARGET, EssentialLabel.TAIL_TARGET),
}


def ordered(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a <= b else (b, a)


@dataclass
class LabelCellSet:
    """Essential cells in token coordinates plus optional whole-label matrices.

    ``n`` counts the sentinel, i.e. ``n == n_tokens + 1``.
    """

    n_tokens: int
    cells: dict[tuple[int, int], set[EssentialLabel]] = field(default_factory=dict)
    whole: np.ndarray | None = None  # [3, n, n] uint8, shifted coordinates

    @property
    def n(self) -> int:
        return self.n_tokens + 1

    def add(self, i: int, j: int, label: EssentialLabel) -> None:
        if not 0 <= i <= j < self.n_tokens:
            raise ValueError(f"cell ({i}, {j}) outside upper triangle of {self.n_tokens} tokens")
        self.cells.setdefault((i, j), set()).add(EssentialLabel(label))

    def labels_at(self, i: int, j: int) -> set[EssentialLabel]:
        return self.cells.get((i, j), set())

    def shifted_cells(self) -> dict[tuple[int, int], set[EssentialLabel]]:
        return {(i + 1, j + 1): set(v) for (i, j), v in self.cells.items()}

    def essential_matrix(self) -> np.ndarray:
        """Dense [9, n, n] indicator in shifted coordinates."""
        out = np.zeros((len(ESSENTIAL_LABELS), self.n, self.n), dtype=bool)
        for (i, j), labels in self.cells.items():
            for label in labels:
                out[LABEL_INDEX[label], i + 1, j + 1] = True
        return out

    def multi_label_cells(self) -> list[tuple[int, int]]:
        return sorted(c for c, labels in self.cells.items() if len(labels) >= 2)

    def to_json(self) -> dict:
        obj = {
            "n": self.n,
            "cells": [[i, j, sorted(l.value for l in labels)] for (i, j), labels in sorted(self.cells.items())],
        }
        if self.whole is not None:
            obj["whole"] = {
                label.value: [[int(i), int(j)] for i, j in zip(*np.nonzero(self.whole[k]))]
                for k, label in enumerate(WHOLE_LABELS)
            }
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "LabelCellSet":
        n = int(obj["n"])
        out = cls(n_tokens=n - 1)
        for i, j, labels in obj["cells"]:
            for label in labels:
                out.add(int(i), int(j), EssentialLabel(label))
        if "whole" in obj:
            whole = np.zeros((3, n, n), dtype=np.uint8)
            for k, label in enumerate(WHOLE_LABELS):
                for i, j in obj["whole"].get(label.value, []):
                    whole[k, i, j] = 1
            out.whole = whole
        return out


def _check(tuples: Iterable[SentimentTuple], n_tokens: int) -> list[SentimentTuple]:
    tuples = list(tuples)
    for t in tuples:
        for span in (t.holder, t.expression, t.target):
            if span is not None and span.end >= n_tokens:
                raise ValueError(f"span {span.to_list()} out of range for {n_tokens} tokens")
    return tuples


def encode_essential(sentence: Sentence | int, tuples: Iterable[SentimentTuple] | None = None) -> LabelCellSet:
    """Encode tuples (default: the sentence's gold) as essential label cells."""
    n_tokens = sentence if isinstance(sentence, int) else len(sentence)
    if tuples is None:
        tuples = sentence.gold
    out = LabelCellSet(n_tokens)
    for t in _check(tuples, n_tokens):
        e = t.expression
        out.add(e.start, e.end, _EXP_LABEL[t.polarity])
        for side, span_label in (("holder", EssentialLabel.HOLDER), ("target", EssentialLabel.TARGET)):
            arg = getattr(t, side)
            if arg is None:
                continue
            head, tail = _RELATIONS[side]
            out.add(arg.start, arg.end, span_label)
            out.add(*ordered(e.start, arg.start), head)
            out.add(*ordered(e.end, arg.end), tail)
    return out


def encode_whole(sentence: Sentence | int, tuples: Iterable[SentimentTuple] | None = None) -> np.ndarray:
    """[3, n+1, n+1] binary matrices (span, rel, cls) in sentinel-shifted coordinates."""
    n_tokens = sentence if isinstance(sentence, int) else len(sentence)
    if tuples is None:
        tuples = sentence.gold
    n = n_tokens + 1
    whole = np.zeros((3, n, n), dtype=np.uint8)
    span_m, rel_m, cls_m = whole
    for t in _check(tuples, n_tokens):
        comps = [s for s in (t.holder, t.expression, t.target) if s is not None]
        for s in comps:
            idx = np.arange(s.start, s.end + 1) + 1
            span_m[np.ix_(idx, idx)] = 1
            cls_m[0, idx] = 1
        e_idx = np.arange(t.expression.start, t.expression.end + 1) + 1
        for arg in (t.holder, t.target):
            if arg is None:
                continue
            a_idx = np.arange(arg.start, arg.end + 1) + 1
            rel_m[np.ix_(e_idx, a_idx)] = 1
            rel_m[np.ix_(a_idx, e_idx)] = 1
    # keep the upper triangle; span pairs are strict (i < j)
    whole[0] = np.triu(span_m, k=1)
    whole[1] = np.triu(rel_m)
    whole[2] = np.triu(cls_m)
    return whole


def encode(sentence: Sentence, tuples: Iterable[SentimentTuple] | None = None) -> LabelCellSet:
    """Essential cells with the whole-label matrices attached."""
    tuples = list(sentence.gold if tuples is None else tuples)
    cells = encode_essential(sentence, tuples)
    cells.whole = encode_whole(sentence, tuples)
    return cells


def decode(cells: LabelCellSet, max_tuples: int | None = None) -> list[SentimentTuple]:
    """Recover tuples from (possibly inconsistent) predicted essential cells.

    A badly calibrated model can label most cells, which makes the holder x
    target enumeration explode; ``max_tuples`` stops the enumeration after that
    many tuples (spans are visited in sorted order, so the cut is deterministic).
    """
    holders, targets, expressions = set(), set(), set()
    for (i, j), labels in cells.cells.items():
        span = Span(i, j)
        for label in labels:
            if label is EssentialLabel.HOLDER:
                holders.add(span)
            elif label is EssentialLabel.TARGET:
                targets.add(span)
            elif label in _EXP_POLARITY:
                expressions.add((span, _EXP_POLARITY[label]))

    def linked(e: Span, arg: Span, side: str) -> bool:
        head, tail = _RELATIONS[side]
        return head in cells.labels_at(*ordered(e.start, arg.start)) or \
            tail in cells.labels_at(*ordered(e.end, arg.end))

    holders, targets = sorted(holders), sorted(targets)
    limit = float("inf") if max_tuples is None else max_tuples
    out = []
    for e, polarity in sorted(expressions):
        hs = [h for h in holders if linked(e, h, "holder")] or [None]
        ts = [t for t in targets if linked(e, t, "target")] or [None]
        for h, t in product(hs, ts):
            if len(out) >= limit:
                return canonical_tuples(out)
            out.append(SentimentTuple(h, e, t, polarity))
    return canonical_tuples(out)


def pair_closure(tuples: Iterable[SentimentTuple]) -> list[SentimentTuple]:
    """Per expression (span + polarity), the cross product of its holders and targets.

    A side is absent only when no tuple of the group has that side, because
    essential labels cannot express "absent" next to a linked argument.
    """
    groups: dict[tuple[Span, str], tuple[set, set]] = defaultdict(lambda: (set(), set()))
    for t in tuples:
        hs, ts = groups[(t.expression, t.polarity)]
        if t.holder is not None:
            hs.add(t.holder)
        if t.target is not None:
            ts.add(t.target)
    out = []
    for (e, polarity), (hs, ts) in groups.items():
        out.extend(SentimentTuple(h, e, t, polarity) for h, t in product(hs or [None], ts or [None]))
    return canonical_tuples(out)


def label_counts(cells: LabelCellSet) -> tuple[int, int]:
    """(span-label instances, relation-label instances)."""
    span = rel = 0
    for labels in cells.cells.values():
        span += sum(1 for l in labels if l in SPAN_LABELS)
        rel += sum(1 for l in labels if l in RELATION_LABELS)
    return span, rel


__all__ = [
    "EssentialLabel", "WholeLabel", "ESSENTIAL_LABELS", "WHOLE_LABELS", "SPAN_LABELS", "RELATION_LABELS",
    "LabelCellSet", "encode_essential", "encode_whole", "encode", "decode", "pair_closure", "label_counts",
    "POLARITIES",
]
