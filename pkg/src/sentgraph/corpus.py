"""Sentences, sentiment tuples, dataset ingestion and synthetic corpora.

Two JSON layouts are understood:

* the public structured-sentiment release: ``{sent_id, text, opinions}``
  where each opinion carries ``Source``/``Target``/``Polar_expression`` as
  ``[[surface strings], ["begin:end", ...]]`` plus ``Polarity``;
* the canonical token-indexed layout written by this package:
  ``{sent_id, tokens, tuples: [{holder, target, expression, polarity}]}``
  with inclusive ``[start, end]`` token spans (``null`` when absent).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

POLARITIES = ("Positive", "Neutral", "Negative")
DEFAULT_POS = "X"

# user-editable through load_dataset(polarity_map=...); unknown values are rejected
DEFAULT_POLARITY_MAP = {
    "Positive": "Positive",
    "Neutral": "Neutral",
    "Negative": "Negative",
}

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class DataError(ValueError):
    def __init__(self, sent_id, message: str):
        super().__init__(f"{sent_id}: {message}")
        self.sent_id = sent_id
        self.message = message


@dataclass(frozen=True, order=True)
class Span:
    start: int
    end: int

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise ValueError(f"invalid span ({self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start + 1

    def tokens(self) -> range:
        return range(self.start, self.end + 1)

    def overlaps(self, other: "Span") -> bool:
        return self.start <= other.end and other.start <= self.end

    def to_list(self) -> list[int]:
        return [self.start, self.end]


def _span_key(span: Span | None) -> tuple[int, int]:
    return (-1, -1) if span is None else (span.start, span.end)


@dataclass(frozen=True)
class SentimentTuple:
    holder: Span | None
    expression: Span
    target: Span | None
    polarity: str

    def __post_init__(self):
        if self.polarity not in POLARITIES:
            raise ValueError(f"unknown polarity {self.polarity!r}")

    def sort_key(self):
        return (_span_key(self.expression), _span_key(self.holder), _span_key(self.target), self.polarity)

    def components(self) -> dict[str, Span | None]:
        return {"holder": self.holder, "target": self.target, "expression": self.expression}

    def to_json(self) -> dict:
        return {
            "holder": None if self.holder is None else self.holder.to_list(),
            "target": None if self.target is None else self.target.to_list(),
            "expression": self.expression.to_list(),
            "polarity": self.polarity,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "SentimentTuple":
        def span(value):
            return None if value is None else Span(int(value[0]), int(value[1]))

        return cls(span(obj.get("holder")), span(obj["expression"]), span(obj.get("target")), obj["polarity"])


def canonical_tuples(tuples: Iterable[SentimentTuple]) -> list[SentimentTuple]:
    """Deduplicate and sort by expression, then holder, then target."""
    return sorted(set(tuples), key=SentimentTuple.sort_key)


@dataclass
class Sentence:
    sent_id: str
    tokens: list[str]
    pos_tags: list[str] = field(default_factory=list)
    lemmas: list[str] = field(default_factory=list)
    gold: list[SentimentTuple] = field(default_factory=list)
    text: str | None = None
    offsets: list[tuple[int, int]] | None = None

    def __post_init__(self):
        if not self.pos_tags:
            self.pos_tags = [DEFAULT_POS] * len(self.tokens)
        if not self.lemmas:
            self.lemmas = [t.lower() for t in self.tokens]
        self.validate()

    def __len__(self) -> int:
        return len(self.tokens)

    def validate(self) -> None:
        n = len(self.tokens)
        if n < 1:
            raise DataError(self.sent_id, "sentence has no tokens")
        if len(self.pos_tags) != n or len(self.lemmas) != n:
            raise DataError(self.sent_id, "tokens, pos_tags and lemmas differ in length")
        if self.offsets is not None and len(self.offsets) != n:
            raise DataError(self.sent_id, "offsets and tokens differ in length")
        for t in self.gold:
            for span in (t.holder, t.expression, t.target):
                if span is not None and span.end >= n:
                    raise DataError(self.sent_id, f"span {span.to_list()} outside {n} tokens")

    def to_json(self) -> dict:
        obj = {
            "sent_id": self.sent_id,
            "tokens": list(self.tokens),
            "pos_tags": list(self.pos_tags),
            "lemmas": list(self.lemmas),
            "tuples": [t.to_json() for t in self.gold],
        }
        if self.text is not None:
            obj["text"] = self.text
        if self.offsets is not None:
            obj["offsets"] = [list(o) for o in self.offsets]
        return obj

    @classmethod
    def from_json(cls, obj: Mapping) -> "Sentence":
        offsets = obj.get("offsets")
        return cls(
            sent_id=str(obj["sent_id"]),
            tokens=list(obj["tokens"]),
            pos_tags=list(obj.get("pos_tags") or []),
            lemmas=list(obj.get("lemmas") or []),
            gold=[SentimentTuple.from_json(t) for t in obj.get("tuples", [])],
            text=obj.get("text"),
            offsets=None if offsets is None else [tuple(o) for o in offsets],
        )


# ---------------------------------------------------------------------------
# tokenization and ingestion
# ---------------------------------------------------------------------------

def tokenize(text: str) -> list[tuple[str, int, int]]:
    """Whitespace tokenization with punctuation split off; returns (token, begin, end)."""
    return [(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def _align_tokens(sent_id, text: str, tokens: list[str]) -> list[tuple[int, int]]:
    offsets, pos = [], 0
    for tok in tokens:
        begin = text.find(tok, pos)
        if begin < 0:
            raise DataError(sent_id, f"token {tok!r} not found in text")
        offsets.append((begin, begin + len(tok)))
        pos = begin + len(tok)
    return offsets


def _char_span_to_tokens(sent_id, text: str, offsets, annotation, what: str) -> Span | None:
    if not annotation or len(annotation) < 2 or not annotation[1]:
        return None
    hits = []
    for rng in annotation[1]:
        try:
            begin, end = (int(v) for v in str(rng).split(":"))
        except ValueError:
            raise DataError(sent_id, f"{what}: malformed offset {rng!r}") from None
        if not 0 <= begin < end <= len(text):
            raise DataError(sent_id, f"{what}: offset {rng!r} outside text of length {len(text)}")
        hits.extend(i for i, (tb, te) in enumerate(offsets) if tb < end and begin < te)
    if not hits:
        raise DataError(sent_id, f"{what}: offsets {annotation[1]} cover no token")
    # discontinuous annotations collapse to their covering span
    return Span(min(hits), max(hits))


def _public_record(obj: Mapping, polarity_map: Mapping[str, str]) -> Sentence:
    sent_id = obj.get("sent_id", "<missing sent_id>")
    if "text" not in obj or "opinions" not in obj:
        raise DataError(sent_id, "record lacks 'text' or 'opinions'")
    text = obj["text"]
    if "tokens" in obj:
        tokens = list(obj["tokens"])
        offsets = _align_tokens(sent_id, text, tokens)
    else:
        triples = tokenize(text)
        tokens = [t for t, _, _ in triples]
        offsets = [(b, e) for _, b, e in triples]
    if not tokens:
        raise DataError(sent_id, "empty text")
    gold = []
    for opinion in obj["opinions"]:
        raw = opinion.get("Polarity")
        if raw not in polarity_map:
            raise DataError(sent_id, f"unknown polarity {raw!r}")
        expression = _char_span_to_tokens(sent_id, text, offsets, opinion.get("Polar_expression"), "Polar_expression")
        if expression is None:
            raise DataError(sent_id, "opinion without a polar expression")
        holder = _char_span_to_tokens(sent_id, text, offsets, opinion.get("Source"), "Source")
        target = _char_span_to_tokens(sent_id, text, offsets, opinion.get("Target"), "Target")
        gold.append(SentimentTuple(holder, expression, target, polarity_map[raw]))
    return Sentence(str(sent_id), tokens, pos_tags=list(obj.get("pos_tags") or []),
                    lemmas=list(obj.get("lemmas") or []), gold=gold, text=text, offsets=offsets)


@dataclass
class LoadResult:
    sentences: list[Sentence]
    errors: list[DataError]

    @property
    def skipped(self) -> int:
        return len(self.errors)


def read_dataset(path, strict: bool = True, polarity_map: Mapping[str, str] | None = None) -> LoadResult:
    """Load either JSON layout. Strict mode raises on the first bad record."""
    polarity_map = dict(DEFAULT_POLARITY_MAP if polarity_map is None else polarity_map)
    for value in polarity_map.values():
        if value not in POLARITIES:
            raise ValueError(f"polarity map targets unknown polarity {value!r}")
    try:
        with open(path, encoding="utf-8") as fh:
            records = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(str(path), f"malformed JSON: {exc}") from None
    if not isinstance(records, list):
        raise DataError(str(path), "top level must be a JSON array")
    sentences, errors = [], []
    for obj in records:
        try:
            if not isinstance(obj, dict):
                raise DataError("<record>", "record is not an object")
            if "opinions" in obj:
                sentences.append(_public_record(obj, polarity_map))
            elif "tuples" in obj and "tokens" in obj:
                sentences.append(Sentence.from_json(obj))
            else:
                raise DataError(obj.get("sent_id", "<missing sent_id>"), "unrecognized record layout")
        except (DataError, ValueError, KeyError, TypeError) as exc:
            err = exc if isinstance(exc, DataError) else DataError(
                obj.get("sent_id", "<record>") if isinstance(obj, dict) else "<record>", str(exc))
            if strict:
                raise err from None
            errors.append(err)
    return LoadResult(sentences, errors)


def load_dataset(path, strict: bool = True, polarity_map: Mapping[str, str] | None = None) -> list[Sentence]:
    return read_dataset(path, strict=strict, polarity_map=polarity_map).sentences


def load_polarity_map(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return dict(json.load(fh))


def save_corpus(path, sentences: Iterable[Sentence]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([s.to_json() for s in sentences], fh, ensure_ascii=False, indent=1)


def to_public_json(sentence: Sentence) -> dict:
    """Render a sentence in the public layout (reconstructing text if needed)."""
    if sentence.text is not None and sentence.offsets is not None:
        text, offsets = sentence.text, sentence.offsets
    else:
        text = " ".join(sentence.tokens)
        offsets, pos = [], 0
        for tok in sentence.tokens:
            offsets.append((pos, pos + len(tok)))
            pos += len(tok) + 1

    def ann(span):
        if span is None:
            return [[], []]
        b, e = offsets[span.start][0], offsets[span.end][1]
        return [[text[b:e]], [f"{b}:{e}"]]

    return {
        "sent_id": sentence.sent_id,
        "text": text,
        "opinions": [
            {"Source": ann(t.holder), "Target": ann(t.target), "Polar_expression": ann(t.expression),
             "Polarity": t.polarity, "Intensity": "Standard"}
            for t in sentence.gold
        ],
    }


# ---------------------------------------------------------------------------
# synthetic corpora
# ---------------------------------------------------------------------------

@dataclass
class SynthConfig:
    count: int = 32
    seed: int = 0
    overlap_fraction: float = 0.3
    long_span_fraction: float = 0.3
    max_clauses: int = 2
    holder_fraction: float = 0.7
    target_fraction: float = 0.8
    vocab_scale: int = 1


_HOLDER_WORDS = ["John", "Mary", "Anna", "Peter", "critics", "reviewers", "guests", "we", "they", "Moscow"]
_HOLDER_MODS = ["the", "local", "senior", "young", "government", "many"]
_TARGET_WORDS = ["food", "service", "hotel", "room", "staff", "price", "view", "music", "plan", "meat", "film"]
_TARGET_MODS = ["the", "new", "old", "cheap", "main", "Mongolian"]
_EXPRESSIONS = {
    "Positive": ["loved", "praised", "enjoyed", "liked", "great", "excellent", "admired"],
    "Negative": ["hated", "criticized", "disliked", "terrible", "awful", "condemned"],
    "Neutral": ["mentioned", "noted", "expressed", "described", "reported"],
}
_INTENSIFIERS = ["really", "very", "quite", "truly", "so", "much"]
_FILLERS = ["and", "then", "also", "today", "yesterday", "however", "that", "so", ",", "there"]

_POS = {w: "PROPN" for w in _HOLDER_WORDS[:4] + ["Moscow"]}
_POS.update({w: "NOUN" for w in _HOLDER_WORDS[4:7] + _TARGET_WORDS})
_POS.update({w: "PRON" for w in ("we", "they")})
_POS.update({w: "ADJ" for w in _TARGET_MODS[1:] + ["local", "senior", "young", "many"]})
_POS.update({w: "DET" for w in ("the",)})
_POS.update({w: "ADV" for w in _INTENSIFIERS + ["today", "yesterday", "however", "then", "also", "there"]})
_POS.update({w: "CCONJ" for w in ("and", "so", "that")})
_POS.update({",": "PUNCT", ".": "PUNCT", "'s": "PART", "of": "ADP", "who": "PRON", "government": "NOUN"})
for _words in _EXPRESSIONS.values():
    _POS.update({w: "VERB" for w in _words})


class _Builder:
    """Accumulates tokens and hands out spans for placed phrases."""

    def __init__(self):
        self.tokens: list[str] = []

    def put(self, words: list[str]) -> Span:
        start = len(self.tokens)
        self.tokens.extend(words)
        return Span(start, len(self.tokens) - 1)


def _phrase(rng: np.random.Generator, heads: list[str], mods: list[str], long: bool) -> list[str]:
    length = int(rng.integers(4, 6)) if long else int(rng.integers(1, 3))
    words = [str(rng.choice(mods)) for _ in range(length - 1)]
    return words + [str(rng.choice(heads))]


def _expression(rng: np.random.Generator, polarity: str, long: bool, single: bool = False) -> list[str]:
    if single:
        length = 1
    else:
        length = int(rng.integers(4, 6)) if long else int(rng.integers(1, 3))
    words = [str(rng.choice(_INTENSIFIERS)) for _ in range(length - 1)]
    return words + [str(rng.choice(_EXPRESSIONS[polarity]))]


def _filler(rng: np.random.Generator, b: _Builder, low: int = 0, high: int = 2) -> None:
    for _ in range(int(rng.integers(low, high + 1))):
        b.put([str(rng.choice(_FILLERS))])


def _plain_clause(rng, b: _Builder, cfg: SynthConfig) -> list[SentimentTuple]:
    polarity = str(rng.choice(POLARITIES))
    has_h = rng.random() < cfg.holder_fraction
    has_t = rng.random() < cfg.target_fraction
    long = lambda: bool(rng.random() < cfg.long_span_fraction)  # noqa: E731
    order = ["h", "e", "t"] if rng.random() < 0.7 else ["t", "e", "h"]
    spans = {}
    for role in order:
        if role == "h" and has_h:
            spans["h"] = b.put(_phrase(rng, _HOLDER_WORDS, _HOLDER_MODS, long()))
        elif role == "t" and has_t:
            spans["t"] = b.put(_phrase(rng, _TARGET_WORDS, _TARGET_MODS, long()))
        elif role == "e":
            spans["e"] = b.put(_expression(rng, polarity, long()))
        _filler(rng, b, 0, 1)
    return [SentimentTuple(spans.get("h"), spans["e"], spans.get("t"), polarity)]


def _overlap_clause(rng, b: _Builder, cfg: SynthConfig) -> list[SentimentTuple]:
    kind = int(rng.integers(3))
    p1, p2 = (str(x) for x in rng.choice(POLARITIES, size=2))
    if kind == 0:
        # one expression, two targets: "John loved the food and the view"
        h = b.put(_phrase(rng, _HOLDER_WORDS, _HOLDER_MODS, False))
        e = b.put(_expression(rng, p1, False, single=True))
        t1 = b.put([str(rng.choice(_TARGET_WORDS))])
        b.put(["and"])
        t2 = b.put(_phrase(rng, _TARGET_WORDS, _TARGET_MODS, bool(rng.random() < cfg.long_span_fraction)))
        return [SentimentTuple(h, e, t1, p1), SentimentTuple(h, e, t2, p1)]
    if kind == 1:
        # target of the first tuple is the holder of the second: "Mary admired John who hated the plan"
        h = b.put(_phrase(rng, _HOLDER_WORDS, _HOLDER_MODS, False))
        e1 = b.put(_expression(rng, p1, False))
        shared = b.put([str(rng.choice(_HOLDER_WORDS))])
        b.put(["who"])
        e2 = b.put(_expression(rng, p2, False))
        t = b.put(_phrase(rng, _TARGET_WORDS, _TARGET_MODS, bool(rng.random() < cfg.long_span_fraction)))
        return [SentimentTuple(h, e1, shared, p1), SentimentTuple(shared, e2, t, p2)]
    # nested: "Mary praised John 's criticism of the plan"
    h = b.put(_phrase(rng, _HOLDER_WORDS, _HOLDER_MODS, False))
    e1 = b.put(_expression(rng, p1, False))
    inner_h = b.put([str(rng.choice(_HOLDER_WORDS))])
    b.put(["'s"])
    inner_e = b.put([str(rng.choice(_EXPRESSIONS[p2]))])
    outer_t = Span(inner_h.start, inner_e.end)
    b.put(["of"])
    inner_t = b.put(_phrase(rng, _TARGET_WORDS, _TARGET_MODS, bool(rng.random() < cfg.long_span_fraction)))
    return [SentimentTuple(h, e1, outer_t, p1), SentimentTuple(inner_h, inner_e, inner_t, p2)]


def _has_boundary_collision(tuples: list[SentimentTuple]) -> bool:
    """True when some non-linked expression/argument pair lands on a populated relation cell.

    Such sentences are representable but decode to extra tuples, so the
    generator avoids them.
    """
    expressions = {t.expression for t in tuples}
    for side in ("holder", "target"):
        args = {getattr(t, side) for t in tuples} - {None}
        linked = {(t.expression, getattr(t, side)) for t in tuples if getattr(t, side) is not None}
        head_cells = {tuple(sorted((e.start, a.start))) for e, a in linked}
        tail_cells = {tuple(sorted((e.end, a.end))) for e, a in linked}
        for e in expressions:
            for a in args:
                if (e, a) in linked:
                    continue
                if tuple(sorted((e.start, a.start))) in head_cells or tuple(sorted((e.end, a.end))) in tail_cells:
                    return True
    return False


def generate_synthetic(config: SynthConfig | None = None, **overrides) -> list[Sentence]:
    """Templated sentences with known tuples, deterministic in ``config.seed``."""
    cfg = config or SynthConfig()
    if overrides:
        cfg = SynthConfig(**{**cfg.__dict__, **overrides})
    rng = np.random.default_rng(cfg.seed)
    sentences = []
    while len(sentences) < cfg.count:
        b = _Builder()
        tuples: list[SentimentTuple] = []
        _filler(rng, b, 0, 1)
        overlap = rng.random() < cfg.overlap_fraction
        n_clauses = int(rng.integers(1, cfg.max_clauses + 1))
        overlap_at = int(rng.integers(n_clauses)) if overlap else -1
        for k in range(n_clauses):
            if k:
                b.put([str(rng.choice(["and", ",", "but"]))])
            tuples += _overlap_clause(rng, b, cfg) if k == overlap_at else _plain_clause(rng, b, cfg)
        b.put(["."])
        if _has_boundary_collision(tuples):
            continue
        tokens = b.tokens
        sentences.append(Sentence(
            sent_id=f"synth-{cfg.seed}-{len(sentences)}",
            tokens=tokens,
            pos_tags=[_POS.get(t, "X") for t in tokens],
            lemmas=[t.lower() for t in tokens],
            gold=tuples,
        ))
    return sentences
