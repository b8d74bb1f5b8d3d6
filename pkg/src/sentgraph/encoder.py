"""Token features and BiLSTM contextualization.

Each token is the concatenation of word, POS, lemma and character-CNN
embeddings. A learned sentinel vector is prepended as row 0 before the
recurrent stack, so every output matrix has ``n + 1`` rows.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor, parameter, xavier_uniform

PAD, UNK = 0, 1
MAX_WORD_CHARS = 20


class Vocab:
    """String-to-index table; index 0 is padding and index 1 is the unknown row."""

    def __init__(self, itos: Sequence[str]):
        self.itos = list(itos)
        self.stoi = {s: i for i, s in enumerate(self.itos)}

    @classmethod
    def build(cls, items: Iterable[str], min_count: int = 1) -> "Vocab":
        counts = Counter(items)
        return cls(["<pad>", "<unk>"] + sorted(s for s, c in counts.items() if c >= min_count))

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, item: str) -> bool:
        return item in self.stoi

    def lookup(self, items: Iterable[str]) -> np.ndarray:
        return np.array([self.stoi.get(s, UNK) for s in items], dtype=np.int64)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.itos) + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])


@dataclass
class Vocabularies:
    words: Vocab
    pos: Vocab
    lemmas: Vocab
    chars: Vocab

    @classmethod
    def build(cls, sentences) -> "Vocabularies":
        sentences = list(sentences)
        return cls(
            words=Vocab.build(t for s in sentences for t in s.tokens),
            pos=Vocab.build(p for s in sentences for p in s.pos_tags),
            lemmas=Vocab.build(l for s in sentences for l in s.lemmas),
            chars=Vocab.build(c for s in sentences for t in s.tokens for c in t),
        )

    def to_json(self) -> dict:
        return {k: getattr(self, k).itos for k in ("words", "pos", "lemmas", "chars")}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabularies":
        return cls(**{k: Vocab(v) for k, v in obj.items()})


def _lstm_params(rng, d_in: int, hidden: int) -> dict[str, Tensor]:
    return {
        "W": parameter(xavier_uniform(rng, d_in, 4 * hidden)),
        "U": parameter(xavier_uniform(rng, hidden, 4 * hidden)),
        "b": parameter(np.zeros(4 * hidden)),
    }


def lstm_direction(x: Tensor, W: Tensor, U: Tensor, b: Tensor, reverse: bool = False) -> Tensor:
    """One unidirectional LSTM pass over rows of ``x``; gate order i, f, o, g."""
    n = x.shape[0]
    hidden = U.shape[0]
    xw = T.affine(x, W, b)
    h = Tensor(np.zeros((1, hidden)))
    c = Tensor(np.zeros((1, hidden)))
    outputs: list[Tensor | None] = [None] * n
    steps = range(n - 1, -1, -1) if reverse else range(n)
    for t in steps:
        state = T.lstm_cell(xw[t:t + 1] + T.matmul(h, U), c)
        h, c = state[:, :hidden], state[:, hidden:]
        outputs[t] = h
    return T.concat(outputs, axis=0)


class Encoder:
    def __init__(self, cfg, vocabs: Vocabularies, rng: np.random.Generator):
        self.cfg = cfg
        self.vocabs = vocabs
        if cfg.hidden % 2:
            raise ValueError("encoder hidden size must be even (two directions)")
        d_in = self.input_dim
        self.params: dict[str, Tensor] = {
            "encoder.word": parameter(xavier_uniform(rng, len(vocabs.words), cfg.word_dim)),
            "encoder.pos": parameter(xavier_uniform(rng, len(vocabs.pos), cfg.pos_dim)),
            "encoder.lemma": parameter(xavier_uniform(rng, len(vocabs.lemmas), cfg.lemma_dim)),
            "encoder.char": parameter(xavier_uniform(rng, len(vocabs.chars), cfg.char_dim)),
            "encoder.char_conv.W": parameter(xavier_uniform(
                rng, cfg.char_window * cfg.char_dim, cfg.char_filters, (cfg.char_window, cfg.char_dim, cfg.char_filters))),
            "encoder.char_conv.b": parameter(np.zeros(cfg.char_filters)),
            "encoder.sentinel": parameter(rng.uniform(-0.1, 0.1, d_in)),
        }
        half = cfg.hidden // 2
        for layer in range(cfg.lstm_layers):
            layer_in = d_in if layer == 0 else cfg.hidden
            for direction in ("fw", "bw"):
                for k, v in _lstm_params(rng, layer_in, half).items():
                    self.params[f"encoder.lstm.{layer}.{direction}.{k}"] = v

    @property
    def input_dim(self) -> int:
        c = self.cfg
        return c.word_dim + c.pos_dim + c.lemma_dim + c.char_filters

    def char_features(self, tokens: Sequence[str]) -> Tensor:
        k = self.cfg.char_window
        pad = (k - 1) // 2
        words = [tok[:MAX_WORD_CHARS] or " " for tok in tokens]
        width = max(len(w) for w in words) + 2 * pad + (k - 1 - 2 * pad)
        ids = np.full((len(words), width), PAD, dtype=np.int64)
        for r, w in enumerate(words):
            ids[r, pad:pad + len(w)] = self.vocabs.chars.lookup(w)
        mask = (ids != PAD)[:, :, None].astype(np.float64)
        emb = T.embedding(self.params["encoder.char"], ids) * mask
        lengths = np.array([len(w) for w in words])
        return T.conv1d_maxpool(emb, self.params["encoder.char_conv.W"], self.params["encoder.char_conv.b"], lengths)

    def embed(self, sentence) -> Tensor:
        """[n + 1, d_in] token features with the sentinel in row 0."""
        p = self.params
        v = self.vocabs
        rows = T.concat([
            T.embedding(p["encoder.word"], v.words.lookup(sentence.tokens)),
            T.embedding(p["encoder.pos"], v.pos.lookup(sentence.pos_tags)),
            T.embedding(p["encoder.lemma"], v.lemmas.lookup(sentence.lemmas)),
            self.char_features(sentence.tokens),
        ], axis=1)
        sentinel = T.reshape(p["encoder.sentinel"], (1, self.input_dim))
        return T.concat([sentinel, rows], axis=0)

    def contextualize(self, x: Tensor, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        """Stacked BiLSTM; returns [n + 1, hidden] with forward and backward halves concatenated."""
        p = self.params
        for layer in range(self.cfg.lstm_layers):
            if layer:
                x = T.dropout(x, self.cfg.dropout, rng, training)
            fw = lstm_direction(x, *(p[f"encoder.lstm.{layer}.fw.{k}"] for k in "WUb"))
            bw = lstm_direction(x, *(p[f"encoder.lstm.{layer}.bw.{k}"] for k in "WUb"), reverse=True)
            x = T.concat([fw, bw], axis=1)
        return x


def load_static_embeddings(path, table: Tensor, vocab: Vocab) -> int:
    """Overwrite rows of ``table`` from a text file of ``token v1 ... vd`` lines.

    Returns the number of rows replaced.
    """
    d = table.shape[1]
    replaced = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != d:
                raise ValueError(f"{path}:{lineno}: expected dimension {d}, got {len(values)}")
            if token in vocab:
                table.data[vocab.stoi[token]] = np.array(values, dtype=np.float64)
                replaced += 1
    return replaced
