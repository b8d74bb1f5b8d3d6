"""The full token-graph model: encoder, multi-view graph layer, prediction layer."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import Sentence, SentimentTuple
from .encoder import Encoder, Vocabularies
from .graph import SUPERVISED_VIEWS, GraphLayer
from .labeling import LabelCellSet, decode
from .prediction import PredictionLayer, fuse, predict_labels
from .tensor import Tensor, no_grad

# an untrained model labels about half of all cells; decoding that exactly is
# combinatorial, so predictions stop after this many tuples per sentence
MAX_DECODED_TUPLES = 256


@dataclass
class ModelConfig:
    word_dim: int = 100
    pos_dim: int = 50
    lemma_dim: int = 50
    char_dim: int = 50
    char_filters: int = 100
    char_window: int = 3
    lstm_layers: int = 4
    hidden: int = 400
    graph_mlp_hidden: int = 400
    graph_qk_dim: int = 64
    hop_layers: int = 2
    hop_dim: int = 768
    pred_mlp_hidden: int = 400
    pred_qk_dim: int = 64
    embed_dropout: float = 0.4
    dropout: float = 0.3
    rope_base: float = 10000.0
    freeze_word_embeddings: bool = True

    @classmethod
    def preset(cls, name: str) -> "ModelConfig":
        if name == "fidelity":
            return cls()
        if name == "desk":
            return cls(word_dim=8, pos_dim=4, lemma_dim=4, char_dim=4, char_filters=8, lstm_layers=1,
                       hidden=16, graph_mlp_hidden=6, graph_qk_dim=8, hop_layers=2, hop_dim=8,
                       pred_mlp_hidden=12, pred_qk_dim=6, embed_dropout=0.1, dropout=0.1,
                       freeze_word_embeddings=False)
        raise ValueError(f"unknown preset {name!r} (expected 'desk' or 'fidelity')")

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in obj.items() if k in names})


@dataclass
class ForwardOutput:
    H: Tensor
    graph_scores: dict[str, Tensor]
    graph_thresholds: Tensor | None
    U: Tensor
    scores: Tensor
    thresholds: Tensor
    extras: dict = field(default_factory=dict)

    def supervised_graph_scores(self) -> Tensor:
        """[3, n + 1, n + 1] scores of the span, relation and cls views."""
        n = self.H.shape[0]
        return T.concat([T.reshape(self.graph_scores[v], (1, n, n)) for v in SUPERVISED_VIEWS], axis=0)


class TokenGraphModel:
    def __init__(self, cfg: ModelConfig, vocabs: Vocabularies, seed: int = 0):
        self.cfg = cfg
        self.vocabs = vocabs
        rng = np.random.default_rng(seed)
        self.encoder = Encoder(cfg, vocabs, rng)
        self.graph = GraphLayer(cfg, cfg.hidden, rng)
        self.prediction = PredictionLayer(cfg, cfg.hidden, cfg.hidden + cfg.hop_dim, rng)
        self.params: dict[str, Tensor] = {**self.encoder.params, **self.graph.params, **self.prediction.params}

    def trainable(self) -> dict[str, Tensor]:
        frozen = {"encoder.word"} if self.cfg.freeze_word_embeddings else set()
        return {k: v for k, v in self.params.items() if k not in frozen}

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def forward(self, sentence: Sentence, training: bool = False, rng: np.random.Generator | None = None,
                with_graph_thresholds: bool = True, offset: int = 0) -> ForwardOutput:
        cfg = self.cfg
        x = self.encoder.embed(sentence)
        x = T.dropout(x, cfg.embed_dropout, rng, training)
        H = self.encoder.contextualize(x, training, rng)
        H = T.dropout(H, cfg.dropout, rng, training)
        graph_scores = self.graph.all_scores(H, offset)
        graph_th = self.graph.hidden_thresholds(H, offset) if with_graph_thresholds else None
        U = self.graph.multi_hop(H, graph_scores)
        C = T.dropout(fuse(H, U), cfg.dropout, rng, training)
        scores = self.prediction.score_essential(C, offset)
        thresholds = self.prediction.adaptive_threshold(H, offset)
        return ForwardOutput(H, graph_scores, graph_th, U, scores, thresholds)

    def predict_cells(self, sentence: Sentence) -> tuple[LabelCellSet, ForwardOutput]:
        with no_grad():
            out = self.forward(sentence, training=False)
        return predict_labels(out.scores, out.thresholds), out

    def predict(self, sentence: Sentence, max_tuples: int | None = MAX_DECODED_TUPLES) -> list[SentimentTuple]:
        cells, _ = self.predict_cells(sentence)
        return decode(cells, max_tuples)

    # -- persistence --------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
        for k, p in self.params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"parameter {k}: checkpoint shape {state[k].shape} != model shape {p.shape}")
            p.data[...] = state[k]

    def save(self, path, state: dict[str, np.ndarray] | None = None, meta: dict | None = None) -> None:
        info = {"model_config": self.cfg.to_json(), "vocabularies": self.vocabs.to_json(), **(meta or {})}
        save_checkpoint(path, self.state_dict() if state is None else state, info)

    @classmethod
    def load(cls, path) -> tuple["TokenGraphModel", dict]:
        state, meta = load_checkpoint(path)
        model = cls(ModelConfig.from_json(meta["model_config"]), Vocabularies.from_json(meta["vocabularies"]))
        model.load_state_dict(state)
        return model, meta
