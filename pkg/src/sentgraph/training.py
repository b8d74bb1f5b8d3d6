"""Losses, optimizer, learning-rate schedule and the training loop."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .corpus import Sentence, SentimentTuple, Span
from .encoder import Vocabularies
from .gradcheck import GradcheckReport, NumericError, finite_difference_check
from .labeling import encode_essential, encode_whole
from .metrics import evaluate
from .model import ForwardOutput, ModelConfig, TokenGraphModel
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def upper_triangle(n: int, skip_sentinel: bool = False) -> np.ndarray:
    mask = np.triu(np.ones((n, n), dtype=bool))
    if skip_sentinel:
        mask[0] = False
    return mask


def adaptive_threshold_loss(scores: Tensor, thresholds: Tensor, gold: np.ndarray,
                            universe: np.ndarray | None = None, region: np.ndarray | None = None) -> Tensor:
    """Multi-label loss with a per-cell learned threshold.

    For every cell in ``region`` (default: ``j >= i``)::

        log(exp(TH) + sum_{r in neg} exp(S_r)) + log(exp(-TH) + sum_{r in pos} exp(-S_r))

    where pos/neg partition the labels of ``universe`` at that cell according
    to ``gold``. ``scores`` is [R, n, n], ``thresholds`` [n, n], masks [R, n, n].
    """
    scores, thresholds = T.as_tensor(scores), T.as_tensor(thresholds)
    R, n, _ = scores.shape
    gold = np.asarray(gold, dtype=bool)
    universe = np.ones((R, n, n), dtype=bool) if universe is None else np.asarray(universe, dtype=bool)
    region = upper_triangle(n) if region is None else np.asarray(region, dtype=bool)
    th = T.reshape(thresholds, (1, n, n))
    always = np.ones((1, n, n), dtype=bool)
    neg = T.logsumexp(T.concat([th, scores], axis=0), axis=0,
                      mask=np.concatenate([always, universe & ~gold]))
    pos = T.logsumexp(T.concat([-th, -scores], axis=0), axis=0,
                      mask=np.concatenate([always, universe & gold]))
    return T.tsum((neg + pos) * region.astype(np.float64))


def total_loss(l_e, l_w, alpha: float):
    """``L_e + alpha * L_w``; with ``alpha == 0`` the whole-label term is dropped entirely."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if alpha == 0 or l_w is None:
        return l_e
    return l_e + l_w * alpha


@dataclass
class Targets:
    essential: np.ndarray       # [9, n+1, n+1]
    essential_region: np.ndarray
    whole: np.ndarray           # [3, n+1, n+1]
    whole_universe: np.ndarray

    @classmethod
    def from_sentence(cls, sentence: Sentence) -> "Targets":
        n = len(sentence) + 1
        essential = encode_essential(sentence).essential_matrix()
        whole = encode_whole(sentence).astype(bool)
        universe = np.zeros((3, n, n), dtype=bool)
        universe[0] = universe[1] = upper_triangle(n, skip_sentinel=True)
        universe[2] = upper_triangle(n)
        return cls(essential, upper_triangle(n, skip_sentinel=True), whole, universe)


def sentence_losses(model: TokenGraphModel, sentence: Sentence, targets: Targets, alpha: float,
                    training: bool = False, rng=None) -> tuple[Tensor, Tensor | None, ForwardOutput]:
    out = model.forward(sentence, training=training, rng=rng, with_graph_thresholds=alpha > 0)
    l_e = adaptive_threshold_loss(out.scores, out.thresholds, targets.essential, region=targets.essential_region)
    l_w = None
    if alpha > 0:
        l_w = adaptive_threshold_loss(out.supervised_graph_scores(), out.graph_thresholds, targets.whole,
                                      universe=targets.whole_universe, region=upper_triangle(len(sentence) + 1))
    return l_e, l_w, out


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------

class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * p.grad
            v *= self.b2
            v += (1.0 - self.b2) * p.grad * p.grad
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(params: dict[str, Tensor], max_norm: float | None) -> float:
    total = math.sqrt(sum(float((p.grad ** 2).sum()) for p in params.values() if p.grad is not None))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return total


def cosine_warm_restarts(epoch: float, peak: float, t0: float = 10, t_mult: float = 2,
                         min_ratio: float = 0.01) -> float:
    """Learning rate at fractional ``epoch`` for cosine annealing with warm restarts."""
    floor = peak * min_ratio
    period, t = float(t0), float(epoch)
    while t >= period:
        t -= period
        period *= t_mult
    return floor + (peak - floor) * 0.5 * (1.0 + math.cos(math.pi * t / period))


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    alpha: float = 0.25
    lr: float = 3e-5
    batch_size: int = 8
    epochs: int = 100
    t0: int = 10
    t_mult: int = 2
    min_lr_ratio: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float | None = 5.0
    seed: int = 0
    dev_fraction: float = 0.1
    eval_every: int = 1
    preset: str = "fidelity"

    @classmethod
    def preset_defaults(cls, name: str) -> "TrainConfig":
        if name == "fidelity":
            return cls(preset="fidelity")
        if name == "desk":
            return cls(preset="desk", lr=1e-2, epochs=300, batch_size=8)
        raise ValueError(f"unknown preset {name!r} (expected 'desk' or 'fidelity')")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainResult:
    model: TokenGraphModel
    history: list[dict]
    best_epoch: int
    best_dev_sf1: float | None
    best_state: dict[str, np.ndarray] = field(repr=False, default_factory=dict)


def split_corpus(sentences: Sequence[Sentence], dev_fraction: float, seed: int):
    """Seeded train/dev split; at least one sentence on each side when possible."""
    sentences = list(sentences)
    if len(sentences) < 2 or dev_fraction <= 0:
        return sentences, sentences
    order = np.random.default_rng(seed).permutation(len(sentences))
    k = min(max(1, int(round(dev_fraction * len(sentences)))), len(sentences) - 1)
    return [sentences[i] for i in order[k:]], [sentences[i] for i in order[:k]]


def predict_corpus(model: TokenGraphModel, sentences: Sequence[Sentence]) -> list[list[SentimentTuple]]:
    return [model.predict(s) for s in sentences]


def train(sentences: Sequence[Sentence], config: TrainConfig | None = None, model_config: ModelConfig | None = None,
          dev: Sequence[Sentence] | None = None, history_path=None, checkpoint_path=None,
          vocabs: Vocabularies | None = None, on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Train a model; keeps the parameters with the best dev SF1.

    Without ``dev`` a seeded split of ``sentences`` is used. History records
    one JSON object per epoch with ``L_e``, ``L_w`` (``null`` when alpha is 0),
    ``L_all`` and ``dev_sf1``; losses are averaged per sentence.
    """
    config = config or TrainConfig()
    model_config = model_config or ModelConfig.preset(config.preset)
    if dev is None:
        train_set, dev_set = split_corpus(sentences, config.dev_fraction, config.seed)
    else:
        train_set, dev_set = list(sentences), list(dev)
    if not train_set:
        raise ValueError("empty training corpus")
    vocabs = vocabs or Vocabularies.build(train_set)
    model = TokenGraphModel(model_config, vocabs, seed=config.seed)
    targets = [Targets.from_sentence(s) for s in train_set]
    params = model.trainable()
    optimizer = Adam(params, config.lr, (config.beta1, config.beta2), config.adam_eps)
    rng = np.random.default_rng(config.seed + 1)

    history: list[dict] = []
    best_state = model.state_dict()
    best_epoch, best_sf1 = 0, None
    history_fh = None
    if history_path is not None:
        Path(history_path).parent.mkdir(parents=True, exist_ok=True)
        history_fh = open(history_path, "w", encoding="utf-8")
    n_batches = math.ceil(len(train_set) / config.batch_size)
    try:
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(train_set))
            sums = {"L_e": 0.0, "L_w": 0.0, "L_all": 0.0}
            lr = config.lr
            for b in range(n_batches):
                lr = cosine_warm_restarts(epoch - 1 + b / n_batches, config.lr, config.t0, config.t_mult,
                                          config.min_lr_ratio)
                idx = order[b * config.batch_size:(b + 1) * config.batch_size]
                optimizer.zero_grad()
                batch_loss = None
                for i in idx:
                    l_e, l_w, _ = sentence_losses(model, train_set[i], targets[i], config.alpha, True, rng)
                    l_all = total_loss(l_e, l_w, config.alpha)
                    value = l_all.item()
                    if not math.isfinite(value):
                        raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}, "
                                           f"sentence {train_set[i].sent_id}")
                    sums["L_e"] += l_e.item()
                    sums["L_w"] += 0.0 if l_w is None else l_w.item()
                    sums["L_all"] += value
                    batch_loss = l_all if batch_loss is None else batch_loss + l_all
                (batch_loss * (1.0 / len(idx))).backward()
                clip_grad_norm(params, config.clip_norm)
                optimizer.step(lr)
            record = {
                "epoch": epoch,
                "lr": lr,
                "L_e": sums["L_e"] / len(train_set),
                "L_w": None if config.alpha == 0 else sums["L_w"] / len(train_set),
                "L_all": sums["L_all"] / len(train_set),
                "dev_sf1": None,
            }
            if epoch % config.eval_every == 0 or epoch == config.epochs:
                report = evaluate(predict_corpus(model, dev_set), [s.gold for s in dev_set])
                record["dev_sf1"] = report.sf1
                if best_sf1 is None or report.sf1 > best_sf1:
                    best_sf1, best_epoch = report.sf1, epoch
                    best_state = model.state_dict()
            record["best_epoch"] = best_epoch
            history.append(record)
            if history_fh is not None:
                history_fh.write(json.dumps(record) + "\n")
                history_fh.flush()
            if on_epoch is not None:
                on_epoch(record)
            log.info("epoch %d L_all %.4f dev SF1 %s", epoch, record["L_all"], record["dev_sf1"])
    finally:
        if history_fh is not None:
            history_fh.close()

    model.load_state_dict(best_state)
    if checkpoint_path is not None:
        model.save(checkpoint_path, meta={"train_config": config.to_json(), "best_epoch": best_epoch,
                                          "best_dev_sf1": best_sf1})
    return TrainResult(model, history, best_epoch, best_sf1, best_state)


def alpha_sweep(sentences: Sequence[Sentence], alphas: Sequence[float], config: TrainConfig | None = None,
                model_config: ModelConfig | None = None, dev: Sequence[Sentence] | None = None,
                checkpoint_dir=None) -> list[dict]:
    """Train once per alpha; one row per alpha with the best dev SF1."""
    config = config or TrainConfig()
    rows = []
    for alpha in alphas:
        ckpt = None if checkpoint_dir is None else Path(checkpoint_dir) / f"model-alpha{alpha:g}.npz"
        hist = None if checkpoint_dir is None else Path(checkpoint_dir) / f"history-alpha{alpha:g}.jsonl"
        result = train(sentences, config.replace(alpha=float(alpha)), model_config, dev=dev,
                       history_path=hist, checkpoint_path=ckpt)
        rows.append({"alpha": float(alpha), "best_dev_sf1": result.best_dev_sf1, "best_epoch": result.best_epoch,
                     "final_L_all": result.history[-1]["L_all"] if result.history else None})
    return rows


def format_alpha_table(rows: Sequence[dict]) -> str:
    lines = [f"{'alpha':>8}  {'dev SF1':>8}  {'epoch':>5}"]
    for row in rows:
        sf1 = "-" if row["best_dev_sf1"] is None else f"{row['best_dev_sf1']:.4f}"
        lines.append(f"{row['alpha']:>8g}  {sf1:>8}  {row['best_epoch']:>5}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------

def gradcheck_sentence() -> Sentence:
    return Sentence(
        sent_id="gradcheck",
        tokens=["Mary", "loved", "the", "food"],
        pos_tags=["PROPN", "VERB", "DET", "NOUN"],
        gold=[SentimentTuple(Span(0, 0), Span(1, 1), Span(2, 3), "Positive")],
    )


def gradcheck(model_config: ModelConfig | None = None, alpha: float = 0.25, seed: int = 0,
              epsilon: float = 1e-4, tolerance: float = 1e-3, sentence: Sentence | None = None) -> GradcheckReport:
    """Finite-difference check of the full training objective on a 4-token sentence."""
    sentence = sentence or gradcheck_sentence()
    model_config = model_config or ModelConfig.preset("desk")
    model = TokenGraphModel(model_config, Vocabularies.build([sentence]), seed=seed)
    targets = Targets.from_sentence(sentence)

    def objective():
        l_e, l_w, _ = sentence_losses(model, sentence, targets, alpha, training=False)
        return total_loss(l_e, l_w, alpha)

    return finite_difference_check(objective, model.params, epsilon=epsilon, tolerance=tolerance)
