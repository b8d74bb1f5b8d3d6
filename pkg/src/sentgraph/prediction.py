"""Adaptive multi-label classifier over essential labels."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .graph import bilinear_threshold, init_bilinear_threshold, init_mlp, mlp, rotary_scores
from .labeling import ESSENTIAL_LABELS, LabelCellSet
from .tensor import Tensor


def fuse(H: Tensor, U: Tensor) -> Tensor:
    """Shortcut connection ``c_i = h_i (+) u_i``."""
    if H.shape[0] != U.shape[0]:
        raise T.ShapeError(f"fuse: row counts differ, {H.shape} vs {U.shape}")
    return T.concat([H, U], axis=1)


class PredictionLayer:
    def __init__(self, cfg, d_h: int, d_c: int, rng: np.random.Generator):
        if cfg.pred_qk_dim % 2:
            raise ValueError("prediction query/key size must be even for rotary scoring")
        self.cfg = cfg
        self.n_labels = len(ESSENTIAL_LABELS)
        width = self.n_labels * cfg.pred_qk_dim
        self.params: dict[str, Tensor] = {}
        init_mlp(self.params, "pred.q", rng, d_c, cfg.pred_mlp_hidden, width)
        init_mlp(self.params, "pred.k", rng, d_c, cfg.pred_mlp_hidden, width)
        init_bilinear_threshold(self.params, "pred.th", rng, d_h, cfg.pred_qk_dim)

    def _heads(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        return T.transpose(T.reshape(x, (n, self.n_labels, self.cfg.pred_qk_dim)), (1, 0, 2))

    def score_essential(self, C: Tensor, offset: int = 0) -> Tensor:
        """[9, n + 1, n + 1] rotary score matrices, one per essential label."""
        q = self._heads(mlp(C, self.params, "pred.q"))
        k = self._heads(mlp(C, self.params, "pred.k"))
        return rotary_scores(q, k, offset, self.cfg.rope_base)

    def adaptive_threshold(self, H: Tensor, offset: int = 0) -> Tensor:
        """Per-cell thresholds computed from the encoder output."""
        return bilinear_threshold(H, self.params, "pred.th", offset, self.cfg.rope_base)


def predict_labels(scores, thresholds, shifted: bool = True) -> LabelCellSet:
    """Labels whose score strictly exceeds the cell threshold, for cells ``j >= i``.

    With ``shifted`` the inputs include the sentinel row/column, which is
    dropped; the result is in token coordinates.
    """
    S = np.asarray(scores.data if isinstance(scores, Tensor) else scores)
    TH = np.asarray(thresholds.data if isinstance(thresholds, Tensor) else thresholds)
    if shifted:
        S, TH = S[:, 1:, 1:], TH[1:, 1:]
    n = TH.shape[0]
    above = (S > TH[None]) & np.triu(np.ones((n, n), dtype=bool))[None]
    out = LabelCellSet(n)
    for r, i, j in zip(*np.nonzero(above)):
        out.add(int(i), int(j), ESSENTIAL_LABELS[r])
    return out
