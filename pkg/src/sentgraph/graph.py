"""Multi-view token graph: rotary attention scoring and multi-hop refinement."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor, parameter, rope_angles, xavier_uniform

VIEWS = ("o", "s", "r", "c")
SUPERVISED_VIEWS = ("s", "r", "c")  # aligned with WholeLabel span, rel, cls


def rope_rotate(vector, offset: int, base: float = 10000.0) -> np.ndarray:
    """Rotate pairs (x[2k], x[2k+1]) of a single vector by ``offset * theta_k``."""
    vector = np.asarray(vector, dtype=np.float64)
    (angles,) = rope_angles([offset], vector.shape[-1], base)
    cos, sin = np.cos(angles), np.sin(angles)
    out = np.empty_like(vector)
    out[0::2] = vector[0::2] * cos - vector[1::2] * sin
    out[1::2] = vector[0::2] * sin + vector[1::2] * cos
    return out


def positions(n: int, offset: int = 0) -> np.ndarray:
    return np.arange(n) + offset


def rotary_scores(q: Tensor, k: Tensor, offset: int = 0, base: float = 10000.0) -> Tensor:
    """``S[..., i, j] = q_i^T R_{j-i} k_j`` for q, k of shape [..., n, d]."""
    pos = positions(q.shape[-2], offset)
    return T.matmul(T.rope(q, pos, base), T.transpose(T.rope(k, pos, base)))


def mlp(x: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    hidden = T.relu(T.affine(x, params[f"{prefix}.W1"], params[f"{prefix}.b1"]))
    return T.affine(hidden, params[f"{prefix}.W2"], params[f"{prefix}.b2"])


def init_mlp(params: dict, prefix: str, rng, d_in: int, d_hidden: int, d_out: int) -> None:
    params[f"{prefix}.W1"] = parameter(xavier_uniform(rng, d_in, d_hidden))
    params[f"{prefix}.b1"] = parameter(np.zeros(d_hidden))
    params[f"{prefix}.W2"] = parameter(xavier_uniform(rng, d_hidden, d_out))
    params[f"{prefix}.b2"] = parameter(np.zeros(d_out))


def init_bilinear_threshold(params: dict, prefix: str, rng, d_in: int, d_out: int) -> None:
    params[f"{prefix}.Wq"] = parameter(xavier_uniform(rng, d_in, d_out))
    params[f"{prefix}.bq"] = parameter(np.zeros(d_out))
    params[f"{prefix}.Wk"] = parameter(xavier_uniform(rng, d_in, d_out))
    params[f"{prefix}.bk"] = parameter(np.zeros(d_out))


def bilinear_threshold(H: Tensor, params: dict, prefix: str, offset: int = 0, base: float = 10000.0) -> Tensor:
    q = T.affine(H, params[f"{prefix}.Wq"], params[f"{prefix}.bq"])
    k = T.affine(H, params[f"{prefix}.Wk"], params[f"{prefix}.bk"])
    return rotary_scores(q, k, offset, base)


class GraphLayer:
    def __init__(self, cfg, d_h: int, rng: np.random.Generator):
        if cfg.graph_qk_dim % 2:
            raise ValueError("graph query/key size must be even for rotary scoring")
        self.cfg = cfg
        self.params: dict[str, Tensor] = {}
        for v in VIEWS:
            init_mlp(self.params, f"graph.{v}.q", rng, d_h, cfg.graph_mlp_hidden, cfg.graph_qk_dim)
            init_mlp(self.params, f"graph.{v}.k", rng, d_h, cfg.graph_mlp_hidden, cfg.graph_qk_dim)
        self.params["graph.hop.W0"] = parameter(xavier_uniform(rng, d_h, cfg.hop_dim))
        self.params["graph.hop.b0"] = parameter(np.zeros(cfg.hop_dim))
        for layer in range(cfg.hop_layers):
            for v in VIEWS:
                self.params[f"graph.hop.{layer}.{v}"] = parameter(xavier_uniform(rng, cfg.hop_dim, cfg.hop_dim))
        init_bilinear_threshold(self.params, "graph.th", rng, d_h, cfg.graph_qk_dim)

    def attention_scores(self, H: Tensor, view: str, offset: int = 0) -> Tensor:
        q = mlp(H, self.params, f"graph.{view}.q")
        k = mlp(H, self.params, f"graph.{view}.k")
        return rotary_scores(q, k, offset, self.cfg.rope_base)

    def all_scores(self, H: Tensor, offset: int = 0) -> dict[str, Tensor]:
        return {v: self.attention_scores(H, v, offset) for v in VIEWS}

    def multi_hop(self, H: Tensor, scores: dict[str, Tensor], layers: int | None = None) -> Tensor:
        """Refine token states by averaging attention-weighted messages over all views."""
        layers = self.cfg.hop_layers if layers is None else layers
        attn = {v: T.softmax(scores[v], axis=1) for v in VIEWS}
        u = T.affine(H, self.params["graph.hop.W0"], self.params["graph.hop.b0"])
        for layer in range(layers):
            total = None
            for v in VIEWS:
                msg = T.matmul(attn[v], T.matmul(u, self.params[f"graph.hop.{layer}.{v}"]))
                total = msg if total is None else total + msg
            u = T.relu(total * (1.0 / len(VIEWS)))
        return u

    def hidden_thresholds(self, H: Tensor, offset: int = 0) -> Tensor:
        return bilinear_threshold(H, self.params, "graph.th", offset, self.cfg.rope_base)
