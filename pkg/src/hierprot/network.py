"""Bidirectional multiscale message passing over the five-level hierarchy.

Each of N layers runs, in order: a pre-norm graph convolution with separate
self/neighbor weights and a GELU feedforward block at every level, then
bottom-up aggregation (transpose-partition sum, projection, gated fusion)
ascending levels 1..4, then top-down refinement (partition broadcast,
projection, gated fusion) descending 4..1, then an inter-layer residual.
The network never touches coordinates, so predictions inherit the rigid-
motion invariance of the input features.

Gated fusion of state z with context c:
    g = sigmoid([z || c] W_g + b_g),  u = c W_u,  z <- LayerNorm(z + g * u)
with dropout applied to u during training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import SparseMatrix, Tensor
from .features import FEATURE_DIMS
from .hierarchy import LEVEL_NAMES, Hierarchy

N_LEVELS = 5
LEVEL_INDEX = {name: i for i, name in enumerate(LEVEL_NAMES)}


class EmptyLevel(ValueError):
    """A readout or pooling step hit a level with zero nodes."""


@dataclass
class NetConfig:
    hidden_dim: int = 128
    n_layers: int = 3
    dropout: float = 0.3
    head_hidden: int = 128
    in_dims: tuple[int, ...] = FEATURE_DIMS
    readout: str = "fixed"                 # "fixed" | "cross_attention"
    readout_level: int = LEVEL_INDEX["residue"]
    task_kind: str = "multiclass"          # "multiclass" | "multilabel" | "node_binary"
    out_dim: int = 2
    ablate: tuple[int, ...] = ()
    seed: int = 0

    def active_levels(self) -> tuple[int, ...]:
        return tuple(l for l in range(N_LEVELS) if l not in self.ablate)

    def validate(self) -> None:
        if self.readout not in ("fixed", "cross_attention"):
            raise ValueError(f"unknown readout {self.readout!r}")
        if self.task_kind not in ("multiclass", "multilabel", "node_binary"):
            raise ValueError(f"unknown task_kind {self.task_kind!r}")
        if self.readout == "cross_attention" and self.ablate:
            raise ValueError("cross-attention readout needs all five levels")
        if self.readout == "cross_attention" and self.task_kind == "node_binary":
            raise ValueError("cross-attention readout is graph-level only")
        if self.readout_level in self.ablate:
            raise ValueError(f"readout level {self.readout_level} is ablated")


class _DropoutKeys:
    """Counter-based dropout randomness keyed by (seed, step, site)."""

    def __init__(self, seed: int, step: int):
        self.seed = seed
        self.step = step
        self.site = 0

    def next(self) -> np.random.Generator:
        self.site += 1
        return np.random.default_rng((self.seed, self.step, self.site))


class MultiscaleNet:
    def __init__(self, config: NetConfig):
        config.validate()
        self.config = config
        d = config.hidden_dim
        rng = np.random.default_rng(config.seed)
        p: dict[str, Tensor] = {}
        for l in config.active_levels():
            p[f"in/{l}/w"] = ad.glorot(rng, config.in_dims[l], d)
            p[f"in/{l}/ln_g"] = ad.ones(d)
            p[f"in/{l}/ln_b"] = ad.zeros(d)
        for n in range(config.n_layers):
            for l in config.active_levels():
                base = f"layer{n}/conv{l}"
                p[f"{base}/ln1_g"] = ad.ones(d)
                p[f"{base}/ln1_b"] = ad.zeros(d)
                p[f"{base}/w_self"] = ad.glorot(rng, d, d)
                p[f"{base}/w_neigh"] = ad.glorot(rng, d, d)
                p[f"{base}/ln2_g"] = ad.ones(d)
                p[f"{base}/ln2_b"] = ad.zeros(d)
                p[f"{base}/ffn_w1"] = ad.glorot(rng, d, 4 * d)
                p[f"{base}/ffn_b1"] = ad.zeros(4 * d)
                p[f"{base}/ffn_w2"] = ad.glorot(rng, 4 * d, d)
                p[f"{base}/ffn_b2"] = ad.zeros(d)
            for direction in ("up", "down"):
                for l in range(1, N_LEVELS):
                    if l in config.ablate or (l - 1) in config.ablate:
                        continue
                    base = f"layer{n}/{direction}{l}"
                    p[f"{base}/w"] = ad.glorot(rng, d, d)
                    p[f"{base}/w_g"] = ad.glorot(rng, 2 * d, d)
                    p[f"{base}/b_g"] = ad.zeros(d)
                    p[f"{base}/w_u"] = ad.glorot(rng, d, d)
                    p[f"{base}/ln_g"] = ad.ones(d)
                    p[f"{base}/ln_b"] = ad.zeros(d)
        hh = config.head_hidden
        p["head/w1"] = ad.glorot(rng, d, hh)
        p["head/b1"] = ad.zeros(hh)
        p["head/w2"] = ad.glorot(rng, hh, hh)
        p["head/b2"] = ad.zeros(hh)
        p["head/w3"] = ad.glorot(rng, hh, config.out_dim)
        p["head/b3"] = ad.zeros(config.out_dim)
        if config.readout == "cross_attention":
            p["attn/q"] = ad.glorot(rng, 1, d)
            p["attn/w_k"] = ad.glorot(rng, d, d)
            p["attn/w_v"] = ad.glorot(rng, d, d)
        self.params = p

    # -- persistence ----------------------------------------------------
    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.values.copy() for k, v in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            if arrays[k].shape != p.values.shape:
                raise ad.ShapeMismatch(f"{k}: {arrays[k].shape} vs {p.values.shape}")
            p.values = arrays[k].astype(np.float64).copy()

    # -- building blocks -------------------------------------------------
    def _ln(self, x: Tensor, prefix: str) -> Tensor:
        return ad.layer_norm(x, self.params[f"{prefix}_g"], self.params[f"{prefix}_b"])

    def input_project(self, features: list) -> dict[int, Tensor]:
        states = {}
        for l in self.config.active_levels():
            z = features[l] if isinstance(features[l], Tensor) else Tensor(features[l])
            if z.values.shape[1] != self.config.in_dims[l]:
                raise ad.ShapeMismatch(
                    f"level {l}: features {z.values.shape} vs d_in {self.config.in_dims[l]}")
            states[l] = ad.relu(self._ln(z @ self.params[f"in/{l}/w"], f"in/{l}/ln"))
        return states

    def _conv_block(self, h: Tensor, a_norm: SparseMatrix, base: str,
                    train: bool, keys: _DropoutKeys) -> Tensor:
        cfg = self.config
        ln1 = self._ln(h, f"{base}/ln1")
        conv = ln1 @ self.params[f"{base}/w_self"] + \
            ad.sparse_matmul(a_norm, ln1) @ self.params[f"{base}/w_neigh"]
        h = h + ad.dropout(conv, cfg.dropout, train, keys.next())
        ln2 = self._ln(h, f"{base}/ln2")
        ffn = ad.gelu(ln2 @ self.params[f"{base}/ffn_w1"] + self.params[f"{base}/ffn_b1"])
        ffn = ffn @ self.params[f"{base}/ffn_w2"] + self.params[f"{base}/ffn_b2"]
        return h + ad.dropout(ffn, cfg.dropout, train, keys.next())

    def _fuse(self, z: Tensor, c: Tensor, base: str, train: bool,
              keys: _DropoutKeys) -> Tensor:
        gate = ad.sigmoid(ad.concat([z, c], axis=-1) @ self.params[f"{base}/w_g"]
                          + self.params[f"{base}/b_g"])
        u = c @ self.params[f"{base}/w_u"]
        u = ad.dropout(u, self.config.dropout, train, keys.next())
        return self._ln(z + gate * u, f"{base}/ln")

    # -- full pass --------------------------------------------------------
    def forward(self, hierarchy: Hierarchy, features: list[np.ndarray],
                train: bool = False, step: int = 0) -> dict[int, Tensor]:
        cfg = self.config
        keys = _DropoutKeys(cfg.seed, step)
        active = cfg.active_levels()
        norm = {l: hierarchy.graphs[l].normalized.to_sparse_matrix() for l in active}

        states = self.input_project(features)
        for n in range(cfg.n_layers):
            layer_in = dict(states)
            for l in active:
                states[l] = self._conv_block(states[l], norm[l],
                                             f"layer{n}/conv{l}", train, keys)
            for l in range(1, N_LEVELS):
                if l not in active or (l - 1) not in active:
                    continue
                pi = hierarchy.partitions[l - 1]
                up = SparseMatrix(pi.assign, np.arange(pi.fine_count),
                                  np.ones(pi.fine_count),
                                  (pi.coarse_count, pi.fine_count))
                ctx = ad.sparse_matmul(up, states[l - 1]) @ self.params[f"layer{n}/up{l}/w"]
                states[l] = self._fuse(states[l], ctx, f"layer{n}/up{l}", train, keys)
            for l in range(N_LEVELS - 1, 0, -1):
                if l not in active or (l - 1) not in active:
                    continue
                pi = hierarchy.partitions[l - 1]
                ctx = ad.row_select(states[l], pi.assign) @ self.params[f"layer{n}/down{l}/w"]
                states[l - 1] = self._fuse(states[l - 1], ctx,
                                           f"layer{n}/down{l}", train, keys)
            for l in active:
                states[l] = states[l] + layer_in[l]
        return states

    def _head(self, x: Tensor, train: bool, keys: _DropoutKeys) -> Tensor:
        p = self.params
        h = ad.relu(x @ p["head/w1"] + p["head/b1"])
        h = ad.dropout(h, self.config.dropout, train, keys.next())
        h = ad.relu(h @ p["head/w2"] + p["head/b2"])
        h = ad.dropout(h, self.config.dropout, train, keys.next())
        return h @ p["head/w3"] + p["head/b3"]

    def readout_fixed(self, states: dict[int, Tensor], train: bool,
                      keys: _DropoutKeys) -> Tensor:
        level = self.config.readout_level
        if level not in states:
            raise EmptyLevel(f"level {level} absent from states")
        h = states[level]
        if h.values.shape[0] == 0:
            raise EmptyLevel(f"level {level} has no nodes")
        if self.config.task_kind == "node_binary":
            return self._head(h, train, keys)
        pooled = ad.tmean(h, axis=0, keepdims=True)
        return self._head(pooled, train, keys)

    def readout_cross_attention(self, states: dict[int, Tensor], train: bool,
                                keys: _DropoutKeys) -> tuple[Tensor, np.ndarray]:
        for l in range(N_LEVELS):
            if l not in states or states[l].values.shape[0] == 0:
                raise EmptyLevel(f"level {l} is empty")
        pooled = ad.concat([ad.tmean(states[l], axis=0, keepdims=True)
                            for l in range(N_LEVELS)], axis=0)      # (5, d)
        p = self.params
        k = pooled @ p["attn/w_k"]
        v = pooled @ p["attn/w_v"]
        scores = (k @ ad.transpose(p["attn/q"])) * Tensor(
            1.0 / np.sqrt(self.config.hidden_dim))                  # (5, 1)
        weights = ad.softmax(scores, axis=0)
        summary = ad.transpose(weights) @ v                         # (1, d)
        logits = self._head(summary, train, keys)
        return logits, weights.values.reshape(N_LEVELS).copy()

    def predict(self, hierarchy: Hierarchy, features: list[np.ndarray],
                train: bool = False, step: int = 0) -> tuple[Tensor, np.ndarray | None]:
        """Task logits plus cross-attention weights when that readout is active."""
        states = self.forward(hierarchy, features, train=train, step=step)
        keys = _DropoutKeys(self.config.seed, step + 1_000_003)
        if self.config.readout == "cross_attention":
            return self.readout_cross_attention(states, train, keys)
        return self.readout_fixed(states, train, keys), None


def parameter_census(config: NetConfig) -> int:
    """Expected parameter count from the architecture shapes."""
    d = config.hidden_dim
    active = config.active_levels()
    total = sum(config.in_dims[l] * d + 2 * d for l in active)
    conv = 2 * d + d * d + d * d + 2 * d + d * 4 * d + 4 * d + 4 * d * d + d
    transitions = sum(1 for l in range(1, N_LEVELS)
                      if l in active and (l - 1) in active)
    fuse = d * d + 2 * d * d + d + d * d + 2 * d
    total += config.n_layers * (len(active) * conv + 2 * transitions * fuse)
    hh = config.head_hidden
    total += d * hh + hh + hh * hh + hh + hh * config.out_dim + config.out_dim
    if config.readout == "cross_attention":
        total += d + 2 * d * d
    return total
