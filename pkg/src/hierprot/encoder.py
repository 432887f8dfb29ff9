"""Invariant scalar encoders over geometric graphs, plus the denoising decoder.

The encoder passes messages in the EGNN style but consumes coordinates only
through pairwise squared distances (with the plain distance as the edge
attribute), so its node embeddings are exactly invariant to rigid motion.
Coordinate update branches are deliberately absent: only scalars flow.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import SparseMatrix, Tensor
from .surface import SparseAdjacency

ENCODER_HIDDEN = 128
ENCODER_DEPTH = 3
ENCODER_OUT = 128


def _linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = x @ w
    return out if b is None else out + b


class InvariantEncoder:
    """Stack of scalar-message layers: m_ij = f(h_i, h_j, |x_i-x_j|^2, a_ij)."""

    def __init__(self, input_dim: int, hidden: int = ENCODER_HIDDEN,
                 depth: int = ENCODER_DEPTH, out_dim: int = ENCODER_OUT,
                 seed: int = 0):
        self.input_dim = int(input_dim)
        self.hidden = int(hidden)
        self.depth = int(depth)
        self.out_dim = int(out_dim)
        rng = np.random.default_rng(seed)
        p: dict[str, Tensor] = {}
        p["embed_w"] = ad.glorot(rng, input_dim, hidden)
        for layer in range(depth):
            width_out = out_dim if layer == depth - 1 else hidden
            p[f"l{layer}/edge_w1"] = ad.glorot(rng, 2 * hidden + 2, hidden)
            p[f"l{layer}/edge_b1"] = ad.zeros(hidden)
            p[f"l{layer}/edge_w2"] = ad.glorot(rng, hidden, hidden)
            p[f"l{layer}/edge_b2"] = ad.zeros(hidden)
            p[f"l{layer}/node_w1"] = ad.glorot(rng, 2 * hidden, hidden)
            p[f"l{layer}/node_b1"] = ad.zeros(hidden)
            p[f"l{layer}/node_w2"] = ad.glorot(rng, hidden, width_out)
            p[f"l{layer}/node_b2"] = ad.zeros(width_out)
        self.params = p

    def forward(self, coords: np.ndarray, node_inputs: np.ndarray,
                graph: SparseAdjacency) -> Tensor:
        """Per-node invariant embeddings of shape (n, out_dim)."""
        coords = np.asarray(coords, dtype=float)
        node_inputs = np.asarray(node_inputs, dtype=float)
        if node_inputs.shape != (coords.shape[0], self.input_dim):
            raise ad.ShapeMismatch(
                f"node inputs {node_inputs.shape} vs (n, {self.input_dim})")
        rows, cols = graph.rows, graph.cols
        diff = coords[rows] - coords[cols]
        d2 = (diff**2).sum(axis=1, keepdims=True)
        attr = np.sqrt(d2)
        edge_scalar = Tensor(np.concatenate([d2, attr], axis=1))
        # Aggregation matrix summing edge messages onto their receiving node.
        agg = SparseMatrix(rows, np.arange(rows.size), np.ones(rows.size),
                           (graph.n, rows.size))

        h = Tensor(node_inputs) @ self.params["embed_w"]
        for layer in range(self.depth):
            p = self.params
            h_i = ad.row_select(h, rows)
            h_j = ad.row_select(h, cols)
            edge_in = ad.concat([h_i, h_j, edge_scalar], axis=1)
            m = ad.silu(_linear(edge_in, p[f"l{layer}/edge_w1"], p[f"l{layer}/edge_b1"]))
            m = ad.silu(_linear(m, p[f"l{layer}/edge_w2"], p[f"l{layer}/edge_b2"]))
            m_agg = ad.sparse_matmul(agg, m)
            node_in = ad.concat([h, m_agg], axis=1)
            h = ad.silu(_linear(node_in, p[f"l{layer}/node_w1"], p[f"l{layer}/node_b1"]))
            h = _linear(h, p[f"l{layer}/node_w2"], p[f"l{layer}/node_b2"])
        return h

    def encode(self, coords, node_inputs, graph) -> np.ndarray:
        return self.forward(coords, node_inputs, graph).values

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.values.copy() for k, v in self.params.items()}

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            if arrays[k].shape != p.values.shape:
                raise ad.ShapeMismatch(f"{k}: {arrays[k].shape} vs {p.values.shape}")
            p.values = arrays[k].astype(np.float64).copy()

    def meta(self) -> dict:
        return {"input_dim": self.input_dim, "hidden": self.hidden,
                "depth": self.depth, "out_dim": self.out_dim}

    @classmethod
    def from_meta(cls, meta: dict) -> "InvariantEncoder":
        return cls(input_dim=meta["input_dim"], hidden=meta["hidden"],
                   depth=meta["depth"], out_dim=meta["out_dim"])


class DecoderHead:
    """Three-layer SiLU perceptron from latents to 3-vector noise residuals."""

    def __init__(self, in_dim: int = ENCODER_OUT, hidden: int = 128, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.params = {
            "w1": ad.glorot(rng, in_dim, hidden),
            "b1": ad.zeros(hidden),
            "w2": ad.glorot(rng, hidden, hidden),
            "b2": ad.zeros(hidden),
            "w3": ad.glorot(rng, hidden, 3),
            "b3": ad.zeros(3),
        }

    def forward(self, z: Tensor) -> Tensor:
        p = self.params
        out = ad.silu(_linear(z, p["w1"], p["b1"]))
        out = ad.silu(_linear(out, p["w2"], p["b2"]))
        return _linear(out, p["w3"], p["b3"])
