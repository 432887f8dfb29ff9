"""Finest-level graph machinery: face geometry, face caps, and kNN graphs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import SparseMatrix
from .structure import SurfaceMesh


class TooFewPoints(ValueError):
    """kNN construction needs at least two points."""


@dataclass
class FaceGeometry:
    centroid: np.ndarray            # (3,)
    area: float
    sorted_edge_lengths: np.ndarray  # (3,) ascending


@dataclass
class SparseAdjacency:
    """Symmetric weighted adjacency in canonical (sorted, deduplicated) COO form."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_entries(cls, n: int, rows, cols, weights,
                     sum_duplicates: bool = True) -> "SparseAdjacency":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if rows.size == 0:
            return cls(n, rows, cols, weights)
        key = rows * n + cols
        order = np.argsort(key, kind="stable")
        key, rows, cols, weights = key[order], rows[order], cols[order], weights[order]
        uniq, start = np.unique(key, return_index=True)
        if uniq.size != key.size:
            if sum_duplicates:
                weights = np.add.reduceat(weights, start)
            else:
                weights = weights[start]
            rows, cols = rows[start], cols[start]
        return cls(n, rows, cols, weights)

    @property
    def nnz(self) -> int:
        return int(self.weights.size)

    def entry_set(self) -> set[tuple[int, int, float]]:
        return {(int(r), int(c), float(w))
                for r, c, w in zip(self.rows, self.cols, self.weights)}

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n)
        np.add.at(d, self.rows, self.weights)
        return d

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n, self.n))
        dense[self.rows, self.cols] = self.weights
        return dense

    def to_sparse_matrix(self) -> SparseMatrix:
        return SparseMatrix(self.rows, self.cols, self.weights, (self.n, self.n))

    def validate(self) -> None:
        if self.rows.size and (self.rows.min() < 0 or self.rows.max() >= self.n
                               or self.cols.min() < 0 or self.cols.max() >= self.n):
            raise ValueError("adjacency index out of range")
        if np.any(self.weights < 0):
            raise ValueError("negative adjacency weight")
        forward = {(int(r), int(c)): float(w)
                   for r, c, w in zip(self.rows, self.cols, self.weights)}
        for (r, c), w in forward.items():
            if forward.get((c, r)) != w:
                raise ValueError(f"asymmetric entry ({r}, {c})")


def face_geometry(mesh: SurfaceMesh) -> list[FaceGeometry]:
    """Centroid, area, and ascending edge lengths for every face."""
    tri = mesh.vertices[mesh.faces]          # (m, 3, 3)
    centroids = tri.mean(axis=1)
    e01 = np.linalg.norm(tri[:, 1] - tri[:, 0], axis=1)
    e12 = np.linalg.norm(tri[:, 2] - tri[:, 1], axis=1)
    e20 = np.linalg.norm(tri[:, 0] - tri[:, 2], axis=1)
    edges = np.sort(np.stack([e01, e12, e20], axis=1), axis=1)
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0],
                                          tri[:, 2] - tri[:, 0]), axis=1)
    return [FaceGeometry(centroid=c, area=float(a), sorted_edge_lengths=e)
            for c, a, e in zip(centroids, areas, edges)]


def cap_faces(mesh: SurfaceMesh, cap: int = 1024, seed: int = 0) -> SurfaceMesh:
    """Seeded uniform face subsample down to at most `cap` faces.

    Meshes already under the cap pass through unchanged; otherwise exactly
    `cap` faces are kept and unreferenced vertices pruned.
    """
    if cap < 4:
        raise ValueError("cap must be at least 4")
    m = len(mesh.faces)
    if m <= cap:
        return mesh
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(m, size=cap, replace=False))
    faces = mesh.faces[keep]
    used = np.unique(faces)
    remap = np.full(len(mesh.vertices), -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    return SurfaceMesh(vertices=mesh.vertices[used], faces=remap[faces])


def knn_graph(points: np.ndarray, k: int = 8) -> SparseAdjacency:
    """Union-symmetrized exact k-nearest-neighbor graph with unit weights.

    Each node lists its min(k, n-1) nearest neighbors by Euclidean distance,
    ties broken toward the lower index; an undirected edge exists when either
    endpoint lists the other.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n < 2:
        raise TooFewPoints(f"need at least 2 points, got {n}")
    if k < 1:
        raise ValueError("k must be positive")
    kk = min(k, n - 1)
    diff = points[:, None, :] - points[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    neighbors = order[:, :kk]
    src = np.repeat(np.arange(n), kk)
    dst = neighbors.reshape(-1)
    rows = np.concatenate([src, dst])
    cols = np.concatenate([dst, src])
    return SparseAdjacency.from_entries(n, rows, cols, np.ones(rows.size),
                                        sum_duplicates=False)
