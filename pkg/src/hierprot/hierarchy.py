"""Five-level nested graph construction over a protein.

Levels run fine to coarse: surface faces, heavy atoms, residues, secondary
structure segments, and a single whole-protein node.  Adjacent levels are
linked by hard assignment arrays; each coarse adjacency is the sparse triple
product of the finer one with its partition, so coarse edge weights count
fine-scale connections.  Construction is deterministic in the seed and uses
only pairwise distances, making every product invariant to rigid motion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import ShapeMismatch, SparseMatrix
from .sse import SseSegment, assign_sse, segment_sse, validate_segments
from .structure import ProteinStructure, SurfaceMesh
from .surface import FaceGeometry, SparseAdjacency, cap_faces, face_geometry, knn_graph

LEVEL_NAMES = ("surface", "atom", "residue", "sse", "protein")
FACE_CAP = 1024
ATOM_CAP = 2048
KNN_K = 8

FORMAT_VERSION = 1


class NoAtoms(ValueError):
    """Surface-to-atom assignment needs at least one heavy atom."""


class NegativeWeight(ValueError):
    """Adjacency weights must be nonnegative before normalization."""


@dataclass
class PartitionMatrix:
    """Hard assignment of each fine node to exactly one coarse node."""

    fine_count: int
    coarse_count: int
    assign: np.ndarray  # (fine_count,) int64

    def __post_init__(self):
        self.assign = np.asarray(self.assign, dtype=np.int64)
        if self.assign.shape != (self.fine_count,):
            raise ShapeMismatch(
                f"assign shape {self.assign.shape} vs fine_count {self.fine_count}")
        if self.fine_count and (self.assign.min() < 0
                                or self.assign.max() >= self.coarse_count):
            raise ValueError("assignment index out of coarse range")

    def to_sparse_matrix(self) -> SparseMatrix:
        """(fine, coarse) binary matrix with one unit entry per fine node."""
        return SparseMatrix(np.arange(self.fine_count), self.assign,
                            np.ones(self.fine_count),
                            (self.fine_count, self.coarse_count))

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.fine_count, self.coarse_count))
        dense[np.arange(self.fine_count), self.assign] = 1.0
        return dense

    def column_sums(self) -> np.ndarray:
        sums = np.zeros(self.coarse_count, dtype=np.int64)
        np.add.at(sums, self.assign, 1)
        return sums


@dataclass
class LevelGraph:
    level: int
    adjacency: SparseAdjacency
    normalized: SparseAdjacency


@dataclass
class Hierarchy:
    graphs: list[LevelGraph]
    partitions: list[PartitionMatrix]
    node_counts: tuple[int, ...]
    # Construction context needed downstream: the capped mesh actually used
    # at level 0, the retained atom subset, and the SSE segmentation.  Only
    # synthetic toy hierarchies (tests, demos) leave these unset.
    mesh: SurfaceMesh | None = None
    atom_indices: np.ndarray | None = None
    segments: list[SseSegment] | None = None
    protein_id: str = ""
    features: list[np.ndarray] | None = None

    def validate(self) -> None:
        if len(self.graphs) != 5 or len(self.partitions) != 4:
            raise ValueError("hierarchy needs 5 graphs and 4 partitions")
        for level, g in enumerate(self.graphs):
            if g.adjacency.n != self.node_counts[level]:
                raise ValueError(f"level {level}: {g.adjacency.n} nodes vs "
                                 f"recorded {self.node_counts[level]}")
            g.adjacency.validate()
            g.normalized.validate()
        for ell, pi in enumerate(self.partitions, start=1):
            if pi.fine_count != self.node_counts[ell - 1]:
                raise ValueError(f"partition {ell}: fine_count mismatch")
            if pi.coarse_count != self.node_counts[ell]:
                raise ValueError(f"partition {ell}: coarse_count mismatch")
        if self.node_counts[4] != 1:
            raise ValueError("protein level must have exactly one node")


def assign_face_to_atom(mesh_geometry: list[FaceGeometry],
                        structure: ProteinStructure,
                        atom_indices: np.ndarray | None = None) -> PartitionMatrix:
    """Nearest retained heavy atom (by centroid distance, lowest index on ties)."""
    coords = structure.coords()
    if atom_indices is not None:
        coords = coords[atom_indices]
    if coords.shape[0] == 0:
        raise NoAtoms("structure has no heavy atoms")
    centroids = np.array([g.centroid for g in mesh_geometry])
    d2 = ((centroids[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
    return PartitionMatrix(fine_count=len(mesh_geometry),
                           coarse_count=coords.shape[0],
                           assign=np.argmin(d2, axis=1))


def assign_atom_to_residue(structure: ProteinStructure,
                           atom_indices: np.ndarray | None = None) -> PartitionMatrix:
    if atom_indices is None:
        atom_indices = np.arange(len(structure.atoms))
    assign = np.array([structure.atoms[i].residue_index for i in atom_indices])
    return PartitionMatrix(fine_count=len(atom_indices),
                           coarse_count=len(structure.residues),
                           assign=assign)


def assign_residue_to_sse(segments: list[SseSegment],
                          residue_count: int) -> PartitionMatrix:
    validate_segments(segments, residue_count)
    assign = np.zeros(residue_count, dtype=np.int64)
    for k, seg in enumerate(segments):
        assign[seg.start:seg.end + 1] = k
    return PartitionMatrix(fine_count=residue_count, coarse_count=len(segments),
                           assign=assign)


def assign_sse_to_protein(sse_count: int) -> PartitionMatrix:
    if sse_count < 1:
        raise ValueError("need at least one segment")
    return PartitionMatrix(fine_count=sse_count, coarse_count=1,
                           assign=np.zeros(sse_count, dtype=np.int64))


def coarsen(a_fine: SparseAdjacency, pi: PartitionMatrix) -> SparseAdjacency:
    """Sparse triple product: coarse entry (I, J) sums fine weights mapped there.

    Runs in O(nnz) by relabeling COO endpoints through the assignment;
    intra-cluster mass lands on the diagonal and is retained.
    """
    if a_fine.n != pi.fine_count:
        raise ShapeMismatch(f"adjacency n={a_fine.n} vs partition fine={pi.fine_count}")
    return SparseAdjacency.from_entries(pi.coarse_count,
                                        pi.assign[a_fine.rows],
                                        pi.assign[a_fine.cols],
                                        a_fine.weights, sum_duplicates=True)


def sym_normalize(a: SparseAdjacency) -> SparseAdjacency:
    """Rescale entries by inverse square-root degrees; zero-degree rows keep factor 1."""
    if np.any(a.weights < 0):
        raise NegativeWeight("adjacency has negative weights")
    deg = a.degrees()
    factor = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 1.0)
    # Parenthesized so (i, j) and (j, i) round identically and stay symmetric.
    return SparseAdjacency(a.n, a.rows.copy(), a.cols.copy(),
                           a.weights * (factor[a.rows] * factor[a.cols]))


def subsample_atoms(structure: ProteinStructure, cap: int,
                    seed: int) -> np.ndarray:
    """Seeded uniform atom subsample that drops side-chain atoms first."""
    n = len(structure.atoms)
    if n <= cap:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    backbone = np.array([i for i, a in enumerate(structure.atoms) if a.is_backbone])
    side = np.array([i for i, a in enumerate(structure.atoms) if not a.is_backbone])
    if backbone.size >= cap:
        keep = rng.choice(backbone, size=cap, replace=False)
    else:
        extra = rng.choice(side, size=cap - backbone.size, replace=False)
        keep = np.concatenate([backbone, extra])
    return np.sort(keep)


def build_hierarchy(structure: ProteinStructure, mesh: SurfaceMesh, seed: int,
                    face_cap: int = FACE_CAP, atom_cap: int = ATOM_CAP,
                    k: int = KNN_K) -> Hierarchy:
    """Assemble all five level graphs and four partitions for one protein.

    Secondary structure is assigned on the full structure before any atom
    subsampling; the face cap and atom cap are applied with the given seed.
    """
    labels = assign_sse(structure)
    segments = segment_sse(labels)

    capped = cap_faces(mesh, cap=face_cap, seed=seed)
    atom_indices = subsample_atoms(structure, cap=atom_cap, seed=seed)

    geo = face_geometry(capped)
    centroids = np.array([g.centroid for g in geo])
    a0 = knn_graph(centroids, k=k)

    partitions = [
        assign_face_to_atom(geo, structure, atom_indices),
        assign_atom_to_residue(structure, atom_indices),
        assign_residue_to_sse(segments, len(structure.residues)),
        assign_sse_to_protein(len(segments)),
    ]

    adjacencies = [a0]
    for pi in partitions:
        adjacencies.append(coarsen(adjacencies[-1], pi))

    graphs = [LevelGraph(level=ell, adjacency=a, normalized=sym_normalize(a))
              for ell, a in enumerate(adjacencies)]
    hierarchy = Hierarchy(
        graphs=graphs,
        partitions=partitions,
        node_counts=tuple(a.n for a in adjacencies),
        mesh=capped,
        atom_indices=atom_indices,
        segments=segments,
        protein_id=structure.id,
    )
    hierarchy.validate()
    return hierarchy


def _adj_to_obj(a: SparseAdjacency) -> dict:
    return {"n": a.n, "rows": a.rows.tolist(), "cols": a.cols.tolist(),
            "weights": a.weights.tolist()}


def _adj_from_obj(obj: dict) -> SparseAdjacency:
    return SparseAdjacency(int(obj["n"]),
                           np.asarray(obj["rows"], dtype=np.int64),
                           np.asarray(obj["cols"], dtype=np.int64),
                           np.asarray(obj["weights"], dtype=np.float64))


def hierarchy_to_json(h: Hierarchy) -> str:
    """Self-describing text container; floats round-trip exactly via repr."""
    if h.mesh is None or h.atom_indices is None or h.segments is None:
        raise ValueError("cannot serialize a hierarchy without construction context")
    obj = {
        "format_version": FORMAT_VERSION,
        "id": h.protein_id,
        "node_counts": list(h.node_counts),
        "segments": [[s.label, s.start, s.end] for s in h.segments],
        "atom_indices": h.atom_indices.tolist(),
        "mesh": {"vertices": h.mesh.vertices.tolist(),
                 "faces": h.mesh.faces.tolist()},
        "partitions": [{"fine": p.fine_count, "coarse": p.coarse_count,
                        "assign": p.assign.tolist()} for p in h.partitions],
        "levels": [{"level": g.level,
                    "adjacency": _adj_to_obj(g.adjacency),
                    "normalized": _adj_to_obj(g.normalized)} for g in h.graphs],
        "features": None if h.features is None else [f.tolist() for f in h.features],
    }
    return json.dumps(obj, separators=(",", ":"))


def hierarchy_from_json(text: str) -> Hierarchy:
    obj = json.loads(text)
    version = obj.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported hierarchy format_version {version!r}")
    mesh = SurfaceMesh(vertices=np.asarray(obj["mesh"]["vertices"], dtype=np.float64),
                       faces=np.asarray(obj["mesh"]["faces"], dtype=np.int64).reshape(-1, 3))
    h = Hierarchy(
        graphs=[LevelGraph(level=g["level"],
                           adjacency=_adj_from_obj(g["adjacency"]),
                           normalized=_adj_from_obj(g["normalized"]))
                for g in obj["levels"]],
        partitions=[PartitionMatrix(p["fine"], p["coarse"],
                                    np.asarray(p["assign"], dtype=np.int64))
                    for p in obj["partitions"]],
        node_counts=tuple(obj["node_counts"]),
        mesh=mesh,
        atom_indices=np.asarray(obj["atom_indices"], dtype=np.int64),
        segments=[SseSegment(label=s[0], start=int(s[1]), end=int(s[2]))
                  for s in obj["segments"]],
        protein_id=obj.get("id", ""),
        features=None if obj["features"] is None else
                 [np.asarray(f, dtype=np.float64) for f in obj["features"]],
    )
    h.validate()
    return h


def save_hierarchy(h: Hierarchy, path: str | Path) -> None:
    Path(path).write_text(hierarchy_to_json(h))


def load_hierarchy(path: str | Path) -> Hierarchy:
    return hierarchy_from_json(Path(path).read_text())
