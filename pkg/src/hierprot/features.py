"""Per-level node feature matrices.

Fixed widths per level: 130 (surface), 128 (atom), 23 (residue), 4 (segment),
1280 (protein).  All features are functions of pairwise distances, angles,
and labels, so the whole stack is invariant to rigid motion of the inputs.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .encoder import InvariantEncoder
from .hierarchy import Hierarchy
from .sse import SSE_LABELS, SseSegment
from .structure import AA3, ELEMENTS, ProteinStructure
from .surface import FaceGeometry, SparseAdjacency, face_geometry, knn_graph
from .synthetic import bond_angle, dihedral_angle

FEATURE_DIMS = (130, 128, 23, 4, 1280)
SURFACE_ENCODER_INPUT = 4   # face area plus three sorted edge lengths
ATOM_ENCODER_INPUT = 7      # six-way element one-hot plus backbone flag
PROTEIN_EMBED_DIM = 1280


class MissingEmbedding(KeyError):
    """Requested protein id absent from the embedding table."""


class DimensionMismatch(ValueError):
    """An embedding row does not have the expected width."""


def surface_encoder_inputs(mesh_geom: list[FaceGeometry]) -> np.ndarray:
    return np.array([[g.area, *g.sorted_edge_lengths] for g in mesh_geom])


def atom_encoder_inputs(structure: ProteinStructure,
                        atom_indices: np.ndarray | None = None) -> np.ndarray:
    atoms = structure.atoms if atom_indices is None else \
        [structure.atoms[i] for i in atom_indices]
    out = np.zeros((len(atoms), ATOM_ENCODER_INPUT))
    for row, a in enumerate(atoms):
        out[row, ELEMENTS.index(a.element)] = 1.0
        out[row, 6] = float(a.is_backbone)
    return out


def surface_features(mesh_geom: list[FaceGeometry], structure: ProteinStructure,
                     encoder: InvariantEncoder) -> np.ndarray:
    """(faces, 130): [area, distance to protein centroid, 128 encoder dims]."""
    centroids = np.array([g.centroid for g in mesh_geom])
    areas = np.array([g.area for g in mesh_geom])
    protein_centroid = structure.coords().mean(axis=0)
    dist = np.linalg.norm(centroids - protein_centroid, axis=1)
    if len(mesh_geom) >= 2:
        graph = knn_graph(centroids, k=8)
    else:  # a single face has no neighbors; run the encoder edge-free
        graph = SparseAdjacency(1, np.array([], dtype=np.int64),
                                np.array([], dtype=np.int64), np.array([]))
    embedding = encoder.encode(centroids, surface_encoder_inputs(mesh_geom), graph)
    return np.concatenate([areas[:, None], dist[:, None], embedding], axis=1)


def atom_features(structure: ProteinStructure, encoder: InvariantEncoder,
                  atom_indices: np.ndarray | None = None) -> np.ndarray:
    """(atoms, 128): invariant encoder embeddings over the atom kNN graph."""
    coords = structure.coords()
    if atom_indices is not None:
        coords = coords[atom_indices]
    graph = knn_graph(coords, k=8)
    return encoder.encode(coords, atom_encoder_inputs(structure, atom_indices), graph)


def residue_features(structure: ProteinStructure) -> np.ndarray:
    """(residues, 23): amino-acid one-hot, bond angle, CA curvature, phi dihedral.

    Angles fall back to zero at chain ends or where backbone atoms are missing.
    """
    n_res = len(structure.residues)
    out = np.zeros((n_res, 23))

    def coord(idx):
        return None if idx is None else structure.atoms[idx].coords

    for r in structure.residues:
        if r.aa in AA3:
            out[r.index, AA3.index(r.aa)] = 1.0
        n, ca, c = coord(r.n_idx), coord(r.ca_idx), coord(r.c_idx)
        if n is not None and ca is not None and c is not None:
            out[r.index, 20] = bond_angle(n, ca, c)
        if 0 < r.index < n_res - 1:
            ca_prev = coord(structure.residues[r.index - 1].ca_idx)
            ca_next = coord(structure.residues[r.index + 1].ca_idx)
            if ca_prev is not None and ca is not None and ca_next is not None:
                out[r.index, 21] = np.pi - bond_angle(ca_prev, ca, ca_next)
        if r.index > 0:
            c_prev = coord(structure.residues[r.index - 1].c_idx)
            if None not in (r.n_idx, r.ca_idx, r.c_idx) and c_prev is not None:
                out[r.index, 22] = dihedral_angle(c_prev, n, ca, c)
    return out


def sse_features(segments: list[SseSegment], residue_count: int) -> np.ndarray:
    """(segments, 4): label one-hot and length normalized by the residue count."""
    out = np.zeros((len(segments), 4))
    for k, seg in enumerate(segments):
        out[k, SSE_LABELS.index(seg.label)] = 1.0
        out[k, 3] = seg.length / residue_count
    return out


def stub_embedding(sequence: str) -> np.ndarray:
    """Deterministic pseudo-embedding of a sequence, in [-1, 1].

    Values come from a SHA-256 chain: block k hashes ``"<sequence>|<k>"``; each
    digest yields four big-endian uint64 words mapped to 2*x/2^64 - 1.  The
    result depends only on the sequence string, never on coordinates.
    """
    words_needed = PROTEIN_EMBED_DIM
    values = np.empty(words_needed)
    i = 0
    block = 0
    while i < words_needed:
        digest = hashlib.sha256(f"{sequence}|{block}".encode()).digest()
        words = np.frombuffer(digest, dtype=">u8")
        take = min(4, words_needed - i)
        values[i:i + take] = words[:take].astype(np.float64) / 2.0**64 * 2.0 - 1.0
        i += take
        block += 1
    return values


class StubEmbeddings:
    """Sequence-hash pseudo-embeddings; identical sequences map identically."""

    def get(self, structure: ProteinStructure) -> np.ndarray:
        return stub_embedding(structure.sequence())


class FileEmbeddings:
    """Sidecar table: one line per protein, ``<id> <v1> ... <v1280>``."""

    def __init__(self, path: str | Path):
        self.table: dict[str, np.ndarray] = {}
        for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            vec = np.array([float(t) for t in tokens[1:]])
            if vec.size != PROTEIN_EMBED_DIM:
                raise DimensionMismatch(
                    f"line {line_no}: {vec.size} values, expected {PROTEIN_EMBED_DIM}")
            self.table[tokens[0]] = vec

    def get(self, structure: ProteinStructure) -> np.ndarray:
        if structure.id not in self.table:
            raise MissingEmbedding(structure.id)
        return self.table[structure.id]


def protein_embedding(structure: ProteinStructure,
                      source: StubEmbeddings | FileEmbeddings) -> np.ndarray:
    """(1, 1280) whole-protein embedding row."""
    vec = source.get(structure)
    if vec.shape != (PROTEIN_EMBED_DIM,):
        raise DimensionMismatch(f"embedding shape {vec.shape}")
    return vec[None, :]


def compute_features(structure: ProteinStructure, hierarchy: Hierarchy,
                     surface_encoder: InvariantEncoder,
                     atom_encoder: InvariantEncoder,
                     embedding_source: StubEmbeddings | FileEmbeddings) -> list[np.ndarray]:
    """All five level feature matrices, aligned with the hierarchy's node sets."""
    geo = face_geometry(hierarchy.mesh)
    feats = [
        surface_features(geo, structure, surface_encoder),
        atom_features(structure, atom_encoder, hierarchy.atom_indices),
        residue_features(structure),
        sse_features(hierarchy.segments, len(structure.residues)),
        protein_embedding(structure, embedding_source),
    ]
    for level, (f, n, d) in enumerate(zip(feats, hierarchy.node_counts, FEATURE_DIMS)):
        if f.shape != (n, d):
            raise DimensionMismatch(f"level {level}: {f.shape} != ({n}, {d})")
        if not np.all(np.isfinite(f)):
            raise ValueError(f"level {level}: non-finite feature values")
    return feats
