"""Three-state secondary structure assignment (helix/strand/loop).

Hydrogen bonds follow the classical Kabsch-Sander electrostatic model with a
-0.5 kcal/mol threshold; the amide hydrogen is rebuilt geometrically since
parsed structures are heavy-atom only.  Helices need two consecutive i->i+4
bonds, strands come from parallel/antiparallel bridge patterns, and
everything else (including residues with broken backbones) is loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .structure import ProteinStructure, Residue

HBOND_THRESHOLD = -0.5          # kcal/mol
HBOND_FACTOR = 0.084 * 332.0    # partial charges times electrostatic constant
N_H_LENGTH = 1.01
CHAIN_BREAK_CA_DIST = 4.5
MIN_DIST = 1e-3                 # clamp to keep 1/r finite on degenerate input

SSE_LABELS = ("H", "E", "L")


class MissingBackbone(ValueError):
    """A residue lacks the backbone atoms needed for the energy model."""


class BadSegmentation(ValueError):
    """Segments do not partition the residue range."""


@dataclass
class SseSegment:
    label: str
    start: int   # inclusive
    end: int     # inclusive

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def _atom(structure: ProteinStructure, idx: int | None) -> np.ndarray | None:
    return None if idx is None else structure.atoms[idx].coords


def _reconstruct_h(structure: ProteinStructure, donor: Residue) -> np.ndarray:
    """Amide H along the direction opposing the previous peptide C=O midpoint."""
    if donor.index == 0:
        raise MissingBackbone("first residue has no reconstructable amide H")
    prev = structure.residues[donor.index - 1]
    n = _atom(structure, donor.n_idx)
    c_prev = _atom(structure, prev.c_idx)
    o_prev = _atom(structure, prev.o_idx)
    if n is None or c_prev is None or o_prev is None:
        raise MissingBackbone(f"residue {donor.index}: incomplete backbone for H")
    direction = n - 0.5 * (c_prev + o_prev)
    norm = np.linalg.norm(direction)
    if norm < MIN_DIST:
        raise MissingBackbone(f"residue {donor.index}: degenerate H geometry")
    return n + direction / norm * N_H_LENGTH


def hbond_energy(donor_res: Residue, acceptor_res: Residue,
                 structure: ProteinStructure) -> float:
    """Kabsch-Sander energy (kcal/mol) of acceptor C=O to donor N-H.

    Returns +inf for a first-residue donor and for sequence-adjacent pairs
    (the donor N is covalently bonded to the acceptor C=O, which breaks the
    point-charge model); raises MissingBackbone when required atoms are absent.
    """
    if abs(donor_res.index - acceptor_res.index) < 2:
        return float("inf")
    if donor_res.index == 0:
        return float("inf")
    n = _atom(structure, donor_res.n_idx)
    c = _atom(structure, acceptor_res.c_idx)
    o = _atom(structure, acceptor_res.o_idx)
    if n is None or c is None or o is None:
        raise MissingBackbone("donor needs N; acceptor needs C and O")
    h = _reconstruct_h(structure, donor_res)

    def dist(a, b):
        return max(float(np.linalg.norm(a - b)), MIN_DIST)

    return HBOND_FACTOR * (1.0 / dist(o, n) + 1.0 / dist(c, h)
                           - 1.0 / dist(o, h) - 1.0 / dist(c, n))


def _chain_breaks(structure: ProteinStructure) -> np.ndarray:
    """breaks[i] is True when residues i and i+1 are not covalently continuous."""
    n_res = len(structure.residues)
    breaks = np.zeros(max(n_res - 1, 0), dtype=bool)
    for i in range(n_res - 1):
        ca_a = _atom(structure, structure.residues[i].ca_idx)
        ca_b = _atom(structure, structure.residues[i + 1].ca_idx)
        if ca_a is None or ca_b is None:
            breaks[i] = True
        else:
            breaks[i] = np.linalg.norm(ca_b - ca_a) > CHAIN_BREAK_CA_DIST
    return breaks


def hbond_matrix(structure: ProteinStructure,
                 threshold: float = HBOND_THRESHOLD) -> np.ndarray:
    """bond[i, j]: the C=O of residue i accepts an H-bond from the N-H of j."""
    n_res = len(structure.residues)
    breaks = _chain_breaks(structure)

    c = np.full((n_res, 3), np.nan)
    o = np.full((n_res, 3), np.nan)
    nh = np.full((n_res, 3), np.nan)
    h = np.full((n_res, 3), np.nan)
    for r in structure.residues:
        if r.c_idx is not None:
            c[r.index] = structure.atoms[r.c_idx].coords
        if r.o_idx is not None:
            o[r.index] = structure.atoms[r.o_idx].coords
        if r.n_idx is not None:
            nh[r.index] = structure.atoms[r.n_idx].coords
        if r.index > 0 and not breaks[r.index - 1]:
            try:
                h[r.index] = _reconstruct_h(structure, r)
            except MissingBackbone:
                pass

    def inv_dist(a, b):
        d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
        return 1.0 / np.maximum(d, MIN_DIST)

    energy = HBOND_FACTOR * (inv_dist(o, nh) + inv_dist(c, h)
                             - inv_dist(o, h) - inv_dist(c, nh))
    energy = np.where(np.isnan(energy), np.inf, energy)
    # Sequence-adjacent pairs are covalently bonded, not hydrogen bonded.
    idx = np.arange(n_res)
    energy[np.abs(idx[:, None] - idx[None, :]) < 2] = np.inf
    return energy < threshold


def count_hbonds(structure: ProteinStructure,
                 threshold: float = HBOND_THRESHOLD) -> int:
    return int(hbond_matrix(structure, threshold).sum())


def assign_sse(structure: ProteinStructure,
               threshold: float = HBOND_THRESHOLD) -> list[str]:
    """Per-residue H/E/L labels; helix takes precedence over strand."""
    n_res = len(structure.residues)
    if n_res == 0:
        raise ValueError("structure has no residues")
    bond = hbond_matrix(structure, threshold)
    breaks = _chain_breaks(structure)

    def contiguous(a: int, b: int) -> bool:
        return 0 <= a and b < n_res and not breaks[a:b].any()

    # 4-turn at i: C=O of i accepts from N-H of i+4.
    turn4 = np.zeros(n_res, dtype=bool)
    for i in range(n_res - 4):
        turn4[i] = bond[i, i + 4] and contiguous(i, i + 4)

    helix = np.zeros(n_res, dtype=bool)
    for i in range(1, n_res - 4):
        if turn4[i - 1] and turn4[i]:
            helix[i:i + 4] = True

    bridge = np.zeros(n_res, dtype=bool)
    for i in range(n_res):
        for j in range(i + 3, n_res):
            parallel = False
            anti = False
            if contiguous(i - 1, i + 1) and contiguous(j - 1, j + 1):
                if i - 1 >= 0 and i + 1 < n_res:
                    parallel |= bond[i - 1, j] and bond[j, i + 1]
                if j - 1 >= 0 and j + 1 < n_res:
                    parallel |= bond[j - 1, i] and bond[i, j + 1]
                anti = bond[i, j] and bond[j, i]
                if i - 1 >= 0 and i + 1 < n_res and j - 1 >= 0 and j + 1 < n_res:
                    anti |= bond[i - 1, j + 1] and bond[j - 1, i + 1]
            if parallel or anti:
                bridge[i] = bridge[j] = True

    return ["H" if helix[i] else ("E" if bridge[i] else "L") for i in range(n_res)]


def segment_sse(labels: list[str]) -> list[SseSegment]:
    """Run-length encode labels into maximal same-label segments."""
    if not labels:
        raise ValueError("labels must be nonempty")
    segments = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            segments.append(SseSegment(label=labels[start], start=start, end=i - 1))
            start = i
    return segments


def validate_segments(segments: list[SseSegment], residue_count: int) -> None:
    expected = 0
    for k, seg in enumerate(segments):
        if seg.start != expected or seg.end < seg.start:
            raise BadSegmentation(f"segment {k} spans {seg.start}..{seg.end}, "
                                  f"expected start {expected}")
        if k and segments[k - 1].label == seg.label:
            raise BadSegmentation(f"segments {k - 1} and {k} share label {seg.label}")
        expected = seg.end + 1
    if expected != residue_count:
        raise BadSegmentation(f"segments cover {expected} of {residue_count} residues")
