"""Seeded synthetic proteins and surface meshes for tests and demos.

Backbones are grown residue by residue from ideal bond geometry and
per-segment dihedral angles (helix, strand, or random coil), side chains are
reduced to a few stub atoms around CA, and the surface is the convex hull of
radially inflated atom positions.  Everything is deterministic in the seed.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull

from .structure import AA3, AtomRecord, ProteinStructure, Residue, SurfaceMesh

BOND_N_CA = 1.458
BOND_CA_C = 1.525
BOND_C_N = 1.329
BOND_C_O = 1.231
ANGLE_N_CA_C = np.deg2rad(111.2)
ANGLE_CA_C_N = np.deg2rad(116.2)
ANGLE_C_N_CA = np.deg2rad(121.7)
ANGLE_CA_C_O = np.deg2rad(120.8)

PHI_PSI = {"H": (np.deg2rad(-57.0), np.deg2rad(-47.0)),
           "E": (np.deg2rad(-119.0), np.deg2rad(113.0))}

# Regular helices/strands carry exact repeated interatomic distances; this
# jitter separates those ties so nearest-neighbor order is stable under
# rigid motion (float noise from a rotation is ~9 orders smaller).
TIE_BREAK_JITTER = 2e-3

HULL_PAD = 2.0


def place_atom(a: np.ndarray, b: np.ndarray, c: np.ndarray,
               length: float, angle: float, dihedral: float) -> np.ndarray:
    """Position d with |cd| = length, angle(b,c,d) = angle, dih(a,b,c,d) = dihedral."""
    bc = c - b
    bc = bc / np.linalg.norm(bc)
    n = np.cross(b - a, bc)
    n = n / np.linalg.norm(n)
    m = np.cross(n, bc)
    d_local = np.array([-length * np.cos(angle),
                        length * np.sin(angle) * np.cos(dihedral),
                        length * np.sin(angle) * np.sin(dihedral)])
    return c + d_local[0] * bc + d_local[1] * m + d_local[2] * n


def dihedral_angle(p0, p1, p2, p3) -> float:
    """Signed dihedral in radians, IUPAC sign convention."""
    b0 = p0 - p1
    b1 = p2 - p1
    b2 = p3 - p2
    b1 = b1 / np.linalg.norm(b1)
    v = b0 - np.dot(b0, b1) * b1
    w = b2 - np.dot(b2, b1) * b1
    return float(np.arctan2(np.dot(np.cross(b1, v), w), np.dot(v, w)))


def bond_angle(p0, p1, p2) -> float:
    """Angle at p1 in radians."""
    u = p0 - p1
    v = p2 - p1
    cosang = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.arccos(np.clip(cosang, -1.0, 1.0)))


def _default_segments(rng: np.random.Generator, residues: int) -> list[tuple[str, int]]:
    segments = []
    remaining = residues
    while remaining > 0:
        length = int(rng.integers(4, 9))
        if remaining - length < 4:
            length = remaining
        label = str(rng.choice(["H", "E", "C"]))
        segments.append((label, min(length, remaining)))
        remaining -= segments[-1][1]
    return segments


def _segment_dihedrals(rng: np.random.Generator,
                       segments: list[tuple[str, int]]) -> tuple[np.ndarray, np.ndarray]:
    phis, psis = [], []
    for label, length in segments:
        for _ in range(length):
            if label in PHI_PSI:
                phi, psi = PHI_PSI[label]
            else:  # random coil, kept away from the helical basin
                phi = rng.uniform(np.deg2rad(-170.0), np.deg2rad(-50.0))
                psi = rng.uniform(np.deg2rad(30.0), np.deg2rad(180.0))
            phis.append(phi)
            psis.append(psi)
    return np.array(phis), np.array(psis)


def gen_synthetic(seed: int, residues: int,
                  segments: list[tuple[str, int]] | None = None,
                  structure_id: str | None = None) -> tuple[ProteinStructure, SurfaceMesh]:
    """Deterministic synthetic protein plus convex-hull surface mesh.

    ``segments`` optionally fixes the (label, length) layout, with labels in
    {"H", "E", "C"}; lengths must sum to ``residues``.  By default a random
    mix of helix/strand/coil runs of at least four residues is drawn.
    """
    if residues < 3:
        raise ValueError("need at least 3 residues")
    rng = np.random.default_rng(seed)
    if segments is None:
        segments = _default_segments(rng, residues)
    if sum(length for _, length in segments) != residues:
        raise ValueError("segment lengths must sum to the residue count")
    phis, psis = _segment_dihedrals(rng, segments)

    n_pos = np.zeros((residues, 3))
    ca_pos = np.zeros((residues, 3))
    c_pos = np.zeros((residues, 3))
    o_pos = np.zeros((residues, 3))

    n_pos[0] = (0.0, 0.0, 0.0)
    ca_pos[0] = (BOND_N_CA, 0.0, 0.0)
    c_pos[0] = ca_pos[0] + BOND_CA_C * np.array(
        [-np.cos(ANGLE_N_CA_C), np.sin(ANGLE_N_CA_C), 0.0])
    for i in range(1, residues):
        n_pos[i] = place_atom(n_pos[i - 1], ca_pos[i - 1], c_pos[i - 1],
                              BOND_C_N, ANGLE_CA_C_N, psis[i - 1])
        ca_pos[i] = place_atom(ca_pos[i - 1], c_pos[i - 1], n_pos[i],
                               BOND_N_CA, ANGLE_C_N_CA, np.pi)
        c_pos[i] = place_atom(c_pos[i - 1], n_pos[i], ca_pos[i],
                              BOND_CA_C, ANGLE_N_CA_C, phis[i])
    for i in range(residues):
        o_pos[i] = place_atom(n_pos[i], ca_pos[i], c_pos[i],
                              BOND_C_O, ANGLE_CA_C_O, psis[i] - np.pi)

    structure = ProteinStructure(
        id=structure_id or f"synth-s{seed}-r{residues}")
    serial = 1
    stub_names = ("CB", "CG", "CD")
    for i in range(residues):
        aa = str(rng.choice(AA3))
        res = Residue(index=i, aa=aa)
        positions = [("N", "N", n_pos[i]), ("CA", "C", ca_pos[i]),
                     ("C", "C", c_pos[i]), ("O", "O", o_pos[i])]
        n_stubs = int(rng.integers(1, 4))
        for k in range(n_stubs):
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            stub = ca_pos[i] + direction * (1.52 + 0.4 * k)
            element = str(rng.choice(["C", "C", "C", "N", "O", "S"]))
            positions.append((stub_names[k], element, stub))
        for name, element, pos in positions:
            idx = len(structure.atoms)
            structure.atoms.append(AtomRecord(
                serial=serial, element=element, atom_name=name,
                residue_index=i, chain_id="A", coords=np.array(pos, dtype=float),
                is_backbone=name in ("N", "CA", "C", "O")))
            if name == "N":
                res.n_idx = idx
            elif name == "CA":
                res.ca_idx = idx
            elif name == "C":
                res.c_idx = idx
            elif name == "O":
                res.o_idx = idx
            serial += 1
        structure.residues.append(res)

    all_coords = structure.coords()
    all_coords += rng.uniform(-TIE_BREAK_JITTER, TIE_BREAK_JITTER, size=all_coords.shape)
    for atom, xyz in zip(structure.atoms, all_coords):
        atom.coords = xyz
    structure.validate()

    mesh = _hull_mesh(all_coords)
    return structure, mesh


def _hull_mesh(coords: np.ndarray) -> SurfaceMesh:
    center = coords.mean(axis=0)
    radial = coords - center
    norms = np.linalg.norm(radial, axis=1, keepdims=True)
    safe = np.where(norms > 1e-9, norms, 1.0)
    inflated = coords + radial / safe * HULL_PAD
    hull = ConvexHull(inflated)
    used = np.unique(hull.simplices)
    remap = np.full(len(inflated), -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    mesh = SurfaceMesh(vertices=inflated[used], faces=remap[hull.simplices])
    mesh.validate()
    return mesh


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random proper rotation matrix (QR with positive diagonal)."""
    m = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(m)
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def transform_structure(structure: ProteinStructure, rotation: np.ndarray,
                        translation: np.ndarray) -> ProteinStructure:
    moved = ProteinStructure(id=structure.id)
    moved.residues = [Residue(r.index, r.aa, r.n_idx, r.ca_idx, r.c_idx, r.o_idx)
                      for r in structure.residues]
    moved.atoms = [AtomRecord(a.serial, a.element, a.atom_name, a.residue_index,
                              a.chain_id, rotation @ a.coords + translation,
                              a.is_backbone)
                   for a in structure.atoms]
    return moved


def transform_mesh(mesh: SurfaceMesh, rotation: np.ndarray,
                   translation: np.ndarray) -> SurfaceMesh:
    return SurfaceMesh(vertices=mesh.vertices @ rotation.T + translation,
                       faces=mesh.faces.copy())
