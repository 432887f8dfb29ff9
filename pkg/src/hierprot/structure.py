"""Protein structure and surface mesh models with PDB/OFF parsing.

Parsing keeps heavy atoms only (hydrogens and HETATM records are dropped),
densifies residue indices to 0..R-1 in file order across chains, and takes
the first MODEL of multi-model files.  Writers emit the same fixed-column
subset so that parse(write(x)) round-trips every retained field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ELEMENTS = ("C", "N", "O", "S", "P", "X")

AA3 = ("ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
       "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL")
AA_UNKNOWN = "UNK"

AA3_TO_1 = {
    "ALA": "A", "ARG": "R", "ASN": "N", "ASP": "D", "CYS": "C",
    "GLN": "Q", "GLU": "E", "GLY": "G", "HIS": "H", "ILE": "I",
    "LEU": "L", "LYS": "K", "MET": "M", "PHE": "F", "PRO": "P",
    "SER": "S", "THR": "T", "TRP": "W", "TYR": "Y", "VAL": "V",
    AA_UNKNOWN: "X",
}

BACKBONE_NAMES = ("N", "CA", "C", "O")


class MalformedRecord(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class EmptyStructure(ValueError):
    """No heavy atoms survived parsing."""


class MalformedHeader(ValueError):
    """Mesh text does not start with a valid OFF header."""


class IndexOutOfRange(ValueError):
    """A face references a vertex that does not exist."""


@dataclass
class AtomRecord:
    serial: int
    element: str              # one of ELEMENTS; "X" covers everything non-CNOSP
    atom_name: str
    residue_index: int        # dense, 0-based
    chain_id: str
    coords: np.ndarray        # (3,) in A
    is_backbone: bool


@dataclass
class Residue:
    index: int
    aa: str                   # three-letter code from AA3, or "UNK"
    n_idx: int | None = None
    ca_idx: int | None = None
    c_idx: int | None = None
    o_idx: int | None = None

    def backbone_complete(self) -> bool:
        return None not in (self.n_idx, self.ca_idx, self.c_idx, self.o_idx)


@dataclass
class ProteinStructure:
    id: str
    atoms: list[AtomRecord] = field(default_factory=list)
    residues: list[Residue] = field(default_factory=list)

    def coords(self) -> np.ndarray:
        return np.array([a.coords for a in self.atoms], dtype=float)

    def sequence(self) -> str:
        return "".join(AA3_TO_1[r.aa] for r in self.residues)

    def validate(self) -> None:
        n_res = len(self.residues)
        owned = np.zeros(n_res, dtype=int)
        for a in self.atoms:
            if not np.all(np.isfinite(a.coords)):
                raise ValueError(f"atom {a.serial}: non-finite coordinates")
            if a.element not in ELEMENTS:
                raise ValueError(f"atom {a.serial}: bad element {a.element!r}")
            if not 0 <= a.residue_index < n_res:
                raise ValueError(f"atom {a.serial}: residue_index {a.residue_index} out of range")
            owned[a.residue_index] += 1
        if n_res and not np.all(owned >= 1):
            empty = int(np.argmin(owned))
            raise ValueError(f"residue {empty} owns no atoms")
        for r in self.residues:
            for idx in (r.n_idx, r.ca_idx, r.c_idx, r.o_idx):
                if idx is not None and self.atoms[idx].residue_index != r.index:
                    raise ValueError(f"residue {r.index}: backbone index crosses residues")


@dataclass
class SurfaceMesh:
    vertices: np.ndarray      # (n, 3)
    faces: np.ndarray         # (m, 3) int

    def validate(self) -> None:
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise IndexOutOfRange(
                f"face index out of range (have {len(self.vertices)} vertices)")
        for f in self.faces:
            if len(set(int(v) for v in f)) != 3:
                raise ValueError(f"degenerate face {f.tolist()}: repeated vertex")
            if _triangle_area(self.vertices[f]) <= 0.0:
                raise ValueError(f"degenerate face {f.tolist()}: zero area")


def _triangle_area(tri: np.ndarray) -> float:
    return 0.5 * float(np.linalg.norm(np.cross(tri[1] - tri[0], tri[2] - tri[0])))


def classify_element(symbol: str) -> str:
    symbol = symbol.strip().upper()
    return symbol if symbol in ELEMENTS[:5] else "X"


def _infer_element(element_field: str, atom_name: str) -> str | None:
    """Element symbol for an ATOM record, or None for hydrogen/deuterium."""
    symbol = element_field.strip().upper().lstrip("0123456789")
    if not symbol:
        for ch in atom_name.strip():
            if ch.isalpha():
                symbol = ch.upper()
                break
    if symbol in ("H", "D"):
        return None
    return classify_element(symbol)


def parse_pdb(text: str, structure_id: str = "") -> ProteinStructure:
    """Parse fixed-column ATOM records into a validated ProteinStructure."""
    atoms: list[AtomRecord] = []
    residues: list[Residue] = []
    current_key: tuple[str, str, str] | None = None
    in_model = 0
    models_seen = 0

    for line_no, line in enumerate(text.splitlines(), start=1):
        rec = line[:6]
        if rec.startswith("MODEL"):
            models_seen += 1
            in_model = models_seen
            continue
        if rec.startswith("ENDMDL"):
            in_model = -1 if models_seen >= 1 else 0
            continue
        if not rec.startswith("ATOM"):
            continue
        if models_seen > 1 or in_model == -1:
            continue  # only the first MODEL is honored
        if len(line) < 54:
            raise MalformedRecord(line_no, f"ATOM record too short ({len(line)} columns)")
        alt_loc = line[16]
        if alt_loc not in (" ", "A", ""):
            continue
        try:
            serial = int(line[6:11])
            x = float(line[30:38])
            y = float(line[38:46])
            z = float(line[46:54])
        except ValueError as exc:
            raise MalformedRecord(line_no, f"unparseable field: {exc}") from None
        atom_name = line[12:16].strip()
        res_name = line[17:20].strip()
        chain_id = line[21] if len(line) > 21 else " "
        res_seq = line[22:26]
        i_code = line[26] if len(line) > 26 else " "

        element = _infer_element(line[76:78] if len(line) >= 78 else "", atom_name)
        if element is None:
            continue  # hydrogen excluded

        key = (chain_id, res_seq, i_code)
        if key != current_key:
            current_key = key
            aa = res_name if res_name in AA3 else AA_UNKNOWN
            residues.append(Residue(index=len(residues), aa=aa))
        res = residues[-1]
        atom_index = len(atoms)
        atoms.append(AtomRecord(
            serial=serial, element=element, atom_name=atom_name,
            residue_index=res.index, chain_id=chain_id,
            coords=np.array([x, y, z]), is_backbone=atom_name in BACKBONE_NAMES,
        ))
        if atom_name == "N" and res.n_idx is None:
            res.n_idx = atom_index
        elif atom_name == "CA" and res.ca_idx is None:
            res.ca_idx = atom_index
        elif atom_name == "C" and res.c_idx is None:
            res.c_idx = atom_index
        elif atom_name == "O" and res.o_idx is None:
            res.o_idx = atom_index

    if not atoms:
        raise EmptyStructure("no heavy atoms found")
    # Drop residues that ended up owning no atoms (e.g. hydrogen-only groups).
    owned = sorted({a.residue_index for a in atoms})
    if len(owned) != len(residues):
        remap = {old: new for new, old in enumerate(owned)}
        residues = [residues[old] for old in owned]
        for new, r in enumerate(residues):
            r.index = new
        for a in atoms:
            a.residue_index = remap[a.residue_index]

    structure = ProteinStructure(id=structure_id, atoms=atoms, residues=residues)
    structure.validate()
    return structure


def write_pdb(structure: ProteinStructure) -> str:
    """Emit the parsed field subset as fixed-column ATOM records."""
    lines = []
    for a in structure.atoms:
        name = a.atom_name if len(a.atom_name) >= 4 else f" {a.atom_name:<3s}"
        res = structure.residues[a.residue_index]
        element = a.element
        lines.append(
            f"ATOM  {a.serial:5d} {name:<4s} {res.aa:>3s} {a.chain_id}"
            f"{a.residue_index + 1:4d}    "
            f"{a.coords[0]:8.3f}{a.coords[1]:8.3f}{a.coords[2]:8.3f}"
            f"  1.00  0.00          {element:>2s}"
        )
    lines.append("END")
    return "\n".join(lines) + "\n"


def parse_mesh(text: str) -> tuple[SurfaceMesh, int]:
    """Parse an ASCII OFF mesh; returns (mesh, count of dropped degenerate faces)."""
    tokens_by_line = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if body:
            tokens_by_line.append((line_no, body.split()))
    if not tokens_by_line or tokens_by_line[0][1] != ["OFF"]:
        raise MalformedHeader("mesh text must start with a bare 'OFF' line")
    if len(tokens_by_line) < 2:
        raise MalformedHeader("missing vertex/face count line")
    line_no, counts = tokens_by_line[1]
    try:
        n_vert, n_face = int(counts[0]), int(counts[1])
    except (ValueError, IndexError):
        raise MalformedHeader(f"line {line_no}: bad count line {' '.join(counts)!r}") from None

    rows = tokens_by_line[2:]
    if len(rows) < n_vert + n_face:
        raise MalformedHeader(f"expected {n_vert} vertex and {n_face} face lines, "
                              f"found {len(rows)}")
    vertices = np.zeros((n_vert, 3))
    for i in range(n_vert):
        line_no, tok = rows[i]
        try:
            vertices[i] = [float(tok[0]), float(tok[1]), float(tok[2])]
        except (ValueError, IndexError):
            raise MalformedRecord(line_no, f"bad vertex line {' '.join(tok)!r}") from None

    faces = []
    dropped = 0
    for i in range(n_face):
        line_no, tok = rows[n_vert + i]
        try:
            arity = int(tok[0])
            idx = [int(t) for t in tok[1:1 + arity]]
        except (ValueError, IndexError):
            raise MalformedRecord(line_no, f"bad face line {' '.join(tok)!r}") from None
        if arity != 3 or len(idx) != 3:
            raise MalformedRecord(line_no, f"only triangles supported, got arity {arity}")
        if min(idx) < 0 or max(idx) >= n_vert:
            raise IndexOutOfRange(f"line {line_no}: face {idx} exceeds {n_vert} vertices")
        if len(set(idx)) != 3 or _triangle_area(vertices[idx]) <= 1e-12:
            dropped += 1
            continue
        faces.append(idx)

    mesh = SurfaceMesh(vertices=vertices,
                       faces=np.array(faces, dtype=np.int64).reshape(-1, 3))
    mesh.validate()
    return mesh, dropped


def write_mesh(mesh: SurfaceMesh) -> str:
    """Emit ASCII OFF at full float precision (exact round-trip)."""
    lines = ["OFF", f"{len(mesh.vertices)} {len(mesh.faces)} 0"]
    for v in mesh.vertices:
        lines.append(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for f in mesh.faces:
        lines.append(f"3 {f[0]} {f[1]} {f[2]}")
    return "\n".join(lines) + "\n"
