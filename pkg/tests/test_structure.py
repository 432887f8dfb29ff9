"""Parsers, writers, and the synthetic generator."""

from pathlib import Path

import numpy as np
import numpy.testing as npt
import pytest

from hierprot import structure as st
from hierprot.synthetic import dihedral_angle, gen_synthetic, random_rotation, transform_structure

FIXTURES = Path(__file__).parent / "fixtures"


def oracle_dihedral(p0, p1, p2, p3):
    """Independent signed dihedral: arccos of normal dot, sign from the axis."""
    b1, b2, b3 = p1 - p0, p2 - p1, p3 - p2
    n1 = np.cross(b1, b2)
    n2 = np.cross(b2, b3)
    cosang = np.dot(n1, n2) / (np.linalg.norm(n1) * np.linalg.norm(n2))
    ang = np.arccos(np.clip(cosang, -1, 1))
    if np.dot(np.cross(n1, n2), b2) < 0:
        ang = -ang
    return ang


def test_single_atom_line():
    line = ("ATOM      1  CA  ALA A   1       1.000   2.000   3.000"
            "  1.00  0.00           C")
    s = st.parse_pdb(line)
    assert len(s.atoms) == 1 and len(s.residues) == 1
    a = s.atoms[0]
    assert a.is_backbone and a.element == "C" and a.atom_name == "CA"
    npt.assert_array_equal(a.coords, [1.0, 2.0, 3.0])
    assert s.residues[0].aa == "ALA"


def test_hydrogen_atoms_are_skipped():
    text = "\n".join([
        "ATOM      1  N   ALA A   1       0.000   0.000   0.000  1.00  0.00           N",
        "ATOM      2  H   ALA A   1       0.500   0.500   0.000  1.00  0.00           H",
        "ATOM      3  CA  ALA A   1       1.458   0.000   0.000  1.00  0.00           C",
    ])
    s = st.parse_pdb(text)
    assert [a.atom_name for a in s.atoms] == ["N", "CA"]


def test_fixture_fragment_hand_counts():
    s = st.parse_pdb((FIXTURES / "fragment.pdb").read_text(), "fragment")
    # Hand count of non-hydrogen ATOM records (altLoc B excluded): 5+4+6+7+9.
    assert len(s.atoms) == 31
    assert len(s.residues) == 5
    counts = [sum(a.residue_index == i for a in s.atoms) for i in range(5)]
    assert counts == [5, 4, 6, 7, 9]
    assert [r.aa for r in s.residues] == ["ALA", "GLY", "SER", "VAL", "LYS"]
    assert all(r.backbone_complete() for r in s.residues)
    # Blank element column falls back to the atom-name initial.
    cg = [a for a in s.atoms if a.atom_name == "CG"][0]
    assert cg.element == "C"


def test_first_model_only():
    text = "\n".join([
        "MODEL        1",
        "ATOM      1  CA  ALA A   1       0.000   0.000   0.000  1.00  0.00           C",
        "ENDMDL",
        "MODEL        2",
        "ATOM      2  CA  ALA A   1       9.000   9.000   9.000  1.00  0.00           C",
        "ENDMDL",
    ])
    s = st.parse_pdb(text)
    assert len(s.atoms) == 1
    npt.assert_array_equal(s.atoms[0].coords, [0.0, 0.0, 0.0])


def test_malformed_and_empty_errors():
    with pytest.raises(st.MalformedRecord, match="line 1"):
        st.parse_pdb("ATOM      1  CA  ALA A   1       bad     2.000   3.000")
    with pytest.raises(st.EmptyStructure):
        st.parse_pdb("REMARK nothing here\nEND")
    short = "ATOM      1  CA  ALA A   1   1.0"
    with pytest.raises(st.MalformedRecord):
        st.parse_pdb(short)


def test_pdb_round_trip():
    s = st.parse_pdb((FIXTURES / "fragment.pdb").read_text(), "frag")
    text = st.write_pdb(s)
    s2 = st.parse_pdb(text, "frag")
    assert len(s2.atoms) == len(s.atoms)
    for a, b in zip(s.atoms, s2.atoms):
        assert (a.element, a.atom_name, a.residue_index, a.is_backbone) == \
               (b.element, b.atom_name, b.residue_index, b.is_backbone)
        npt.assert_allclose(a.coords, b.coords, atol=5e-4)  # %8.3f columns
    assert [r.aa for r in s.residues] == [r.aa for r in s2.residues]
    # Second pass is exact: coordinates already sit on the 3-decimal grid.
    s3 = st.parse_pdb(st.write_pdb(s2), "frag")
    npt.assert_array_equal(s2.coords(), s3.coords())


def test_parse_pdb_never_crashes_on_garbage():
    rng = np.random.default_rng(99)
    for _ in range(200):
        n = int(rng.integers(0, 400))
        blob = bytes(rng.integers(0, 256, size=n, dtype=np.uint8))
        text = blob.decode("latin-1")
        try:
            st.parse_pdb(text)
        except (st.MalformedRecord, st.EmptyStructure):
            pass


def test_parse_mesh_single_triangle():
    text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
    mesh, dropped = st.parse_mesh(text)
    assert len(mesh.vertices) == 3 and len(mesh.faces) == 1 and dropped == 0


def test_parse_mesh_drops_degenerate_face():
    text = "OFF\n2 1 0\n0 0 0\n1 0 0\n3 0 0 1\n"
    mesh, dropped = st.parse_mesh(text)
    assert len(mesh.faces) == 0 and dropped == 1


def test_parse_mesh_header_and_index_errors():
    with pytest.raises(st.MalformedHeader):
        st.parse_mesh("PLY\n3 1 0\n")
    with pytest.raises(st.IndexOutOfRange):
        st.parse_mesh("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n")


def test_icosahedron_fixture_counts_and_area():
    mesh, dropped = st.parse_mesh((FIXTURES / "icosahedron.off").read_text())
    assert len(mesh.vertices) == 12 and len(mesh.faces) == 20 and dropped == 0
    total = sum(
        0.5 * np.linalg.norm(np.cross(mesh.vertices[f[1]] - mesh.vertices[f[0]],
                                      mesh.vertices[f[2]] - mesh.vertices[f[0]]))
        for f in mesh.faces)
    # Closed form for an icosahedron with edge length 2: 5 * sqrt(3) * a^2.
    npt.assert_allclose(total, 20.0 * np.sqrt(3.0), atol=1e-9)


def test_mesh_round_trip_exact():
    mesh, _ = st.parse_mesh((FIXTURES / "icosahedron.off").read_text())
    mesh2, dropped = st.parse_mesh(st.write_mesh(mesh))
    assert dropped == 0
    npt.assert_array_equal(mesh.vertices, mesh2.vertices)
    npt.assert_array_equal(mesh.faces, mesh2.faces)


def test_parse_mesh_never_crashes_on_garbage():
    rng = np.random.default_rng(5)
    for _ in range(200):
        n = int(rng.integers(0, 300))
        text = bytes(rng.integers(0, 256, size=n, dtype=np.uint8)).decode("latin-1")
        try:
            st.parse_mesh(text)
        except (st.MalformedHeader, st.MalformedRecord, st.IndexOutOfRange):
            pass


def test_gen_synthetic_deterministic():
    s1, m1 = gen_synthetic(0, 12)
    s2, m2 = gen_synthetic(0, 12)
    npt.assert_array_equal(s1.coords(), s2.coords())
    npt.assert_array_equal(m1.vertices, m2.vertices)
    npt.assert_array_equal(m1.faces, m2.faces)
    assert [r.aa for r in s1.residues] == [r.aa for r in s2.residues]
    s3, _ = gen_synthetic(1, 12)
    assert not np.array_equal(s1.coords(), s3.coords())


def test_gen_synthetic_minimal():
    s, mesh = gen_synthetic(3, 3)
    assert len(s.residues) == 3
    assert len(mesh.faces) >= 4


@pytest.mark.parametrize("seed", range(8))
def test_gen_synthetic_invariants_over_seeds(seed):
    residues = 5 + seed * 3
    s, mesh = gen_synthetic(seed, residues)
    s.validate()
    mesh.validate()
    assert len(s.residues) == residues
    assert all(r.backbone_complete() for r in s.residues)
    indices = [a.residue_index for a in s.atoms]
    assert indices == sorted(indices) and indices[-1] == residues - 1


def test_gen_synthetic_helix_phi():
    s, _ = gen_synthetic(0, 12, segments=[("H", 12)])
    for i in range(2, 10):
        r, rp = s.residues[i], s.residues[i - 1]
        phi = oracle_dihedral(s.atoms[rp.c_idx].coords, s.atoms[r.n_idx].coords,
                              s.atoms[r.ca_idx].coords, s.atoms[r.c_idx].coords)
        assert abs(np.rad2deg(phi) - (-57.0)) < 2.0
        # Library routine agrees with the independent oracle.
        lib = dihedral_angle(s.atoms[rp.c_idx].coords, s.atoms[r.n_idx].coords,
                             s.atoms[r.ca_idx].coords, s.atoms[r.c_idx].coords)
        npt.assert_allclose(lib, phi, atol=1e-9)


def test_transform_structure_is_rigid():
    s, _ = gen_synthetic(4, 10)
    rng = np.random.default_rng(0)
    rot = random_rotation(rng)
    npt.assert_allclose(rot @ rot.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(rot) > 0
    moved = transform_structure(s, rot, np.array([1.0, -2.0, 3.0]))
    d_before = np.linalg.norm(s.coords()[0] - s.coords()[5])
    d_after = np.linalg.norm(moved.coords()[0] - moved.coords()[5])
    npt.assert_allclose(d_before, d_after, rtol=1e-12)
