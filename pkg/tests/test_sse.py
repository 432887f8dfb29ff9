"""Hydrogen-bond energies and three-state secondary structure labels."""

import numpy as np
import numpy.testing as npt
import pytest

from hierprot import sse
from hierprot.structure import ProteinStructure
from hierprot.synthetic import gen_synthetic, random_rotation, transform_structure


def energy_oracle(structure, acceptor, donor):
    """Straight-line Kabsch-Sander evaluation with its own H reconstruction."""
    res = structure.residues
    atoms = structure.atoms
    o = atoms[res[acceptor].o_idx].coords
    c = atoms[res[acceptor].c_idx].coords
    n = atoms[res[donor].n_idx].coords
    mid = 0.5 * (atoms[res[donor - 1].c_idx].coords + atoms[res[donor - 1].o_idx].coords)
    direction = (n - mid) / np.linalg.norm(n - mid)
    h = n + 1.01 * direction
    d = np.linalg.norm
    return 0.084 * 332.0 * (1 / d(o - n) + 1 / d(c - h) - 1 / d(o - h) - 1 / d(c - n))


def test_self_bond_is_forbidden():
    s, _ = gen_synthetic(0, 6, segments=[("H", 6)])
    assert sse.hbond_energy(s.residues[2], s.residues[2], s) == np.inf


def test_first_residue_donor_has_no_bond():
    s, _ = gen_synthetic(0, 6, segments=[("H", 6)])
    assert sse.hbond_energy(s.residues[0], s.residues[4], s) == np.inf


def test_helix_interior_pair_energy():
    s, _ = gen_synthetic(0, 12, segments=[("H", 12)])
    for i in range(1, 7):
        e = sse.hbond_energy(s.residues[i + 4], s.residues[i], s)
        npt.assert_allclose(e, energy_oracle(s, i, i + 4), rtol=1e-12)
        assert e < -0.5


def test_distant_pair_energy_is_negligible():
    s, _ = gen_synthetic(0, 40, segments=[("E", 40)])
    # A fully extended chain keeps sequence-distant residues far apart.
    donor, acceptor = s.residues[35], s.residues[2]
    ca_d = s.atoms[donor.ca_idx].coords
    ca_a = s.atoms[acceptor.ca_idx].coords
    assert np.linalg.norm(ca_d - ca_a) > 50.0
    e = sse.hbond_energy(donor, acceptor, s)
    npt.assert_allclose(e, energy_oracle(s, 2, 35), rtol=1e-12)
    assert abs(e) < 0.5


def test_missing_backbone_raises():
    s, _ = gen_synthetic(0, 6, segments=[("H", 6)])
    s.residues[4].n_idx = None  # donor without an amide N
    with pytest.raises(sse.MissingBackbone):
        sse.hbond_energy(s.residues[4], s.residues[1], s)
    s.residues[1].o_idx = None  # acceptor without a carbonyl O
    with pytest.raises(sse.MissingBackbone):
        sse.hbond_energy(s.residues[5], s.residues[1], s)


def test_ideal_helix_labels():
    s, _ = gen_synthetic(0, 12, segments=[("H", 12)])
    labels = sse.assign_sse(s)
    assert labels[0] == "L"
    assert sum(1 for x in labels if x == "H") >= 8
    segs = sse.segment_sse(labels)
    assert len(segs) <= 3
    assert any(seg.label == "H" for seg in segs)


def test_extended_chain_is_all_loop():
    s, _ = gen_synthetic(1, 5, segments=[("E", 5)])
    bond = sse.hbond_matrix(s)
    assert not bond.any()
    assert sse.assign_sse(s) == ["L"] * 5


def test_single_residue_is_loop():
    s, _ = gen_synthetic(2, 3)
    s_single = ProteinStructure("one", [a for a in s.atoms if a.residue_index == 0],
                                [s.residues[0]])
    assert sse.assign_sse(s_single) == ["L"]


def test_residue_missing_backbone_degrades_to_loop():
    s, _ = gen_synthetic(0, 12, segments=[("H", 12)])
    s.residues[5].o_idx = None
    labels = sse.assign_sse(s)
    assert labels[5] in ("L", "H")  # residue 5 may still be an acceptor-free helix member
    assert len(labels) == 12


def test_assign_sse_rotation_invariant():
    s, _ = gen_synthetic(3, 24)
    rng = np.random.default_rng(17)
    for _ in range(5):
        moved = transform_structure(s, random_rotation(rng), rng.normal(size=3) * 20)
        assert sse.assign_sse(moved) == sse.assign_sse(s)


def test_hbond_count_monotone_in_threshold():
    for seed in range(5):
        s, _ = gen_synthetic(seed, 20)
        loose = sse.count_hbonds(s, threshold=-0.3)
        strict = sse.count_hbonds(s, threshold=-0.5)
        assert loose >= strict


def test_segment_sse_trivial_runs():
    segs = sse.segment_sse(["H", "H", "H"])
    assert [(g.label, g.start, g.end) for g in segs] == [("H", 0, 2)]
    segs = sse.segment_sse(["H", "H", "L", "E"])
    assert [(g.label, g.start, g.end) for g in segs] == \
        [("H", 0, 1), ("L", 2, 2), ("E", 3, 3)]
    assert [g.length for g in segs] == [2, 1, 1]


@pytest.mark.parametrize("seed", range(6))
def test_segments_partition_residues(seed):
    rng = np.random.default_rng(seed)
    labels = [str(rng.choice(["H", "E", "L"])) for _ in range(int(rng.integers(1, 60)))]
    segs = sse.segment_sse(labels)
    assert sum(g.length for g in segs) == len(labels)
    sse.validate_segments(segs, len(labels))
    for a, b in zip(segs, segs[1:]):
        assert a.label != b.label and b.start == a.end + 1


def test_validate_segments_rejects_gaps_and_overlaps():
    with pytest.raises(sse.BadSegmentation):
        sse.validate_segments([sse.SseSegment("H", 0, 2), sse.SseSegment("L", 4, 5)], 6)
    with pytest.raises(sse.BadSegmentation):
        sse.validate_segments([sse.SseSegment("H", 0, 3), sse.SseSegment("L", 3, 5)], 6)
    with pytest.raises(sse.BadSegmentation):
        sse.validate_segments([sse.SseSegment("H", 0, 5)], 8)
