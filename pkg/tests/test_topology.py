import itertools

import numpy as np
import pytest

import oracles
from fetaval.errors import PhantomSpecError, TopologyError
from fetaval.phantoms import KINDS, PhantomSpec, generate_phantom
from fetaval.topology import (EXPECTED_TOPOLOGY, BettiTriple, betti_number_error, betti_numbers,
                              connected_components, euler_characteristic)
from fetaval.volume_io import TISSUES, TissueLabel, binary_mask


def _all_2cube_masks():
    for bits in itertools.product((0, 1), repeat=8):
        yield np.array(bits, bool).reshape(2, 2, 2)


def test_components_examples():
    assert connected_components(np.zeros((3, 3, 3), bool))[0] == 0
    corner = np.zeros((2, 2, 2), bool)
    corner[0, 0, 0] = corner[1, 1, 1] = True
    assert connected_components(corner, 26)[0] == 1
    assert connected_components(corner, 18)[0] == 2
    assert connected_components(corner, 6)[0] == 2
    gap = np.zeros((5, 2, 2), bool)
    gap[:2] = gap[3:] = True
    for conn in (6, 18, 26):
        assert connected_components(gap, conn)[0] == 2


def test_euler_examples():
    one = np.zeros((3, 3, 3), bool)
    one[1, 1, 1] = True
    assert euler_characteristic(one) == 8 - 12 + 6 - 1 == 1
    assert euler_characteristic(np.ones((2, 2, 2), bool)) == 1
    ring = np.ones((3, 3, 1), bool)
    ring[1, 1, 0] = False
    assert euler_characteristic(ring) == 0
    assert euler_characteristic(np.zeros((2, 2, 2), bool)) == 0


def test_betti_examples():
    shell = np.ones((3, 3, 3), bool)
    shell[1, 1, 1] = False
    assert betti_numbers(shell) == (1, 0, 1)
    ring = np.ones((3, 3, 1), bool)
    ring[1, 1, 0] = False
    assert betti_numbers(ring) == (1, 1, 0)
    assert betti_numbers(np.zeros((4, 4, 4), bool)) == (0, 0, 0)
    # the cavity of the shell is one 6-connected background region
    n_cav, _ = connected_components(~shell[1:2, 1:2, 1:2], 6)
    assert n_cav == 1


def test_exhaustive_2cube_against_oracle():
    for m in _all_2cube_masks():
        assert betti_numbers(m) == oracles.betti(m)
        assert euler_characteristic(m) == oracles.euler_cells(oracles.voxels(m))


def test_2cube_masks_are_acyclic():
    # no 2x2x2 configuration can enclose a tunnel or a cavity
    for m in _all_2cube_masks():
        b = betti_numbers(m)
        assert b.b1 == 0 and b.b2 == 0


def test_connectivity_6_dual():
    corner = np.zeros((2, 2, 2), bool)
    corner[0, 0, 0] = corner[1, 1, 1] = True
    assert betti_numbers(corner, 6) == (2, 0, 0)
    # a 26-connected diagonal ring is not a 6-cycle
    diag = np.zeros((3, 3, 1), bool)
    diag[0, 1, 0] = diag[1, 0, 0] = diag[1, 2, 0] = diag[2, 1, 0] = True
    assert betti_numbers(diag, 26) == (1, 1, 0)
    assert betti_numbers(diag, 6) == (4, 0, 0)
    shell = np.ones((3, 3, 3), bool)
    shell[1, 1, 1] = False
    assert betti_numbers(shell, 6) == (1, 0, 1)
    with pytest.raises(ValueError):
        betti_numbers(shell, 18)


def test_connectivity_6_euler_poincare(rng):
    # b0 - b1 + b2 == chi with both components counts taken independently
    for _ in range(300):
        m = rng.random((4, 4, 4)) < 0.5
        b = betti_numbers(m, 6)
        assert b.b0 == oracles.bfs_components(oracles.voxels(m), oracles.OFFS6)
        assert b.b2 == oracles.bfs_components(oracles.padded_complement(m), oracles.OFFS26) - 1
        assert b.b0 - b.b1 + b.b2 == euler_characteristic(m, 6)


def _symmetries(m):
    yield m
    yield m[::-1]
    yield m[:, ::-1]
    yield m[:, :, ::-1]
    yield m.transpose(1, 0, 2)
    yield m.transpose(2, 1, 0)
    yield m.transpose(1, 2, 0)[::-1]
    yield np.pad(m, ((2, 0), (0, 1), (3, 1)))


def test_symmetry_invariance(rng):
    for _ in range(500):
        shape = tuple(rng.integers(1, 9, 3))
        m = rng.random(shape) < rng.uniform(0.2, 0.7)
        ref = betti_numbers(m)
        chi = euler_characteristic(m)
        assert ref.b0 - ref.b1 + ref.b2 == chi
        for s in _symmetries(m):
            assert betti_numbers(s) == ref


def test_disjoint_ball_adds_one_component(rng):
    ball = generate_phantom(PhantomSpec("solid_ball", (5, 5, 5), radius=2.0)).volume.voxels > 0
    for _ in range(100):
        m = np.zeros((6, 6, 12), bool)
        m[:, :, :6] = rng.random((6, 6, 6)) < 0.4
        before, chi = betti_numbers(m), euler_characteristic(m)
        m2 = m.copy()
        m2[:5, :5, 7:] = ball
        after = betti_numbers(m2)
        assert after.b0 == before.b0 + 1
        assert euler_characteristic(m2) == chi + 1
        assert (after.b1, after.b2) == (before.b1, before.b2)


def test_bne_examples():
    assert betti_number_error(BettiTriple(2, 0, 0), "GM") == (0, 0, 0)
    assert betti_number_error(BettiTriple(3, 1, 0), TissueLabel.WM) == (2, 1, 0)
    assert betti_number_error(BettiTriple(1, 0, 0), "ventricles") == (0, 0, 0)
    for t in TISSUES:
        assert betti_number_error(BettiTriple(0, 0, 0), t) == EXPECTED_TOPOLOGY[t]
    with pytest.raises(ValueError):
        betti_number_error(BettiTriple(1, 0, 0), 0)


def test_expected_topology_table():
    assert EXPECTED_TOPOLOGY[TissueLabel.GM] == (2, 0, 0)
    for t in TISSUES:
        if t != TissueLabel.GM:
            assert EXPECTED_TOPOLOGY[t] == (1, 0, 0)


@pytest.mark.parametrize("kind", KINDS)
def test_phantoms_match_expected(kind):
    shape = (24, 24, 24) if kind == "full_brainlike" else (11, 11, 11)
    spec = PhantomSpec(kind, shape, radius=8.0 if kind == "full_brainlike" else 2.0)
    ph = generate_phantom(spec)
    for label, exp in ph.expected.items():
        m = binary_mask(ph.volume, label).data
        assert betti_numbers(m) == exp
        assert oracles.betti(m) == exp


def test_brainlike_has_all_tissues():
    ph = generate_phantom(PhantomSpec("full_brainlike", (20, 20, 20), radius=7.0))
    assert set(np.unique(ph.volume.voxels)) == set(range(8))


@pytest.mark.parametrize("spec", [
    PhantomSpec("blob"),
    PhantomSpec("solid_ball", (3, 3, 3), radius=4.0),
    PhantomSpec("full_brainlike", (10, 10, 10), radius=4.0),
    PhantomSpec("solid_ball", label=0),
])
def test_phantom_spec_errors(spec):
    with pytest.raises(PhantomSpecError):
        generate_phantom(spec)


def test_negative_b1_raises(monkeypatch):
    import fetaval.topology as topo
    monkeypatch.setattr(topo, "_closed_cells", lambda p: (10, 0, 0, 0))
    with pytest.raises(TopologyError):
        betti_numbers(np.ones((2, 2, 2), bool))
