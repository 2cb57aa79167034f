import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays

import oracles
from fetaval.errors import ShapeError
from fetaval.overlap import dice, overlap_counts, volume_similarity

masks4 = arrays(bool, (4, 4, 4))


def test_two_cubes_half_overlap():
    a = np.zeros((4, 4, 4), bool)
    b = np.zeros((4, 4, 4), bool)
    a[0:2, 0:2, 0:2] = True
    b[1:3, 0:2, 0:2] = True
    c = overlap_counts(a, b)
    assert (c.tp, c.fp, c.fn_) == (4, 4, 4)
    assert dice(c) == 0.5
    assert volume_similarity(c) == 1.0


def test_volume_similarity_size_mismatch():
    gt = np.zeros(40, bool)
    pred = np.zeros(40, bool)
    gt[:10] = True
    pred[:30] = True
    vs = volume_similarity(overlap_counts(pred.reshape(2, 4, 5), gt.reshape(2, 4, 5)))
    assert vs == pytest.approx(0.5, abs=1e-15)


def test_empty_conventions():
    z = np.zeros((2, 2, 2), bool)
    one = z.copy()
    one[0, 0, 0] = True
    assert overlap_counts(z, z).both_empty
    assert dice(overlap_counts(z, z)) == 1.0 and volume_similarity(overlap_counts(z, z)) == 1.0
    assert dice(overlap_counts(one, z)) == 0.0 and volume_similarity(overlap_counts(one, z)) == 0.0


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        overlap_counts(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))


def test_exhaustive_2cube_pairs():
    masks = [np.array(bits, bool).reshape(2, 2, 2) for bits in itertools.product((0, 1), repeat=8)]
    for a in masks[::3]:
        for b in masks:
            c = overlap_counts(a, b)
            assert dice(c) == oracles.dice(a, b)
            assert volume_similarity(c) == oracles.vs(a, b)


@settings(max_examples=200, deadline=None)
@given(masks4, masks4)
def test_symmetry_and_bounds(a, b):
    ab, ba = overlap_counts(a, b), overlap_counts(b, a)
    assert dice(ab) == dice(ba) and volume_similarity(ab) == volume_similarity(ba)
    # VS - DSC = 2 min(FP, FN) / denom >= 0; equal up to rounding when one is zero
    assert 0.0 <= dice(ab) <= volume_similarity(ab) + 1e-15
    assert volume_similarity(ab) <= 1.0
    assert dice(overlap_counts(a, a)) == 1.0


@settings(max_examples=100, deadline=None)
@given(masks4)
def test_vs_is_one_for_equal_volumes(a):
    b = np.roll(a, 1, axis=0)
    assert volume_similarity(overlap_counts(a, b)) == 1.0
