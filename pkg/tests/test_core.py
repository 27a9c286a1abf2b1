from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import R
from hemd.core import Region, iou, label_map_from_regions, region_size, regions_from_label_map
from hemd.errors import OverlapError

pixel_sets = st.sets(st.integers(0, 63), min_size=1, max_size=40)


@pytest.mark.parametrize("pixels, size", [((0, 1, 2), 3), ((5,), 1), (tuple(range(100)), 100)])
def test_region_size(pixels, size):
    assert region_size(Region(pixels)) == size


def test_region_rejects_bad_input():
    with pytest.raises(ValueError):
        Region([])
    with pytest.raises(ValueError):
        Region([2, 1])
    with pytest.raises(ValueError):
        Region([1, 1])
    with pytest.raises(ValueError):
        Region([-1, 3])


def test_region_is_read_only():
    r = R(0, 1)
    with pytest.raises(ValueError):
        r.pixels[0] = 7


def test_iou_examples():
    assert iou(R(0, 1, 2), R(0, 1, 2)) == 1
    assert iou(R(0, 1), R(4, 5)) == 0
    assert iou(R(0, 1, 2), R(0, 1)) == Fraction(2, 3)


@given(pixel_sets, pixel_sets)
def test_iou_properties(a, b):
    ra, rb = Region(sorted(a)), Region(sorted(b))
    v = iou(ra, rb)
    assert isinstance(v, Fraction)
    assert v == iou(rb, ra)
    assert 0 <= v <= 1
    assert (v == 1) == (a == b)
    assert (v == 0) == (not a & b)
    assert v == Fraction(len(a & b), len(a | b))


def test_label_map_examples():
    assert np.array_equal(label_map_from_regions([], (2, 2)), np.zeros((2, 2)))
    assert label_map_from_regions([R(0), R(3)], (2, 2)).ravel().tolist() == [1, 0, 0, 2]
    with pytest.raises(OverlapError):
        label_map_from_regions([R(0, 1), R(1, 2)], (2, 2))


@given(st.lists(st.integers(0, 5), min_size=16, max_size=16))
def test_label_map_round_trip(assignment):
    # build disjoint regions from a random pixel -> group assignment
    groups = {}
    for pix, g in enumerate(assignment):
        if g:
            groups.setdefault(g, []).append(pix)
    regions = [Region(groups[g]) for g in sorted(groups)]
    labels = label_map_from_regions(regions, (4, 4))
    assert regions_from_label_map(labels) == regions
