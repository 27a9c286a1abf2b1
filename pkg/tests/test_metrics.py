import itertools
from fractions import Fraction

import numpy as np
import pytest

from conftest import R
from hemd.core import Region
from hemd.errors import OverlapError
from hemd.metrics import aji, f1, match_pairs, sequence_scores


def test_match_pairs():
    regs = [R(0, 1), R(5, 6, 7)]
    assert match_pairs(regs, regs) == [(0, 0), (1, 1)]
    assert match_pairs([R(0, 1)], [R(2, 3)]) == []
    assert match_pairs([Region(range(10))], [Region(range(6))]) == [(0, 0)]
    assert match_pairs([Region(range(10))], [Region(range(4))]) == []
    with pytest.raises(OverlapError):
        match_pairs([R(0, 1), R(1, 2)], [])


def test_f1():
    regs = [R(0, 1), R(5, 6, 7)]
    assert f1(regs, regs) == 1
    assert f1(regs, [R(10), R(11)]) == 0
    assert f1(regs, [R(0, 1), R(12)]) == Fraction(1, 2)
    assert f1([], []) == 1
    assert f1(regs, []) == 0 and f1([], regs) == 0


def test_aji():
    regs = [R(0, 1), R(5, 6, 7)]
    assert aji(regs, regs) == 1
    assert aji([R(0, 1, 2)], [R(0, 1)]) == Fraction(2, 3)
    assert aji([R(0, 1, 2)], [R(5, 6)]) == 0


def test_aji_unused_prediction_penalty():
    # gt {0,1}; preds {0,1,2} (picked) and {9} (unused)
    assert aji([R(0, 1)], [R(0, 1, 2), R(9)]) == Fraction(2, 3 + 1)


def test_aji_shared_prediction():
    # one merged prediction serves both gt instances and is counted twice in the union
    gt = [R(0, 1), R(2, 3)]
    pred = [R(0, 1, 2, 3)]
    assert aji(gt, pred) == Fraction(2 + 2, 4 + 4)


def test_aji_argmax_tie_lowest_index():
    gt = [R(1, 2)]
    pred = [R(0, 1), R(2, 3)]  # IoU 1/3 each; pred 0 is picked, pred 1 penalized
    assert aji(gt, pred) == Fraction(1, 3 + 2)


def _aji_brute(gt, pred):
    """Literal set-based AJI with the same conventions."""
    num, den, used = 0, 0, set()
    for g in gt:
        gs = set(g.pixels.tolist())
        ious = [Fraction(len(gs & set(s.pixels.tolist())), len(gs | set(s.pixels.tolist()))) for s in pred]
        if not ious or max(ious) == 0:
            den += len(gs)
            continue
        j = ious.index(max(ious))
        used.add(j)
        sj = set(pred[j].pixels.tolist())
        num += len(gs & sj)
        den += len(gs | sj)
    den += sum(s.size for k, s in enumerate(pred) if k not in used)
    return Fraction(num, den) if den else Fraction(0)


def _random_partition(rng, n_pix, k):
    lab = rng.integers(0, k + 1, n_pix)
    return [Region(np.flatnonzero(lab == i)) for i in range(1, k + 1) if np.any(lab == i)]


@pytest.mark.parametrize("seed", range(30))
def test_aji_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    gt = _random_partition(rng, 40, rng.integers(0, 5))
    pred = _random_partition(rng, 40, rng.integers(0, 5))
    if gt or pred:
        assert aji(gt, pred) == _aji_brute(gt, pred)
    assert 0 <= aji(gt, pred) <= 1


def test_permutation_invariance():
    gt = [R(0, 1, 2), R(10, 11), R(20, 21, 22, 23)]
    pred = [R(0, 1), R(10, 11, 12), R(30)]
    base_f1, base_aji = f1(gt, pred), aji(gt, pred)
    for g in itertools.permutations(gt):
        for p in itertools.permutations(pred):
            assert f1(list(g), list(p)) == base_f1
            assert aji(list(g), list(p)) == base_aji


def test_sequence_mean():
    regs = [R(0, 1)]
    s = sequence_scores([regs, regs], [regs, []])
    assert s["mean_f1"] == Fraction(1, 2)
    assert s["f1"] == [1, 0]
