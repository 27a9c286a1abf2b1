"""Instance-level F1 (IoU >= 0.5 detection) and aggregated Jaccard index.

Both are exact :class:`~fractions.Fraction` values. Sequences are scored as
the mean of per-frame values.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from hemd.core import Region, check_disjoint, iou

MATCH_IOU = Fraction(1, 2)


def _overlaps(gt: list[Region], pred: list[Region]) -> dict[tuple[int, int], int]:
    """Intersection sizes of all overlapping (gt, pred) pairs."""
    if not gt or not pred:
        return {}
    npix = max(int(r.pixels[-1]) for r in gt + pred) + 1
    owner = np.full(npix, -1, dtype=np.int64)
    for k, s in enumerate(pred):
        owner[s.pixels] = k
    out = {}
    for i, g in enumerate(gt):
        hits = owner[g.pixels]
        ks, counts = np.unique(hits[hits >= 0], return_counts=True)
        for k, c in zip(ks.tolist(), counts.tolist()):
            out[(i, k)] = c
    return out


def match_pairs(gt: list[Region], pred: list[Region]) -> list[tuple[int, int]]:
    check_disjoint(gt)
    check_disjoint(pred)
    pairs = []
    for (i, k), inter in sorted(_overlaps(gt, pred).items()):
        if Fraction(inter, gt[i].size + pred[k].size - inter) >= MATCH_IOU:
            pairs.append((i, k))
    assert len({i for i, _ in pairs}) == len(pairs) and len({k for _, k in pairs}) == len(pairs)
    return pairs


def f1(gt: list[Region], pred: list[Region]) -> Fraction:
    tp = len(match_pairs(gt, pred))
    if not gt and not pred:
        return Fraction(1)
    if not gt or not pred:
        return Fraction(0)
    # 2PR/(P+R) with P = tp/|pred|, R = tp/|gt|
    return Fraction(2 * tp, len(gt) + len(pred))


def aji(gt: list[Region], pred: list[Region]) -> Fraction:
    """Aggregated intersection over aggregated union.

    Each gt instance pairs with its max-IoU prediction (lowest index on ties;
    a prediction may serve several gt instances). Predictions never picked
    add their full size to the union. A gt instance without any overlapping
    prediction adds its own size to the union only.
    """
    check_disjoint(gt)
    check_disjoint(pred)
    if not gt and not pred:
        return Fraction(1)
    inter = _overlaps(gt, pred)
    by_gt = {}
    for (i, k), c in inter.items():
        by_gt.setdefault(i, []).append((k, c))
    num = 0
    den = 0
    used = set()
    for i, g in enumerate(gt):
        best_k, best_iou, best_c = None, Fraction(0), 0
        for k, c in sorted(by_gt.get(i, [])):
            score = Fraction(c, g.size + pred[k].size - c)
            if score > best_iou:
                best_k, best_iou, best_c = k, score, c
        if best_k is None:
            den += g.size
            continue
        used.add(best_k)
        num += best_c
        den += g.size + pred[best_k].size - best_c
    den += sum(s.size for k, s in enumerate(pred) if k not in used)
    return Fraction(num, den) if den else Fraction(0)


def sequence_scores(gt_frames: list[list[Region]], pred_frames: list[list[Region]]) -> dict:
    if len(gt_frames) != len(pred_frames):
        raise ValueError("ground truth and prediction have different frame counts")
    f1s = [f1(g, p) for g, p in zip(gt_frames, pred_frames)]
    ajis = [aji(g, p) for g, p in zip(gt_frames, pred_frames)]
    n = len(f1s)
    return {
        "f1": f1s,
        "aji": ajis,
        "mean_f1": sum(f1s, Fraction(0)) / n if n else Fraction(0),
        "mean_aji": sum(ajis, Fraction(0)) / n if n else Fraction(0),
    }
