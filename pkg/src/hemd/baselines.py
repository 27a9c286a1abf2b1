"""Single-frame post-processors used as comparison baselines."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from hemd.core import Region
from hemd.errors import DegenerateError, RangeError, ShapeError
from hemd.forest import components_at
from hemd.probmap_io import ProbMap


def threshold_components(p: ProbMap, th: float = 0.5, connectivity: int = 8) -> list[Region]:
    """Binarize at ``th`` (inclusive) and take connected components."""
    if not 0 <= th <= 1:
        raise RangeError(f"threshold {th} outside [0, 1]")
    return components_at(p, th, connectivity)


def otsu_threshold(p: ProbMap) -> float:
    """Otsu threshold over the 101-level histogram.

    A candidate ``t`` splits pixels into ``level < t`` and ``level >= t``;
    the returned ``t`` minimizes the weighted within-class variance, lowest
    ``t`` on ties.
    """
    hist = np.bincount(p.levels.ravel(), minlength=101).astype(np.int64)
    if np.count_nonzero(hist) < 2:
        raise DegenerateError("Otsu needs at least two distinct probability values")
    lv = np.arange(101, dtype=np.int64)
    best_t, best = None, None
    # exact integer arithmetic: n * within-class variance * n0 * n1 stays integral
    for t in range(1, 101):
        n0, n1 = hist[:t].sum(), hist[t:].sum()
        if n0 == 0 or n1 == 0:
            continue
        s0, s1 = (hist[:t] * lv[:t]).sum(), (hist[t:] * lv[t:]).sum()
        q0, q1 = (hist[:t] * lv[:t] ** 2).sum(), (hist[t:] * lv[t:] ** 2).sum()
        # n0*var0 = q0 - s0^2/n0; scale by n0*n1
        within = (q0 * n0 - s0 * s0) * n1 + (q1 * n1 - s1 * s1) * n0
        score = (int(within), int(n0 * n1))
        if best is None or score[0] * best[1] < best[0] * score[1]:
            best, best_t = score, t
    return best_t / 100


def otsu_components(p: ProbMap, connectivity: int = 8) -> list[Region]:
    return components_at(p, otsu_threshold(p), connectivity)


def max_value_components(fg: ProbMap, boundary: ProbMap, bg: ProbMap, connectivity: int = 8) -> list[Region]:
    """Foreground where the foreground class strictly wins; ties go to background."""
    if not (fg.shape == boundary.shape == bg.shape):
        raise ShapeError("class maps must share one shape")
    total = fg.levels.astype(np.int32) + boundary.levels + bg.levels
    if np.any(total < 99) or np.any(total > 101):
        raise RangeError("per-pixel class probabilities must sum to 1 (within 0.01)")
    mask = (fg.levels > boundary.levels) & (fg.levels > bg.levels)
    structure = np.ones((3, 3), bool) if connectivity == 8 else ndimage.generate_binary_structure(2, 1)
    labels, n = ndimage.label(mask, structure=structure)
    flat = labels.ravel()
    return [Region(np.flatnonzero(flat == k)) for k in range(1, n + 1)]
