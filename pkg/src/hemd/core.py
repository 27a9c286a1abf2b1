"""Regions, IoU and label-map rendering.

Pixels are addressed by their row-major linear index. A :class:`Region` keeps
its indices as a sorted, read-only int64 array so set algebra is a linear
merge and every count is an exact integer.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable

import numpy as np

from hemd.errors import OverlapError, ShapeError


class Region:
    """Immutable non-empty set of linear pixel indices."""

    __slots__ = ("pixels", "_hash")

    def __init__(self, pixels: Iterable[int] | np.ndarray):
        arr = np.array(pixels, dtype=np.int64).ravel()
        if arr.size == 0:
            raise ValueError("a region must contain at least one pixel")
        if arr[0] < 0 or (arr.size > 1 and np.any(np.diff(arr) <= 0)):
            raise ValueError("region indices must be non-negative and strictly increasing")
        arr.flags.writeable = False
        self.pixels = arr
        self._hash = None

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> "Region":
        return cls(np.flatnonzero(np.asarray(mask).ravel()))

    @classmethod
    def from_unsorted(cls, pixels: Iterable[int]) -> "Region":
        return cls(np.unique(np.fromiter(pixels, dtype=np.int64)))

    @property
    def size(self) -> int:
        return int(self.pixels.size)

    @property
    def first(self) -> int:
        return int(self.pixels[0])

    def __len__(self) -> int:
        return self.size

    def __contains__(self, index) -> bool:
        i = np.searchsorted(self.pixels, index)
        return bool(i < self.pixels.size and self.pixels[i] == index)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Region):
            return NotImplemented
        return self.pixels.size == other.pixels.size and bool(np.array_equal(self.pixels, other.pixels))

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.pixels.tobytes())
        return self._hash

    def __repr__(self) -> str:
        if self.size <= 8:
            return f"Region({self.pixels.tolist()})"
        return f"Region(<{self.size} px from {self.first}>)"

    def intersection_size(self, other: "Region") -> int:
        return int(np.intersect1d(self.pixels, other.pixels, assume_unique=True).size)

    def issubset(self, other: "Region") -> bool:
        return self.size <= other.size and self.intersection_size(other) == self.size

    def isdisjoint(self, other: "Region") -> bool:
        if self.pixels[-1] < other.pixels[0] or other.pixels[-1] < self.pixels[0]:
            return True
        return self.intersection_size(other) == 0

    def mask(self, shape: tuple[int, int]) -> np.ndarray:
        out = np.zeros(shape[0] * shape[1], dtype=bool)
        out[self.pixels] = True
        return out.reshape(shape)


def region_size(r: Region) -> int:
    return r.size


def iou(a: Region, b: Region) -> Fraction:
    """Exact intersection over union; ``Fraction(0)`` for disjoint regions."""
    inter = a.intersection_size(b)
    if inter == 0:
        return Fraction(0)
    return Fraction(inter, a.size + b.size - inter)


def label_map_from_regions(regions: list[Region], shape: tuple[int, int]) -> np.ndarray:
    """Render disjoint regions to an int32 label grid, ``regions[k]`` -> label ``k + 1``."""
    h, w = shape
    if h < 1 or w < 1:
        raise ShapeError(f"invalid grid shape {shape}")
    flat = np.zeros(h * w, dtype=np.int32)
    for k, region in enumerate(regions, start=1):
        if region.pixels[-1] >= h * w:
            raise ShapeError(f"region {k} indexes pixel {region.pixels[-1]} outside a {h}x{w} grid")
        if np.any(flat[region.pixels]):
            clash = int(region.pixels[np.flatnonzero(flat[region.pixels])[0]])
            raise OverlapError(f"pixel {clash} is claimed by instances {flat[clash]} and {k}")
        flat[region.pixels] = k
    return flat.reshape(h, w)


def regions_from_label_map(labels: np.ndarray) -> list[Region]:
    """Inverse of :func:`label_map_from_regions`; label ``k`` lands at position ``k - 1``.

    Labels need not be contiguous; absent labels are skipped, so the result
    is ordered by label value.
    """
    flat = np.asarray(labels).ravel()
    if flat.size and flat.min() < 0:
        raise ValueError("labels must be non-negative")
    order = np.argsort(flat, kind="stable")
    sorted_labels = flat[order]
    starts = np.searchsorted(sorted_labels, np.arange(1, int(flat.max(initial=0)) + 2))
    out = []
    for k in range(len(starts) - 1):
        lo, hi = starts[k], starts[k + 1]
        if hi > lo:
            out.append(Region(order[lo:hi]))
    return out


def check_disjoint(regions: list[Region]) -> None:
    """Raise :class:`OverlapError` if any two regions share a pixel."""
    if not regions:
        return
    allpix = np.concatenate([r.pixels for r in regions])
    if np.unique(allpix).size != allpix.size:
        raise OverlapError("regions are not pairwise disjoint")
