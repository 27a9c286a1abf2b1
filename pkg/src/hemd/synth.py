"""Deterministic synthetic probability-map videos with ground truth.

Each cell contributes a cone ``peak * max(0, 1 - dist / radius)`` around its
centre; overlapping cells combine by per-pixel maximum, so touching cells
fuse into one super-level component at low thresholds while keeping two
peaks. Ground truth for a cell is where its own quantized cone is >= 0.5;
a pixel claimed by several cells goes to the lowest cell index.

Scenario JSON::

    {
      "height": 64, "width": 64, "frames": 10, "seed": 0,
      "noise": 0.0, "background": 0.0,
      "cells": [
        {"start": 0, "peak": 1.0, "radius": 10,
         "centers": [[32, 20], [32, 21], ...],
         "split": {"frame": 5, "daughters": [
             {"peak": 1.0, "radius": 8, "centers": [[28, 40], ...]},
             {"peak": 1.0, "radius": 8, "centers": [[36, 40], ...]}]}}
      ]
    }

``centers`` lists one (row, col) per frame from ``start``; ``radius`` may be a
scalar or a per-frame list. A split ends the cell before ``split.frame`` and
starts each daughter there. Noise is uniform in ``[-noise, noise]``, at most
0.05, added before quantization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hemd.core import Region
from hemd.errors import ConfigError
from hemd.probmap_io import ProbMap, quantize

MAX_NOISE = 0.05


@dataclass
class Track:
    centers: list[tuple[float, float]]
    radius: float | list[float] = 8.0
    peak: float = 1.0
    start: int = 0
    split_frame: int | None = None
    daughters: list["Track"] = field(default_factory=list)

    def radius_at(self, k: int) -> float:
        return self.radius[k] if isinstance(self.radius, list) else self.radius

    @property
    def end(self) -> int:
        """One past the last frame this cell is drawn in."""
        stop = self.start + len(self.centers)
        return min(stop, self.split_frame) if self.split_frame is not None else stop


@dataclass
class Scenario:
    height: int
    width: int
    frames: int
    cells: list[Track]
    seed: int = 0
    noise: float = 0.0
    background: float = 0.0

    def validate(self) -> None:
        if self.frames < 1:
            raise ConfigError("a scenario needs at least one frame")
        if self.height < 1 or self.width < 1:
            raise ConfigError("frame size must be positive")
        if not 0 <= self.noise <= MAX_NOISE:
            raise ConfigError(f"noise amplitude must lie in [0, {MAX_NOISE}]")
        if not 0 <= self.background < 0.5:
            raise ConfigError("background level must lie in [0, 0.5)")
        for t in self.flat_tracks():
            if not 0.5 < t.peak <= 1.0:
                raise ConfigError(f"peak {t.peak} outside (0.5, 1.0]")
            radii = t.radius if isinstance(t.radius, list) else [t.radius]
            if any(r < 1 for r in radii):
                raise ConfigError("radii must be at least one pixel")
            if isinstance(t.radius, list) and len(t.radius) != len(t.centers):
                raise ConfigError("per-frame radius list must match centers")
            if t.start < 0:
                raise ConfigError("track start must be >= 0")

    def flat_tracks(self) -> list[Track]:
        """Cells in index order; daughters follow right after their mother."""
        out = []

        def walk(t):
            out.append(t)
            for d in t.daughters:
                walk(d)

        for c in self.cells:
            walk(c)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        def track(td, start_default=0):
            split = td.get("split")
            t = Track(
                centers=[tuple(c) for c in td["centers"]],
                radius=td.get("radius", 8.0),
                peak=td.get("peak", 1.0),
                start=td.get("start", start_default),
            )
            if split is not None:
                t.split_frame = int(split["frame"])
                t.daughters = [track(dd, t.split_frame) for dd in split.get("daughters", [])]
            return t

        try:
            s = cls(
                height=int(d["height"]), width=int(d["width"]), frames=int(d["frames"]),
                cells=[track(c) for c in d.get("cells", [])],
                seed=int(d.get("seed", 0)), noise=float(d.get("noise", 0.0)),
                background=float(d.get("background", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed scenario: {exc}") from exc
        s.validate()
        return s

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


def cone(shape, center, radius, peak) -> np.ndarray:
    rows, cols = np.indices(shape, dtype=np.float64)
    dist = np.hypot(rows - center[0], cols - center[1])
    return peak * np.maximum(0.0, 1.0 - dist / radius)


def render(s: Scenario) -> tuple[list[ProbMap], list[list[Region]]]:
    """Probability frames and per-frame ground-truth instances."""
    s.validate()
    shape = (s.height, s.width)
    tracks = s.flat_tracks()
    rng = np.random.default_rng(s.seed)
    frames, truth = [], []
    for w in range(s.frames):
        prob = np.full(shape, s.background, dtype=np.float64)
        owner = np.zeros(shape, dtype=np.int64)  # 0 = unclaimed, else cell index + 1
        for ci, t in enumerate(tracks):
            if not t.start <= w < t.end:
                continue
            k = w - t.start
            profile = cone(shape, t.centers[k], t.radius_at(k), t.peak)
            prob = np.maximum(prob, profile)
            own = quantize(profile).levels >= 50
            owner[own & (owner == 0)] = ci + 1
        if s.noise > 0:
            prob = prob + rng.uniform(-s.noise, s.noise, size=shape)
        frames.append(quantize(np.clip(prob, 0.0, 1.0)))
        labels = owner.ravel()
        truth.append([Region(np.flatnonzero(labels == ci + 1)) for ci in np.unique(labels[labels > 0]) - 1])
    return frames, truth


# -- built-in scenarios used by tests and the CLI --------------------------

def merge_scenario(frames: int = 10, touch_from: int = 4, size: int = 64, radius: float = 12.0,
                   gap: float = 1.0, noise: float = 0.0, seed: int = 0) -> Scenario:
    """Two cells approaching; from frame ``touch_from`` (0-based) their 0.5
    discs overlap by ``gap`` pixels and stay put."""
    cy = size / 2
    touching_half = radius / 2 - gap / 2  # centre offset where the discs overlap by ``gap``
    left, right = [], []
    for w in range(frames):
        if w < touch_from:
            half = touching_half + 2.0 * (touch_from - w) + 2.0
        else:
            half = touching_half
        left.append((cy, size / 2 - half))
        right.append((cy, size / 2 + half))
    return Scenario(size, size, frames,
                    [Track(left, radius, 1.0), Track(right, radius, 1.0)], seed=seed, noise=noise)


def split_scenario(frames: int = 8, split_at: int = 4, size: int = 64, noise: float = 0.0,
                   seed: int = 0) -> Scenario:
    """One mother cell dividing at ``split_at``; the daughters are born
    touching and drift apart."""
    cy, cx = size / 2, size / 2
    r_mother, r_daughter = 14.0, 10.0
    mother = Track([(cy, cx)] * split_at, r_mother, 1.0)
    up, down = [], []
    for k in range(frames - split_at):
        half = r_daughter / 2 - 0.5 + 2.5 * k
        up.append((cy - half, cx))
        down.append((cy + half, cx))
    mother.split_frame = split_at
    mother.daughters = [Track(up, r_daughter, 1.0, split_at), Track(down, r_daughter, 1.0, split_at)]
    return Scenario(size, size, frames, [mother], seed=seed, noise=noise)
