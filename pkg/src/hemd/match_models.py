"""Frame-to-frame matching instances as 0/1 packing programs.

Two models are built here:

* EMD: selected instances of one frame against selected instances of the
  neighbouring frame. At most one partner per instance on either side.
* H-EMD: unmatched selected instances against the residual candidate forest
  of the neighbouring frame. At most one partner per instance, and at most
  one chosen node on every leaf-to-root path of the forest, so chosen nodes
  never overlap.

The score of a pair is its IoU. A variable exists only for pairs that overlap
and pass the relative-size gate; all rows have capacity one. Variables are
emitted in descending score order (ties by ref id, then target id) so the
solver's index-order branching tries strong pairs first.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from hemd.core import Region, iou
from hemd.forest import CandidateForest

DEFAULT_DELTA = Fraction(35, 100)
EMD = "EMD"
HEMD = "HEMD"


@dataclass(frozen=True)
class MatchVariable:
    ref: int
    target: int
    score: Fraction


@dataclass(frozen=True)
class MatchProblem:
    variables: tuple[MatchVariable, ...]
    rows: tuple[tuple[int, ...], ...]
    kind: str = EMD
    row_labels: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        n = len(self.variables)
        covered = set()
        for row in self.rows:
            for j in row:
                if not 0 <= j < n:
                    raise IndexError(f"row references variable {j}, problem has {n}")
            covered.update(row)
        if len(covered) != n:
            raise ValueError("every variable must appear in at least one row")
        if any(v.score <= 0 for v in self.variables):
            raise ValueError("variable scores must be positive")

    @property
    def scores(self) -> list[Fraction]:
        return [v.score for v in self.variables]

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "variables": [
                {"index": j, "ref": v.ref, "target": v.target, "score": str(v.score), "score_float": float(v.score)}
                for j, v in enumerate(self.variables)
            ],
            "rows": [
                {"label": list(self.row_labels[i]) if self.row_labels else None, "variables": list(row)}
                for i, row in enumerate(self.rows)
            ],
        }


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def emd_gate(r: Region, d: Region, delta=DEFAULT_DELTA) -> bool:
    """Symmetric relative size change ``2 |r - d| / (r + d) < delta``."""
    a, b = r.size, d.size
    return Fraction(2 * abs(a - b), a + b) < as_fraction(delta)


def hemd_gate(r: Region, d: Region, delta=DEFAULT_DELTA) -> bool:
    """Size change relative to the reference, ``|r - d| / r < delta``."""
    return Fraction(abs(r.size - d.size), r.size) < as_fraction(delta)


def _owner_map(items: Sequence[tuple[int, Region]], npix: int) -> np.ndarray:
    owner = np.full(npix, -1, dtype=np.int64)
    for k, (_, region) in enumerate(items):
        owner[region.pixels] = k
    return owner


def _npix(*groups) -> int:
    top = 0
    for group in groups:
        for _, region in group:
            top = max(top, int(region.pixels[-1]) + 1)
    return top


def _finish(pairs, labels, pair_rows, kind) -> MatchProblem:
    """``pairs``: (ref, target, score); ``pair_rows[(ref, target)]``: row labels it sits in."""
    pairs.sort(key=lambda t: (-t[2], t[0], t[1]))
    members = {label: [] for label in labels}
    for j, (r, d, _) in enumerate(pairs):
        for label in pair_rows[(r, d)]:
            members[label].append(j)
    variables = tuple(MatchVariable(r, d, s) for r, d, s in pairs)
    labels = tuple(labels)
    return MatchProblem(variables, tuple(tuple(members[lb]) for lb in labels), kind, labels)


def build_emd_problem(refs: Sequence[tuple[int, Region]], targets: Sequence[tuple[int, Region]],
                      delta=DEFAULT_DELTA) -> MatchProblem:
    pairs = []
    if refs and targets:
        owner = _owner_map(targets, _npix(refs, targets))
        for rid, r in refs:
            hits = owner[r.pixels]
            for k in np.unique(hits[hits >= 0]).tolist():
                did, d = targets[k]
                if emd_gate(r, d, delta):
                    pairs.append((rid, did, iou(r, d)))
    labels = [("ref", rid) for rid, _ in refs] + [("target", did) for did, _ in targets]
    pair_rows = {(rid, did): (("ref", rid), ("target", did)) for rid, did, _ in pairs}
    return _finish(pairs, labels, pair_rows, EMD)


def build_hemd_problem(refs: Sequence[tuple[int, Region]], residual: CandidateForest,
                       delta=DEFAULT_DELTA, symmetric_gate: bool = False) -> MatchProblem:
    """H-EMD instance; ``symmetric_gate`` swaps in the EMD gate for experiments."""
    gate = emd_gate if symmetric_gate else hemd_gate
    pairs = []
    if refs and len(residual):
        npix = max(_npix(refs), residual.shape[0] * residual.shape[1])
        # deepest residual node per pixel; any overlapping node is an
        # ancestor-or-self of one of these
        owner = np.full(npix, -1, dtype=np.int64)
        for nid in sorted(residual.nodes, key=lambda i: residual.nodes[i].level):
            owner[residual.nodes[nid].region.pixels] = nid
        for rid, r in refs:
            hits = owner[r.pixels]
            deepest = np.unique(hits[hits >= 0]).tolist()
            touched = set(deepest)
            for nid in deepest:
                touched.update(residual.ancestors(nid))
            for nid in sorted(touched):
                d = residual.nodes[nid].region
                if gate(r, d, delta):
                    pairs.append((rid, nid, iou(r, d)))
    paths = residual.leaf_to_root_paths()
    labels = [("ref", rid) for rid, _ in refs] + [("path", path[0]) for path in paths]
    on_path = {}
    for path in paths:
        for nid in path:
            on_path.setdefault(nid, []).append(("path", path[0]))
    pair_rows = {(rid, nid): (("ref", rid), *on_path[nid]) for rid, nid, _ in pairs}
    return _finish(pairs, labels, pair_rows, HEMD)
