"""Exact maximization of capacity-1 packing programs.

``solve_exact`` splits a problem into independent blocks (variables linked
through shared rows) and runs a depth-first branch-and-bound on each, trying
``x_j = 1`` before ``x_j = 0`` in index order. A node is pruned only when its
bound cannot beat the incumbent strictly, so the first optimum reached is the
lexicographically smallest optimal index set; doing this per block yields the
smallest optimal set of the whole problem.

Upper bound at a node: keep one row per free variable and solve that
relaxation exactly, i.e. sum the best free score of every kept row. Two
assignments (first row, last row of each variable) are evaluated and the
smaller bound used.

All arithmetic is on :class:`fractions.Fraction`.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

from hemd.errors import TooLargeError
from hemd.match_models import MatchProblem

BRUTEFORCE_CAP = 25


@dataclass(frozen=True)
class MatchSolution:
    chosen: frozenset[int]
    objective: Fraction

    @property
    def sorted_chosen(self) -> tuple[int, ...]:
        return tuple(sorted(self.chosen))


@dataclass
class SolverStats:
    nodes_explored: int = 0
    best_bound: Fraction = Fraction(0)
    elapsed: float = 0.0
    blocks: int = 0

    def merge(self, other: "SolverStats") -> None:
        self.nodes_explored += other.nodes_explored
        self.best_bound += other.best_bound
        self.elapsed += other.elapsed
        self.blocks += other.blocks


def check_feasible(p: MatchProblem, s: MatchSolution) -> bool:
    n = len(p.variables)
    for j in s.chosen:
        if not 0 <= j < n:
            raise IndexError(f"variable index {j} out of range for {n} variables")
    return all(sum(1 for j in row if j in s.chosen) <= 1 for row in p.rows)


def _var_rows(p: MatchProblem) -> list[list[int]]:
    rows_of = [[] for _ in p.variables]
    for i, row in enumerate(p.rows):
        for j in row:
            rows_of[j].append(i)
    return rows_of


def _blocks(p: MatchProblem, rows_of) -> list[list[int]]:
    parent = list(range(len(p.variables)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for row in p.rows:
        for j in row[1:]:
            a, b = find(row[0]), find(j)
            if a != b:
                parent[max(a, b)] = min(a, b)
    groups = {}
    for j in range(len(p.variables)):
        groups.setdefault(find(j), []).append(j)
    return [groups[k] for k in sorted(groups)]


class _BlockSolver:
    def __init__(self, scores, rows_of, block):
        self.vars = block  # ascending global indices
        self.scores = [scores[j] for j in block]
        self.rows = [rows_of[j] for j in block]
        self.first = [r[0] for r in self.rows]
        self.last = [r[-1] for r in self.rows]
        self.used = set()
        self.chosen = []
        self.best = Fraction(-1)
        self.best_set = ()
        self.nodes = 0

    def bound(self, k: int) -> Fraction:
        by_first = {}
        by_last = {}
        used = self.used
        for i in range(k, len(self.vars)):
            if any(r in used for r in self.rows[i]):
                continue
            s = self.scores[i]
            a, b = self.first[i], self.last[i]
            if s > by_first.get(a, 0):
                by_first[a] = s
            if s > by_last.get(b, 0):
                by_last[b] = s
        return min(sum(by_first.values(), Fraction(0)), sum(by_last.values(), Fraction(0)))

    def search(self, k: int, value: Fraction) -> None:
        self.nodes += 1
        if k == len(self.vars):
            if value > self.best:
                self.best = value
                self.best_set = tuple(self.chosen)
            return
        if value + self.bound(k) <= self.best:
            return
        rows = self.rows[k]
        if not any(r in self.used for r in rows):
            self.used.update(rows)
            self.chosen.append(self.vars[k])
            self.search(k + 1, value + self.scores[k])
            self.chosen.pop()
            self.used.difference_update(rows)
        self.search(k + 1, value)


def solve_exact(p: MatchProblem) -> tuple[MatchSolution, SolverStats]:
    """Maximum-weight feasible selection; ties go to the smallest sorted index tuple."""
    t0 = time.perf_counter()
    stats = SolverStats()
    if not p.variables:
        stats.elapsed = time.perf_counter() - t0
        return MatchSolution(frozenset(), Fraction(0)), stats
    scores = p.scores
    rows_of = _var_rows(p)
    chosen = []
    total = Fraction(0)
    blocks = _blocks(p, rows_of)
    limit = max(len(b) for b in blocks) + 100
    if sys.getrecursionlimit() < limit:
        sys.setrecursionlimit(limit)
    for block in blocks:
        solver = _BlockSolver(scores, rows_of, block)
        stats.best_bound += solver.bound(0)
        solver.search(0, Fraction(0))
        stats.nodes_explored += solver.nodes
        chosen.extend(solver.best_set)
        total += solver.best
    stats.blocks = len(blocks)
    stats.elapsed = time.perf_counter() - t0
    return MatchSolution(frozenset(chosen), total), stats


def solve_bruteforce(p: MatchProblem) -> MatchSolution:
    """Enumerate every feasible 0/1 assignment and keep the best.

    Assignments that would overfill a row are never extended, which only
    skips infeasible points. Among optima the smallest sorted index tuple
    wins, compared explicitly.
    """
    n = len(p.variables)
    if n > BRUTEFORCE_CAP:
        raise TooLargeError(f"{n} variables exceed the brute-force cap of {BRUTEFORCE_CAP}")
    conflict = [0] * n
    for row in p.rows:
        mask = 0
        for j in row:
            mask |= 1 << j
        for j in row:
            conflict[j] |= mask & ~(1 << j)
    # integer scores on a common denominator; exact and much cheaper than Fraction
    denom = math.lcm(*(v.score.denominator for v in p.variables)) if n else 1
    scores = [int(v.score * denom) for v in p.variables]
    best_val = 0
    best_mask = 0

    stack = [(0, 0, 0)]  # (next index, chosen mask, value)
    while stack:
        k, mask, value = stack.pop()
        if k == n:
            if value > best_val:
                best_val, best_mask = value, mask
            elif value == best_val and mask != best_mask:
                # smaller sorted tuple <=> owns the lowest differing index
                diff = mask ^ best_mask
                if mask & diff & -diff:
                    best_mask = mask
            continue
        stack.append((k + 1, mask, value))
        if not conflict[k] & mask:
            stack.append((k + 1, mask | 1 << k, value + scores[k]))
    chosen = frozenset(j for j in range(n) if best_mask >> j & 1)
    return MatchSolution(chosen, Fraction(best_val, denom))
