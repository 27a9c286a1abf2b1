"""Candidate selection over a whole sequence.

1. Build one candidate forest per frame.
2. Initial state: select every root whose tree is a single chain and drop
   that tree from the residual forest.
3. Up to ``iterations`` rounds, all computed from one state snapshot:
   EMD between the selections of each consecutive frame pair, H-EMD from
   each side's unmatched instances into the neighbour's residual forest,
   per-tree arbitration between flows arriving from the left and right,
   then one synchronous update. A round that selects nothing is a fixed
   point and ends the loop early (``early_stop``).
4. Padding: add every remaining residual root.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from hemd.core import Region, label_map_from_regions
from hemd.errors import ConfigError, DisjointnessError
from hemd.forest import CandidateForest, build_forest
from hemd.ilp import SolverStats, solve_exact
from hemd.match_models import DEFAULT_DELTA, MatchProblem, as_fraction, build_emd_problem, build_hemd_problem
from hemd.probmap_io import ProbMap, check_sequence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    tau: float = 0.5
    delta: Fraction = DEFAULT_DELTA
    iterations: int = 10
    connectivity: int = 8
    early_stop: bool = True
    symmetric_hemd_gate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "delta", as_fraction(self.delta))
        if not 0 <= self.tau <= 1:
            raise ConfigError(f"tau must lie in [0, 1], got {self.tau}")
        if self.delta <= 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.connectivity not in (4, 8):
            raise ConfigError(f"connectivity must be 4 or 8, got {self.connectivity}")

    def echo(self) -> dict:
        return {
            "tau": self.tau,
            "delta": float(self.delta),
            "T": self.iterations,
            "connectivity": self.connectivity,
            "early_stop": self.early_stop,
            "symmetric_hemd_gate": self.symmetric_hemd_gate,
        }


@dataclass(frozen=True)
class FrameState:
    selected: Mapping[int, Region]
    residual: frozenset[int]


@dataclass(frozen=True)
class SelectionState:
    forests: tuple[CandidateForest, ...]
    frames: tuple[FrameState, ...]
    iteration: int = 0

    def __len__(self) -> int:
        return len(self.frames)

    def selected_items(self, w: int) -> list[tuple[int, Region]]:
        sel = self.frames[w].selected
        return [(i, sel[i]) for i in sorted(sel)]

    def residual_forest(self, w: int) -> CandidateForest:
        return self.forests[w].restrict(self.frames[w].residual)


@dataclass(frozen=True)
class TreeFlow:
    pairs: tuple[tuple[int, int, Fraction], ...]  # (ref id, node id, score)
    score: Fraction

    @property
    def nodes(self) -> list[int]:
        return [n for _, n, _ in self.pairs]


Flow = dict[int, TreeFlow]  # residual tree root -> chosen pairs inside that tree


def _frame_state(selected: dict, residual) -> FrameState:
    return FrameState(MappingProxyType(dict(selected)), frozenset(residual))


def build_initial_state(forests: list[CandidateForest]) -> SelectionState:
    frames = []
    for f in forests:
        roots = f.single_path_roots()
        dropped = set()
        for r in roots:
            dropped.update(f.tree(r))
        frames.append(_frame_state({r: f.nodes[r].region for r in roots}, set(f.nodes) - dropped))
    return SelectionState(tuple(forests), tuple(frames), 0)


def _solve(problem: MatchProblem, stats: SolverStats | None = None):
    solution, st = solve_exact(problem)
    if stats is not None:
        stats.merge(st)
    return solution


def emd_partition(state: SelectionState, w: int, delta=DEFAULT_DELTA,
                  stats: SolverStats | None = None, problems: list | None = None) -> tuple[set[int], set[int]]:
    """Selected ids of frames ``w`` and ``w + 1`` left unmatched by EMD."""
    left = state.selected_items(w)
    right = state.selected_items(w + 1)
    problem = build_emd_problem(left, right, delta)
    if problems is not None:
        problems.append(problem)
    solution = _solve(problem, stats)
    matched_left = {problem.variables[j].ref for j in solution.chosen}
    matched_right = {problem.variables[j].target for j in solution.chosen}
    return {i for i, _ in left} - matched_left, {i for i, _ in right} - matched_right


def hemd_directional(state: SelectionState, source: int, target: int, delta=DEFAULT_DELTA,
                     unmatched: set[int] | None = None, symmetric_gate: bool = False,
                     stats: SolverStats | None = None, problems: list | None = None,
                     residual: CandidateForest | None = None) -> Flow:
    if abs(source - target) != 1:
        raise ValueError("H-EMD runs between neighbouring frames only")
    if unmatched is None:
        lo = min(source, target)
        left_un, right_un = emd_partition(state, lo, delta)
        unmatched = left_un if source == lo else right_un
    sel = state.frames[source].selected
    refs = [(i, sel[i]) for i in sorted(unmatched)]
    if not refs:
        return {}
    if residual is None:
        residual = state.residual_forest(target)
    problem = build_hemd_problem(refs, residual, delta, symmetric_gate)
    if problems is not None:
        problems.append(problem)
    solution = _solve(problem, stats)
    grouped = {}
    for j in sorted(solution.chosen):
        v = problem.variables[j]
        grouped.setdefault(residual.root_of(v.target), []).append((v.ref, v.target, v.score))
    return {root: TreeFlow(tuple(pairs), sum((s for _, _, s in pairs), Fraction(0)))
            for root, pairs in sorted(grouped.items())}


def combine_phi(left: Flow | None, right: Flow | None) -> set[int]:
    """Per tree, keep the left flow when its score sum is >= the right one's."""
    left = left or {}
    right = right or {}
    chosen = set()
    for root in set(left) | set(right):
        lf, rf = left.get(root), right.get(root)
        ls = lf.score if lf else Fraction(0)
        rs = rf.score if rf else Fraction(0)
        winner = lf if (lf is not None and ls >= rs) else rf
        if winner is not None:
            chosen.update(winner.nodes)
    return chosen


def update_state(state: SelectionState, delta_s: list[set[int]]) -> SelectionState:
    frames = []
    for w, (fs, new) in enumerate(zip(state.frames, delta_s)):
        if not new:
            frames.append(fs)
            continue
        forest = state.forests[w]
        stale = set(new) - fs.residual
        if stale:
            raise DisjointnessError(f"frame {w}: nodes {sorted(stale)} are not residual")
        selected = dict(fs.selected)
        residual = set(fs.residual)
        for n in sorted(new):
            region = forest.nodes[n].region
            for sid, sreg in selected.items():
                if not region.isdisjoint(sreg):
                    raise DisjointnessError(f"frame {w}: node {n} overlaps selected node {sid}")
            selected[n] = region
            residual -= forest.path_closure(n)
        frames.append(_frame_state(selected, residual))
    return SelectionState(state.forests, tuple(frames), state.iteration + 1)


def pad_remaining(state: SelectionState) -> list[list[Region]]:
    """Final instances per frame, ordered by smallest pixel index."""
    out = []
    for f, fs in zip(state.forests, state.frames):
        regions = list(fs.selected.values())
        for n in sorted(fs.residual):
            parent = f.nodes[n].parent
            if parent is None or parent not in fs.residual:
                regions.append(f.nodes[n].region)
        regions.sort(key=lambda r: r.first)
        out.append(regions)
    return out


@dataclass
class RunResult:
    labels: list[np.ndarray]
    instances: list[list[Region]]
    state: SelectionState
    report: dict = field(default_factory=dict)


ProblemHook = Callable[[int, str, int, int, MatchProblem], None]


def _iterate(state: SelectionState, cfg: PipelineConfig, pool: Executor,
             hook: ProblemHook | None) -> tuple[SelectionState, dict]:
    W = len(state)
    t = state.iteration + 1
    residuals = list(pool.map(state.residual_forest, range(W)))

    emd_stats = [SolverStats() for _ in range(W - 1)]
    emd_probs = [[] for _ in range(W - 1)]
    parts = list(pool.map(lambda w: emd_partition(state, w, cfg.delta, emd_stats[w], emd_probs[w]), range(W - 1)))

    # (source, target, unmatched ids of source)
    jobs = []
    for w, (left_un, right_un) in enumerate(parts):
        jobs.append((w, w + 1, left_un))
        jobs.append((w + 1, w, right_un))
    hemd_stats = [SolverStats() for _ in jobs]
    hemd_probs = [[] for _ in jobs]

    def run_job(k):
        s, d, un = jobs[k]
        return hemd_directional(state, s, d, cfg.delta, un, cfg.symmetric_hemd_gate,
                                hemd_stats[k], hemd_probs[k], residuals[d])

    flows = list(pool.map(run_job, range(len(jobs))))

    from_left = [None] * W
    from_right = [None] * W
    for (s, d, _), flow in zip(jobs, flows):
        if s < d:
            from_left[d] = flow
        else:
            from_right[d] = flow
    delta_s = [combine_phi(from_left[w], from_right[w]) for w in range(W)]

    if hook is not None:
        for w in range(W - 1):
            for p in emd_probs[w]:
                hook(t, "emd", w, w + 1, p)
        for (s, d, _), probs in zip(jobs, hemd_probs):
            for p in probs:
                hook(t, "hemd", s, d, p)

    new_state = update_state(state, delta_s)
    total = SolverStats()
    for st in emd_stats + hemd_stats:
        total.merge(st)
    info = {
        "iteration": t,
        "new_selected": [len(d) for d in delta_s],
        "selected": sum(len(f.selected) for f in new_state.frames),
        "residual": sum(len(f.residual) for f in new_state.frames),
        "solver": {
            "emd_problems": sum(len(p) for p in emd_probs),
            "hemd_problems": sum(len(p) for p in hemd_probs),
            "variables": sum(len(p.variables) for probs in emd_probs + hemd_probs for p in probs),
            "nodes_explored": total.nodes_explored,
            "best_bound": str(total.best_bound),
        },
    }
    log.debug("iteration %d: %s new, solver %.3fs", t, sum(info["new_selected"]), total.elapsed)
    return new_state, info


def segment(frames: list[ProbMap], cfg: PipelineConfig | None = None, threads: int | None = None,
            on_problem: ProblemHook | None = None) -> RunResult:
    """Full selection over a sequence; output is independent of ``threads``."""
    cfg = cfg or PipelineConfig()
    check_sequence(frames)
    shape = frames[0].shape
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=threads) as pool:
        forests = list(pool.map(lambda p: build_forest(p, cfg.tau, cfg.connectivity), frames))
        state = build_initial_state(forests)
        report = {
            "config": cfg.echo(),
            "frames": len(frames),
            "shape": list(shape),
            "forest_nodes": [len(f) for f in forests],
            "initial_selected": [len(f.selected) for f in state.frames],
            "initial_residual": [len(f.residual) for f in state.frames],
            "iterations": [],
        }
        converged = None
        for _ in range(cfg.iterations):
            state, info = _iterate(state, cfg, pool, on_problem)
            report["iterations"].append(info)
            if not any(info["new_selected"]):
                converged = info["iteration"]
                if cfg.early_stop:
                    break
    instances = pad_remaining(state)
    labels = [label_map_from_regions(regs, shape) for regs in instances]
    report["iterations_run"] = len(report["iterations"])
    report["fixed_point_at"] = converged
    report["selected_by_matching"] = [len(f.selected) - n for f, n in zip(state.frames, report["initial_selected"])]
    report["padded"] = [len(regs) - len(f.selected) for regs, f in zip(instances, state.frames)]
    report["instances"] = [len(regs) for regs in instances]
    log.info("segmented %d frames in %.2fs", len(frames), time.perf_counter() - t0)
    return RunResult(labels, instances, state, report)


def run(frames: list[ProbMap], cfg: PipelineConfig | None = None, threads: int | None = None) -> list[np.ndarray]:
    return segment(frames, cfg, threads).labels
