"""Instance candidate forests.

Every connected component of a super-level set ``{p >= v}`` for a retained
threshold ``v`` (a value attained in the frame and ``>= tau``) is a
candidate. Candidates from all thresholds form a laminar family, so parent
links to the enclosing component at the next lower threshold give a forest.

Components that stay identical over consecutive thresholds are stored once,
labelled with the lowest threshold at which they appear. The tree is built
max-tree style: pixels are visited by descending level and merged with
union-find, and a node is emitted for every component that grows or merges
at a level.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage

from hemd.core import Region
from hemd.errors import UnknownNodeError
from hemd.probmap_io import ProbMap, to_level


@dataclass(frozen=True)
class CandidateNode:
    id: int
    region: Region
    level: int  # inducing threshold in hundredths
    parent: int | None
    children: tuple[int, ...] = ()

    @property
    def threshold(self) -> float:
        return self.level / 100

    @property
    def size(self) -> int:
        return self.region.size


@dataclass(frozen=True, eq=False)
class CandidateForest:
    nodes: dict[int, CandidateNode]
    shape: tuple[int, int]
    tau: float = 0.5
    connectivity: int = 8
    roots: tuple[int, ...] = field(init=False)
    leaves: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "roots", tuple(sorted(i for i, n in self.nodes.items() if n.parent is None)))
        object.__setattr__(self, "leaves", tuple(sorted(i for i, n in self.nodes.items() if not n.children)))

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id) -> bool:
        return node_id in self.nodes

    def __getitem__(self, node_id: int) -> CandidateNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def ancestors(self, n: int) -> list[int]:
        out = []
        p = self[n].parent
        while p is not None:
            out.append(p)
            p = self.nodes[p].parent
        return out

    def descendants(self, n: int) -> list[int]:
        out = []
        stack = list(self[n].children)
        while stack:
            c = stack.pop()
            out.append(c)
            stack.extend(self.nodes[c].children)
        return out

    def root_of(self, n: int) -> int:
        self[n]
        return self._root_index[n]

    @cached_property
    def _root_index(self) -> dict[int, int]:
        index = {}
        for r in self.roots:
            index[r] = r
            for d in self.descendants(r):
                index[d] = r
        return index

    def tree(self, root: int) -> list[int]:
        return [root] + self.descendants(root)

    def path_closure(self, n: int) -> set[int]:
        """Nodes on any leaf-to-root path through ``n``."""
        return {n, *self.ancestors(n), *self.descendants(n)}

    def leaf_to_root_paths(self) -> list[list[int]]:
        return [[leaf, *self.ancestors(leaf)] for leaf in self.leaves]

    def single_path_roots(self) -> list[int]:
        return [r for r in self.roots if _is_chain(self, r)]

    def restrict(self, keep) -> "CandidateForest":
        """Induced sub-forest on ``keep``; nodes whose parent is dropped become roots.

        ``keep`` should be closed under "surviving ancestor", which holds for
        any set obtained by removing path closures.
        """
        keep = set(keep)
        nodes = {}
        for i in keep:
            n = self[i]
            parent = n.parent if n.parent in keep else None
            children = tuple(c for c in n.children if c in keep)
            nodes[i] = CandidateNode(n.id, n.region, n.level, parent, children)
        return CandidateForest(nodes, self.shape, self.tau, self.connectivity)

    def to_json(self) -> dict:
        return {
            "shape": list(self.shape),
            "tau": self.tau,
            "connectivity": self.connectivity,
            "nodes": [
                {
                    "id": n.id,
                    "threshold": n.threshold,
                    "size": n.size,
                    "parent": n.parent,
                    "children": list(n.children),
                }
                for n in (self.nodes[i] for i in sorted(self.nodes))
            ],
            "roots": list(self.roots),
            "leaves": list(self.leaves),
            "single_path_roots": self.single_path_roots(),
        }


def _is_chain(forest: CandidateForest, root: int) -> bool:
    n = forest.nodes[root]
    while n.children:
        if len(n.children) > 1:
            return False
        n = forest.nodes[n.children[0]]
    return True


def distinct_thresholds(p: ProbMap, tau: float = 0.5) -> list[float]:
    return [lv / 100 for lv in _retained_levels(p, tau)]


def _retained_levels(p: ProbMap, tau: float) -> list[int]:
    lv = np.unique(p.levels)
    return [int(v) for v in lv[lv >= to_level(tau)]]


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 8:
        return np.ones((3, 3), dtype=bool)
    if connectivity == 4:
        return ndimage.generate_binary_structure(2, 1)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def components_at(p: ProbMap, v: float, connectivity: int = 8) -> list[Region]:
    """Connected components of ``{p >= v}``, ordered by smallest pixel index."""
    mask = p.levels >= to_level(v)
    labels, n = ndimage.label(mask, structure=_structure(connectivity))
    if n == 0:
        return []
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(1, n + 2))
    # ndimage numbers components in raster order of their first pixel
    return [Region(order[bounds[k]:bounds[k + 1]]) for k in range(n)]


def _neighbour_offsets(connectivity: int) -> list[tuple[int, int]]:
    if connectivity == 4:
        return [(-1, 0), (0, -1), (0, 1), (1, 0)]
    if connectivity == 8:
        return [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def build_forest(p: ProbMap, tau: float = 0.5, connectivity: int = 8) -> CandidateForest:
    h, w = p.shape
    flat = p.levels.ravel()
    offsets = _neighbour_offsets(connectivity)
    retained = _retained_levels(p, tau)
    if not retained:
        return CandidateForest({}, (h, w), tau, connectivity)

    pixels = np.flatnonzero(flat >= retained[0])
    order = pixels[np.lexsort((pixels, -flat[pixels]))]
    lvl_sorted = flat[order]
    breaks = np.flatnonzero(np.diff(lvl_sorted)) + 1
    groups = np.split(order, breaks)

    uf = {}
    members = {}
    current = {}  # uf root -> provisional node index of its component

    def find(x):
        root = x
        while uf[root] != root:
            root = uf[root]
        while uf[x] != root:
            uf[x], x = root, uf[x]
        return root

    # provisional nodes: [level_created, pixels, children]
    prov_level = []
    prov_pixels = []
    prov_children = []
    prov_parent = []

    for group in groups:
        level = int(flat[group[0]])
        kids = {}  # touched uf root -> provisional children gathered this level

        def touch(r):
            if r not in kids:
                kids[r] = [current[r]] if r in current else []

        for p_ in group.tolist():
            uf[p_] = p_
            members[p_] = [p_]
            kids[p_] = []
            row, col = divmod(p_, w)
            for dr, dc in offsets:
                rr, cc = row + dr, col + dc
                if 0 <= rr < h and 0 <= cc < w:
                    q = rr * w + cc
                    if q in uf:
                        a, b = find(p_), find(q)
                        if a == b:
                            continue
                        touch(a)
                        touch(b)
                        if len(members[a]) < len(members[b]):
                            a, b = b, a
                        uf[b] = a
                        members[a].extend(members.pop(b))
                        kids[a].extend(kids.pop(b))
                        current.pop(b, None)

        for r, children in kids.items():
            idx = len(prov_level)
            prov_level.append(level)
            prov_pixels.append(Region(np.sort(np.asarray(members[r], dtype=np.int64))))
            prov_children.append(children)
            prov_parent.append(None)
            for c in children:
                prov_parent[c] = idx
            current[r] = idx

    # lowest threshold at which each component is unchanged
    next_above = {retained[i]: retained[i + 1] for i in range(len(retained) - 1)}
    lowest = retained[0]
    n = len(prov_level)
    collapsed = [lowest if prov_parent[i] is None else next_above[prov_level[prov_parent[i]]] for i in range(n)]
    regions = prov_pixels

    rank = sorted(range(n), key=lambda i: (-collapsed[i], regions[i].first))
    new_id = {old: k for k, old in enumerate(rank)}
    nodes = {}
    for old in rank:
        k = new_id[old]
        parent = None if prov_parent[old] is None else new_id[prov_parent[old]]
        children = tuple(sorted(new_id[c] for c in prov_children[old]))
        nodes[k] = CandidateNode(k, regions[old], collapsed[old], parent, children)
    return CandidateForest(nodes, (h, w), tau, connectivity)


def leaf_to_root_paths(f: CandidateForest) -> list[list[int]]:
    return f.leaf_to_root_paths()


def path_closure(f: CandidateForest, n: int) -> set[int]:
    return f.path_closure(n)


def single_path_roots(f: CandidateForest) -> list[int]:
    return f.single_path_roots()
