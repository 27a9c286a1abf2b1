from fractions import Fraction

import numpy as np
import pytest
from scipy import ndimage

from hemd.core import Region
from hemd.match_models import MatchProblem, MatchVariable
from hemd.probmap_io import ProbMap, quantize


def pmap(rows) -> ProbMap:
    return quantize(np.asarray(rows, dtype=float))


def R(*pixels) -> Region:
    return Region(pixels)


def random_map(rng, shape=(32, 32), smooth=None) -> ProbMap:
    """Random quantized map; ``smooth`` > 0 gives blobby structure with deep trees."""
    raw = rng.random(shape)
    if smooth:
        raw = ndimage.gaussian_filter(raw, smooth)
        lo, hi = raw.min(), raw.max()
        raw = (raw - lo) / (hi - lo + 1e-12)
    return quantize(raw)


def assert_exclusive(instances, labels=None):
    """No pixel belongs to two instances; labels (if given) render them exactly."""
    seen = set()
    for r in instances:
        pix = set(r.pixels.tolist())
        assert not (pix & seen)
        seen |= pix
    if labels is not None:
        flat = np.asarray(labels).ravel()
        assert int(np.count_nonzero(flat)) == len(seen)
        for k, r in enumerate(instances, start=1):
            assert np.all(flat[r.pixels] == k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_packing(rng, n_max=20):
    """Mixed structure: EMD-style bipartite rows or H-EMD-style ref + path rows."""
    scores = [Fraction(rng.randint(1, 8), 8) for _ in range(200)]
    if rng.random() < 0.5:
        nr, nt = rng.randint(1, 6), rng.randint(1, 6)
        pairs = [(r, t) for r in range(nr) for t in range(nt)]
        pairs = rng.sample(pairs, min(len(pairs), rng.randint(0, n_max)))
        rows = [[j for j, (r, _) in enumerate(pairs) if r == i] for i in range(nr)]
        rows += [[j for j, (_, t) in enumerate(pairs) if t == i] for i in range(nt)]
        variables = [MatchVariable(r, t, scores[j]) for j, (r, t) in enumerate(pairs)]
    else:
        m = rng.randint(1, 10)
        parent = [None] + [rng.randrange(i) if rng.random() < 0.8 else None for i in range(1, m)]
        children = {i: [c for c in range(m) if parent[c] == i] for i in range(m)}
        leaves = [i for i in range(m) if not children[i]]
        paths = []
        for leaf in leaves:
            path, x = [], leaf
            while x is not None:
                path.append(x)
                x = parent[x]
            paths.append(path)
        nr = rng.randint(1, 5)
        pairs = [(r, d) for r in range(nr) for d in range(m)]
        pairs = rng.sample(pairs, min(len(pairs), rng.randint(0, n_max)))
        rows = [[j for j, (r, _) in enumerate(pairs) if r == i] for i in range(nr)]
        rows += [[j for j, (_, d) in enumerate(pairs) if d in path] for path in paths]
        variables = [MatchVariable(r, d, scores[j]) for j, (r, d) in enumerate(pairs)]
    return MatchProblem(tuple(variables), tuple(tuple(r) for r in rows))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
