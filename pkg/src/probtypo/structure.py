"""Structure learning: PC skeleton search reduced to a maximum-MI spanning forest."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from probtypo import MISSING
from probtypo.corpus import FeatureMatrix
from probtypo.graph import Structure

logger = logging.getLogger(__name__)

MIN_COMPLETE_CASES = 25
# deeper conditioning on sparse data removes real edges on thin complete-case samples
DEFAULT_MAX_COND = 0


@dataclass(frozen=True)
class CITestResult:
    statistic: float
    dof: int
    p_value: float
    n_effective: int
    insufficient: bool = False


@dataclass
class Skeleton:
    variables: tuple[str, ...]
    edges: set[frozenset] = field(default_factory=set)
    sepsets: dict[frozenset, tuple[str, ...]] = field(default_factory=dict)

    def adjacent(self, v: str) -> list[str]:
        return sorted(next(iter(e - {v})) for e in self.edges if v in e)

    def has_edge(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self.edges

    def edge_list(self) -> list[tuple[str, str]]:
        return sorted(tuple(sorted(e)) for e in self.edges)


def g2_statistic(table: np.ndarray) -> tuple[float, int]:
    """G^2 = 2 sum O ln(O/E) summed over strata of a (strata, 2, 2) count array.

    Strata in which either margin is degenerate (a row or column total of
    zero) carry no information and are skipped, each reducing the degrees
    of freedom by one.
    """
    table = np.asarray(table, dtype=float).reshape(-1, 2, 2)
    g2, dof = 0.0, 0
    for t in table:
        n = t.sum()
        rows, cols = t.sum(axis=1), t.sum(axis=0)
        if n == 0 or (rows == 0).any() or (cols == 0).any():
            continue
        expected = np.outer(rows, cols) / n
        nz = t > 0
        g2 += 2.0 * float(np.sum(t[nz] * np.log(t[nz] / expected[nz])))
        dof += 1
    return g2, dof


def _ci_test_values(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> CITestResult:
    """G^2 test on aligned int columns (MISSING allowed); ``z`` has shape (n, k)."""
    complete = (x != MISSING) & (y != MISSING)
    if z.shape[1]:
        complete &= (z != MISSING).all(axis=1)
    n_eff = int(complete.sum())
    if n_eff < MIN_COMPLETE_CASES:
        return CITestResult(0.0, 1, 1.0, n_eff, insufficient=True)
    xs, ys = x[complete].astype(np.int64), y[complete].astype(np.int64)
    stratum = np.zeros(n_eff, dtype=np.int64)
    for c in range(z.shape[1]):
        stratum = 2 * stratum + z[complete, c]
    k = 2 ** z.shape[1]
    counts = np.bincount(4 * stratum + 2 * xs + ys, minlength=4 * k).reshape(k, 2, 2)
    g2, dof = g2_statistic(counts)
    if dof == 0:
        # every stratum degenerate: no evidence against independence
        return CITestResult(0.0, 1, 1.0, n_eff, insufficient=True)
    return CITestResult(g2, dof, float(stats.chi2.sf(g2, dof)), n_eff)


def ci_test(m: FeatureMatrix, i: str, j: str, cond=()) -> CITestResult:
    """G^2 likelihood-ratio test of i independent of j given ``cond``, on complete cases."""
    cond = tuple(cond)
    if i == j:
        raise ValueError("ci_test needs two distinct variables")
    if i in cond or j in cond:
        raise ValueError("tested variables may not appear in the conditioning set")
    z = m.values[:, [m.index(c) for c in cond]] if cond else np.empty((len(m.languages), 0), dtype=np.int8)
    return _ci_test_values(m.column(i), m.column(j), z)


def learn_skeleton(m: FeatureMatrix, significance: float = 0.05, max_cond: int = DEFAULT_MAX_COND) -> Skeleton:
    """PC edge removal, starting from the complete graph.

    For conditioning-set sizes 0..max_cond an edge i-j is removed as soon as
    some subset of adj(i)\\{j} or adj(j)\\{i} makes the test non-significant.
    Adjacency sets are frozen at the start of each size level and candidates
    are visited in lexicographic order, so the result does not depend on the
    column order of ``m``.
    """
    names = sorted(m.variable_ids)
    col = {v: m.values[:, m.index(v)] for v in names}
    sk = Skeleton(tuple(names), {frozenset(p) for p in itertools.combinations(names, 2)})

    for size in range(max_cond + 1):
        adj = {v: sk.adjacent(v) for v in names}
        if all(len(a) - 1 < size for a in adj.values()):
            break
        for a, b in sk.edge_list():
            if not sk.has_edge(a, b):
                continue
            for x, y in ((a, b), (b, a)):
                candidates = [v for v in adj[x] if v != y]
                removed = False
                for cond in itertools.combinations(candidates, size):
                    z = np.stack([col[c] for c in cond], axis=1) if cond else np.empty((len(m.languages), 0), np.int8)
                    res = _ci_test_values(col[a], col[b], z)
                    if res.p_value > significance or res.insufficient:
                        sk.edges.discard(frozenset((a, b)))
                        sk.sepsets[frozenset((a, b))] = cond
                        removed = True
                        break
                if removed:
                    break
        logger.info("skeleton level %d: %d edges remain", size, len(sk.edges))
    return sk


def mutual_information(x: np.ndarray, y: np.ndarray) -> float:
    """Empirical MI (nats) between two binary columns on their complete cases."""
    ok = (x != MISSING) & (y != MISSING)
    n = int(ok.sum())
    if n == 0:
        return 0.0
    joint = np.bincount(2 * x[ok].astype(np.int64) + y[ok].astype(np.int64), minlength=4).reshape(2, 2) / n
    px, py = joint.sum(axis=1), joint.sum(axis=0)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log(joint[nz] / np.outer(px, py)[nz])))


def maximum_spanning_forest(variables, weighted_edges) -> list[tuple[str, str]]:
    """Kruskal on (weight, a, b) triples; ties go to the lexicographically smaller edge."""
    root = {v: v for v in variables}

    def find(v):
        while root[v] != v:
            root[v] = root[root[v]]
            v = root[v]
        return v

    kept = []
    for w, a, b in sorted(weighted_edges, key=lambda t: (-t[0], t[1], t[2])):
        ra, rb = find(a), find(b)
        if ra != rb:
            root[ra] = rb
            kept.append((a, b))
    return kept


def orient_forest(variables, edges) -> Structure:
    """Direct each tree away from its highest-degree node (ties: smallest id)."""
    variables = tuple(variables)
    nbrs: dict[str, list[str]] = {v: [] for v in variables}
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    parent: dict[str, str | None] = {}
    for v in sorted(variables):
        if v in parent:
            continue
        # collect v's tree, then pick its root
        comp, stack = set(), [v]
        while stack:
            u = stack.pop()
            if u not in comp:
                comp.add(u)
                stack.extend(nbrs[u])
        root = min(comp, key=lambda u: (-len(nbrs[u]), u))
        parent[root] = None
        queue = [root]
        while queue:
            u = queue.pop(0)
            for w in sorted(nbrs[u]):
                if w not in parent:
                    parent[w] = u
                    queue.append(w)
    return Structure(variables, parent)


def orient_and_forestify(s: Skeleton, m: FeatureMatrix) -> Structure:
    weighted = [(mutual_information(m.column(a), m.column(b)), a, b) for a, b in s.edge_list()]
    kept = maximum_spanning_forest(s.variables, weighted)
    return orient_forest(m.variable_ids, kept)


def learn_structure(m: FeatureMatrix, significance: float = 0.05, max_cond: int = DEFAULT_MAX_COND) -> Structure:
    return orient_and_forestify(learn_skeleton(m, significance, max_cond), m)
