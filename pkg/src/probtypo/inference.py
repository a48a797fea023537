"""Exact inference on forest networks.

The workhorse is :func:`calibrate`, a two-pass sum-product sweep vectorised
over a batch of evidence rows (one row per language or per query), so a
whole data set is calibrated with one loop over the variables.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from probtypo import MISSING
from probtypo.graph import Network

MAX_ENUMERATION_VARIABLES = 20
TIE_VALUE = 1


@dataclass(frozen=True)
class Marginal:
    variable: str
    p0: float
    p1: float

    def __post_init__(self):
        if abs(self.p0 + self.p1 - 1.0) > 1e-12 or min(self.p0, self.p1) < 0:
            raise ValueError(f"invalid marginal ({self.p0}, {self.p1})")


@dataclass
class Calibration:
    """Posterior quantities for a batch of evidence rows.

    marginals: (batch, n_variables, 2) posterior p(v = x | row evidence)
    pairs: child index -> (batch, 2, 2) posterior p(parent = a, child = b | evidence)
    log_evidence: (batch,) log p(evidence)
    """

    marginals: np.ndarray
    pairs: dict[int, np.ndarray]
    log_evidence: np.ndarray


def check_evidence(n: Network, e: dict[str, int]) -> dict[str, int]:
    for v, x in e.items():
        if v not in n:
            raise KeyError(f"evidence on unknown variable {v!r}")
        if x not in (0, 1):
            raise ValueError(f"evidence value for {v!r} must be 0 or 1, got {x!r}")
    return e


def evidence_matrix(n: Network, rows: list[dict[str, int]]) -> np.ndarray:
    out = np.full((len(rows), len(n.variables)), MISSING, dtype=np.int8)
    for b, e in enumerate(rows):
        check_evidence(n, e)
        for v, x in e.items():
            out[b, n.index(v)] = x
    return out


class _Plan:
    """Index arrays for a network; cheap to build, built per call (no caching)."""

    def __init__(self, n: Network):
        st = n.structure
        self.order = [n.index(v) for v in st.topological_order()]
        self.parent = np.array([-1 if n.parent[v] is None else n.index(n.parent[v]) for v in n.variables])
        self.children = [[] for _ in n.variables]
        for i, p in enumerate(self.parent):
            if p >= 0:
                self.children[p].append(i)
        self.cpts = [n.cpts[v] for v in n.variables]


def calibrate(n: Network, evidence: np.ndarray) -> Calibration:
    """Run upward and downward passes for every row of ``evidence``.

    ``evidence`` is an int array (batch, n_variables) aligned with
    ``n.variables`` holding 0, 1 or ``MISSING``.
    """
    ev = np.asarray(evidence)
    if ev.ndim != 2 or ev.shape[1] != len(n.variables):
        raise ValueError(f"evidence must have shape (batch, {len(n.variables)}), got {ev.shape}")
    plan = _Plan(n)
    batch, nv = ev.shape
    lam = np.ones((nv, batch, 2))
    lam[:, :, 0] = ev.T != 1
    lam[:, :, 1] = ev.T != 0

    up = np.empty((nv, batch, 2))
    msg = np.empty((nv, batch, 2))  # message from node to its parent
    log_ev = np.zeros(batch)
    for v in reversed(plan.order):
        u = lam[v].copy()
        for c in plan.children[v]:
            u *= msg[c]
        s = u.sum(axis=1)
        u /= s[:, None]
        log_ev += np.log(s)
        up[v] = u
        if plan.parent[v] >= 0:
            msg[v] = u @ plan.cpts[v].T
        else:
            log_ev += np.log(u @ plan.cpts[v][0])

    marg = np.empty((batch, nv, 2))
    pairs: dict[int, np.ndarray] = {}
    for v in plan.order:
        p = plan.parent[v]
        if p < 0:
            b = up[v] * plan.cpts[v][0]
            marg[:, v] = b / b.sum(axis=1, keepdims=True)
        else:
            # parent belief with this child's own upward message divided out
            outside = marg[:, p] / msg[v]
            joint = outside[:, :, None] * plan.cpts[v][None, :, :] * up[v][:, None, :]
            joint /= joint.sum(axis=(1, 2), keepdims=True)
            pairs[v] = joint
            marg[:, v] = joint.sum(axis=1)
    return Calibration(marg, pairs, log_ev)


def posterior_p1(n: Network, evidence: np.ndarray) -> np.ndarray:
    """(batch, n_variables) array of p(v = 1 | row evidence)."""
    return calibrate(n, evidence).marginals[:, :, 1]


def bp_marginal(n: Network, e: dict[str, int], target: str) -> Marginal:
    t = n.index(target)
    check_evidence(n, e)
    if target in e:
        x = e[target]
        return Marginal(target, float(1 - x), float(x))
    m = calibrate(n, evidence_matrix(n, [e])).marginals[0, t]
    return Marginal(target, float(m[0]), float(1.0 - m[0]))


def bp_marginals(n: Network, e: dict[str, int]) -> dict[str, Marginal]:
    m = calibrate(n, evidence_matrix(n, [e])).marginals[0]
    return {v: Marginal(v, float(m[i, 0]), float(1.0 - m[i, 0])) for i, v in enumerate(n.variables)}


def _completion_table(n: Network, e: dict[str, int]) -> tuple[np.ndarray, np.ndarray]:
    """Every completion of ``e`` (rows aligned with ``n.variables``) and its joint probability."""
    check_evidence(n, e)
    if len(n.variables) > MAX_ENUMERATION_VARIABLES:
        raise ValueError(f"enumeration capped at {MAX_ENUMERATION_VARIABLES} variables, network has {len(n.variables)}")
    free = [i for i, v in enumerate(n.variables) if v not in e]
    rows = np.empty((2 ** len(free), len(n.variables)), dtype=np.int64)
    rows[:, free] = np.array(list(itertools.product((0, 1), repeat=len(free))), dtype=np.int64).reshape(2 ** len(free), len(free))
    for v, x in e.items():
        rows[:, n.index(v)] = x
    prob = np.ones(len(rows))
    for i, v in enumerate(n.variables):
        pa = n.parent[v]
        parent_value = 0 if pa is None else rows[:, n.index(pa)]
        prob *= n.cpts[v][parent_value, rows[:, i]]
    return rows, prob


def enumerate_marginal(n: Network, e: dict[str, int], target: str) -> Marginal:
    """Brute-force p(target | e) by summing the joint over every completion."""
    t = n.index(target)
    rows, prob = _completion_table(n, e)
    p0 = prob[rows[:, t] == 0].sum() / prob.sum()
    return Marginal(target, float(p0), float(1.0 - p0))


def enumerate_marginals(n: Network, e: dict[str, int]) -> dict[str, Marginal]:
    rows, prob = _completion_table(n, e)
    z = prob.sum()
    out = {}
    for i, v in enumerate(n.variables):
        p0 = prob[rows[:, i] == 0].sum() / z
        out[v] = Marginal(v, float(p0), float(1.0 - p0))
    return out


def implication_conditional(n: Network, i: str, j: str) -> tuple[float, float]:
    """(p(i = 1 | j = 1), p(i = 1)), both by belief propagation."""
    if i == j:
        raise ValueError("implicand and implicant must differ")
    return bp_marginal(n, {j: 1}, i).p1, bp_marginal(n, {}, i).p1


def decode(n: Network, e: dict[str, int], target: str) -> int:
    """Most probable value of ``target`` given ``e``; an exact 0.5 decodes to 1."""
    if target in e:
        raise ValueError(f"target {target!r} is part of the evidence")
    m = bp_marginal(n, e, target)
    return 1 if m.p1 > m.p0 else 0 if m.p1 < m.p0 else TIE_VALUE


def decode_matrix(p1: np.ndarray) -> np.ndarray:
    return np.where(p1 > 0.5, 1, np.where(p1 < 0.5, 0, TIE_VALUE)).astype(np.int8)
