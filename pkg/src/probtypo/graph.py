"""Forest-structured Bayesian network over binary variables."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_ALPHA = 5.0
NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class SmoothingPrior:
    """Symmetric Dirichlet prior on every CPT row, applied as add-``alpha`` smoothing."""

    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True)
class Structure:
    """Variables plus a parent map in which every node has at most one parent."""

    variables: tuple[str, ...]
    parent: dict[str, str | None]

    def children(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {v: [] for v in self.variables}
        for v in self.variables:
            p = self.parent.get(v)
            if p is not None:
                out[p].append(v)
        return out

    def edges(self) -> list[tuple[str, str]]:
        return [(self.parent[v], v) for v in self.variables if self.parent.get(v) is not None]

    def topological_order(self) -> list[str]:
        """Parents before children; each tree visited breadth-first from its root."""
        children = self.children()
        order = []
        for root in (v for v in self.variables if self.parent.get(v) is None):
            queue = [root]
            while queue:
                v = queue.pop(0)
                order.append(v)
                queue.extend(children[v])
        if len(order) != len(self.variables):
            raise ValueError("parent map contains a cycle")
        return order


@dataclass
class Network:
    """A structure plus conditional probability tables.

    ``cpts[v]`` has shape (1, 2) for a root (its marginal) and (2, 2) for a
    child, where row ``r`` is the distribution of ``v`` given parent value ``r``.
    """

    variables: tuple[str, ...]
    parent: dict[str, str | None]
    cpts: dict[str, np.ndarray]
    alpha: float = DEFAULT_ALPHA
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.variables = tuple(self.variables)
        self.parent = {v: self.parent.get(v) for v in self.variables}
        self.cpts = {v: np.asarray(self.cpts[v], dtype=float) for v in self.variables}
        self._index = {v: i for i, v in enumerate(self.variables)}

    @property
    def structure(self) -> Structure:
        return Structure(self.variables, dict(self.parent))

    def index(self, v: str) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise KeyError(f"unknown variable {v!r}") from None

    def __contains__(self, v) -> bool:
        return v in self._index

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "variables": list(self.variables),
            "parents": {v: self.parent[v] for v in self.variables},
            "cpts": {v: self.cpts[v].tolist() for v in self.variables},
        }

    @classmethod
    def from_json(cls, d: dict) -> Network:
        return cls(tuple(d["variables"]), dict(d["parents"]), {k: np.array(t) for k, t in d["cpts"].items()}, d["alpha"])

    def dumps(self, extra: dict | None = None) -> str:
        payload = self.to_json()
        payload.update(extra or {})
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def joint_probability(n: Network, assignment: dict[str, int]) -> float:
    """Product over variables of p(value | parent value)."""
    missing = [v for v in n.variables if v not in assignment]
    if missing:
        raise ValueError(f"assignment is missing variables: {', '.join(missing)}")
    p = 1.0
    for v in n.variables:
        pa = n.parent[v]
        row = 0 if pa is None else int(assignment[pa])
        p *= n.cpts[v][row, int(assignment[v])]
    return p


def validate(n: Network) -> list[str]:
    """Return a list of violations (empty when the network is well formed)."""
    problems = []
    known = set(n.variables)
    for v in n.variables:
        p = n.parent.get(v)
        if p is not None and p not in known:
            problems.append(f"unknown parent: {v} <- {p}")
        if p == v:
            problems.append(f"cycle: self-loop at {v}")

    # forest check: following parents from any node must terminate
    for v in n.variables:
        seen = {v}
        cur = n.parent.get(v)
        while cur is not None and cur in known:
            if cur in seen:
                problems.append(f"cycle: through {v}")
                break
            seen.add(cur)
            cur = n.parent.get(cur)

    for v in n.variables:
        cpt = n.cpts.get(v)
        if cpt is None:
            problems.append(f"missing cpt: {v}")
            continue
        cpt = np.asarray(cpt, dtype=float)
        rows = 1 if n.parent.get(v) is None else 2
        if cpt.shape != (rows, 2):
            problems.append(f"shape: cpt of {v} is {cpt.shape}, expected {(rows, 2)}")
            continue
        if not np.all(np.isfinite(cpt)) or np.any(cpt < 0) or np.any(cpt > 1):
            problems.append(f"range: cpt of {v} has entries outside [0, 1]")
        sums = cpt.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > NORMALIZATION_TOL):
            problems.append(f"unnormalized: cpt of {v} rows sum to {sums.tolist()}")
    return problems
