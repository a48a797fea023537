"""Seeded random forests, ancestral sampling and MCAR masking for simulation studies."""
from __future__ import annotations

import numpy as np

from probtypo import MISSING
from probtypo.corpus import FeatureMatrix, Variable
from probtypo.graph import Network


def random_forest_network(
    n_nodes: int,
    rng: np.random.Generator,
    *,
    edge_prob: float = 1.0,
    strong: bool = False,
    prefix: str = "v",
) -> Network:
    """Random forest over ``n_nodes`` binary variables.

    Node k > 0 attaches to a uniformly chosen earlier node with probability
    ``edge_prob``. With ``strong=True`` every child row puts >= 0.8 on the
    value that copies or negates the parent, giving clearly detectable edges.
    """
    width = len(str(max(n_nodes - 1, 0)))
    names = tuple(f"{prefix}{k:0{width}d}" for k in range(n_nodes))
    parent: dict[str, str | None] = {names[0]: None} if n_nodes else {}
    for k in range(1, n_nodes):
        parent[names[k]] = names[int(rng.integers(k))] if rng.random() < edge_prob else None
    cpts = {}
    for v in names:
        if parent[v] is None:
            p1 = rng.uniform(0.3, 0.7) if strong else rng.uniform(0.05, 0.95)
            cpts[v] = np.array([[1 - p1, p1]])
        elif strong:
            hi = rng.uniform(0.8, 0.95, size=2)
            rows = np.array([[hi[0], 1 - hi[0]], [1 - hi[1], hi[1]]])
            cpts[v] = rows[:, ::-1] if rng.random() < 0.5 else rows
        else:
            p1 = rng.uniform(0.05, 0.95, size=2)
            cpts[v] = np.stack([1 - p1, p1], axis=1)
    return Network(names, parent, cpts)


def sample(n: Network, size: int, rng: np.random.Generator) -> np.ndarray:
    """Ancestral samples, shape (size, n_variables), columns in ``n.variables`` order."""
    out = np.empty((size, len(n.variables)), dtype=np.int8)
    for v in n.structure.topological_order():
        k = n.index(v)
        pa = n.parent[v]
        p1 = n.cpts[v][0, 1] if pa is None else n.cpts[v][out[:, n.index(pa)], 1]
        out[:, k] = rng.random(size) < p1
    return out


def mask_mcar(values: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    out = values.copy()
    out[rng.random(values.shape) < rate] = MISSING
    return out


def as_matrix(values: np.ndarray, variables, category: str = "Synthetic", languages=None) -> FeatureMatrix:
    if languages is None:
        width = len(str(len(values)))
        languages = [f"L{i:0{width}d}" for i in range(len(values))]
    return FeatureMatrix(list(languages), [Variable(v, v, "1", category) for v in variables], values)


def independent_matrix(n_languages: int, n_variables: int, rng: np.random.Generator) -> FeatureMatrix:
    """Mutually independent columns with marginals drawn from [0.2, 0.8]."""
    p1 = rng.uniform(0.2, 0.8, size=n_variables)
    values = (rng.random((n_languages, n_variables)) < p1).astype(np.int8)
    width = len(str(n_variables - 1))
    return as_matrix(values, [f"x{k:0{width}d}" for k in range(n_variables)])
