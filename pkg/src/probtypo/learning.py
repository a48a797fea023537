"""MAP parameter estimation: add-alpha count-and-divide, and EM under missing data."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from probtypo import MISSING
from probtypo.corpus import FeatureMatrix
from probtypo.graph import Network, SmoothingPrior, Structure
from probtypo.inference import calibrate

logger = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-8


class MissingDataError(ValueError):
    pass


@dataclass
class SufficientStats:
    """Expected counts per family: shape (1, 2) for roots, (2, 2) [parent, child] otherwise."""

    counts: dict[str, np.ndarray]
    log_likelihood: float = 0.0


@dataclass
class FitReport:
    iterations: int = 0
    log_posterior_trace: list[float] = field(default_factory=list)
    converged: bool = False
    dev_log_likelihood: float | None = None

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "log_posterior_trace": self.log_posterior_trace,
            "converged": self.converged,
            "dev_log_likelihood": self.dev_log_likelihood,
        }


def aligned_values(n_or_structure, m: FeatureMatrix) -> np.ndarray:
    """Columns of ``m`` reordered to the network's variables (absent ones missing)."""
    variables = n_or_structure.variables
    out = np.full((len(m.languages), len(variables)), MISSING, dtype=np.int8)
    for k, v in enumerate(variables):
        if v in m._index:
            out[:, k] = m.values[:, m.index(v)]
    return out


def _family_counts(structure: Structure, values: np.ndarray, require_complete: bool) -> dict[str, np.ndarray]:
    """Hard counts from cases where the child (and its parent) are observed."""
    idx = {v: k for k, v in enumerate(structure.variables)}
    counts = {}
    for k, v in enumerate(structure.variables):
        x = values[:, k]
        pa = structure.parent.get(v)
        if pa is None:
            ok = x != MISSING
            counts[v] = np.bincount(x[ok].astype(np.int64), minlength=2).reshape(1, 2).astype(float)
        else:
            y = values[:, idx[pa]]
            ok = (x != MISSING) & (y != MISSING)
            counts[v] = np.bincount(2 * y[ok].astype(np.int64) + x[ok], minlength=4).reshape(2, 2).astype(float)
        if require_complete and not ok.all():
            raise MissingDataError(f"variable {v!r} has missing cells; use em_fit for incomplete data")
    return counts


def m_step(stats: SufficientStats, prior: SmoothingPrior) -> dict[str, np.ndarray]:
    """CPT cell = (expected count + alpha) / (family total + 2 alpha)."""
    a = prior.alpha
    return {v: (c + a) / (c.sum(axis=1, keepdims=True) + 2 * a) for v, c in stats.counts.items()}


def map_fit_complete(structure: Structure, m: FeatureMatrix, prior: SmoothingPrior = SmoothingPrior()) -> Network:
    values = aligned_values(structure, m)
    counts = _family_counts(structure, values, require_complete=True)
    return Network(structure.variables, dict(structure.parent), m_step(SufficientStats(counts), prior), prior.alpha)


def e_step(n: Network, m: FeatureMatrix) -> SufficientStats:
    """Expected family counts with exact posteriors from one batched BP sweep.

    Observed cells contribute hard counts (their posterior is a point mass);
    missing cells contribute the model's posterior pseudocounts. Per-language
    contributions are summed in language order.
    """
    values = aligned_values(n, m)
    cal = calibrate(n, values)
    counts = {}
    for k, v in enumerate(n.variables):
        if n.parent[v] is None:
            counts[v] = cal.marginals[:, k, :].sum(axis=0).reshape(1, 2)
        else:
            counts[v] = cal.pairs[k].sum(axis=0)
    return SufficientStats(counts, float(cal.log_evidence.sum()))


def log_prior(n: Network, prior: SmoothingPrior) -> float:
    """Log density (up to a constant) of the prior whose MAP is add-alpha smoothing."""
    return float(sum(prior.alpha * np.log(c).sum() for c in n.cpts.values()))


def log_likelihood(n: Network, m: FeatureMatrix) -> float:
    return float(calibrate(n, aligned_values(n, m)).log_evidence.sum())


def em_fit(
    structure: Structure,
    m: FeatureMatrix,
    prior: SmoothingPrior = SmoothingPrior(),
    tol: float = 1e-4,
    max_iter: int = 100,
    dev: FeatureMatrix | None = None,
) -> tuple[Network, FitReport]:
    """MAP-EM starting from complete-case add-alpha estimates.

    Each iteration runs an E-step at the current parameters (which also
    yields their observed-data log-likelihood), records the log-posterior,
    and applies the M-step. Stops when the log-posterior moves by less than
    ``tol`` between consecutive iterations or after ``max_iter`` iterations.
    """
    values = aligned_values(structure, m)
    init = _family_counts(structure, values, require_complete=False)
    n = Network(structure.variables, dict(structure.parent), m_step(SufficientStats(init), prior), prior.alpha)
    report = FitReport()
    for it in range(1, max_iter + 1):
        stats = e_step(n, m)
        report.log_posterior_trace.append(stats.log_likelihood + log_prior(n, prior))
        report.iterations = it
        n = Network(n.variables, n.parent, m_step(stats, prior), prior.alpha)
        trace = report.log_posterior_trace
        if len(trace) >= 2 and trace[-1] < trace[-2] - MONOTONE_SLACK:
            logger.warning("log-posterior decreased at iteration %d: %r -> %r", it, trace[-2], trace[-1])
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) < tol:
            report.converged = True
            break
        if not (values == MISSING).any() and it == 1:
            # complete data: the M-step answer is already the fixed point
            report.converged = True
            break
    if dev is not None:
        report.dev_log_likelihood = log_likelihood(n, dev)
    return n, report
