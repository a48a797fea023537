"""Discovery of probabilistic implications p(implicand | implicants) vs p(implicand)."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np
from scipy import stats

from probtypo import MISSING
from probtypo.corpus import FeatureMatrix
from probtypo.graph import Network
from probtypo.inference import bp_marginal, calibrate

logger = logging.getLogger(__name__)

MIN_GROUP = 10
MIN_SUPPORT = 10
QUERY_CHUNK = 2048


class UndefinedError(ValueError):
    """An empirical conditional over an empty group of languages."""


@dataclass(frozen=True)
class Implication:
    implicants: tuple[str, ...]
    implicand: str
    p_cond: float
    p_prior: float
    effect: float
    p_raw: float
    p_corrected: float
    n_tests: int
    n_group: int

    def to_row(self) -> dict:
        d = asdict(self)
        d["implicants"] = " & ".join(self.implicants)
        return d


def welch_p_values(n_a, k_a, n_b, k_b) -> np.ndarray:
    """Two-tailed Welch t-test p-values for 0/1 samples given sizes and counts of ones.

    Groups smaller than ``MIN_GROUP`` are untestable and get p = 1. When both
    sample variances vanish the test is decided by whether the means agree.
    """
    n_a, k_a, n_b, k_b = (np.asarray(a, dtype=float) for a in (n_a, k_a, n_b, k_b))
    with np.errstate(divide="ignore", invalid="ignore"):
        mean_a, mean_b = k_a / n_a, k_b / n_b
        var_a = k_a * (n_a - k_a) / (n_a * (n_a - 1))
        var_b = k_b * (n_b - k_b) / (n_b * (n_b - 1))
        sa, sb = var_a / n_a, var_b / n_b
        se2 = sa + sb
        t = (mean_a - mean_b) / np.sqrt(se2)
        df = se2**2 / (sa**2 / (n_a - 1) + sb**2 / (n_b - 1))
        p = 2.0 * stats.t.sf(np.abs(t), df)
    degenerate = se2 == 0
    p = np.where(degenerate, np.where(mean_a == mean_b, 1.0, 0.0), p)
    p = np.where((n_a < MIN_GROUP) | (n_b < MIN_GROUP), 1.0, p)
    return np.clip(p, 0.0, 1.0)


def _check_variables(n: Network, m: FeatureMatrix, names):
    for v in names:
        if v not in n:
            raise KeyError(f"unknown variable {v!r}")
        m.index(v)


def _implicant_mask(m: FeatureMatrix, implicants) -> np.ndarray:
    mask = np.ones(len(m.languages), dtype=bool)
    for v in implicants:
        mask &= m.column(v) == 1
    return mask


def test_implication(n: Network, m: FeatureMatrix, implicants, implicand: str) -> Implication:
    """Model conditional vs prior, with a Welch t-test on the observed languages.

    Group A: languages with every implicant observed as 1 and the implicand
    observed. Group B: every language with the implicand observed. The
    returned record is uncorrected (``n_tests`` = 1).
    """
    implicants = tuple(sorted(implicants))
    if not implicants:
        raise ValueError("need at least one implicant")
    if implicand in implicants:
        raise ValueError("implicand may not be one of the implicants")
    _check_variables(n, m, implicants + (implicand,))
    p_cond = bp_marginal(n, {v: 1 for v in implicants}, implicand).p1
    p_prior = bp_marginal(n, {}, implicand).p1
    y = m.column(implicand)
    obs = y != MISSING
    group_a = _implicant_mask(m, implicants) & obs
    p_raw = float(welch_p_values(group_a.sum(), (y[group_a] == 1).sum(), obs.sum(), (y[obs] == 1).sum()))
    return Implication(
        implicants, implicand, p_cond, p_prior, abs(p_cond - p_prior), p_raw, p_raw, 1, int(group_a.sum())
    )


test_implication.__test__ = False  # not a pytest test despite the name


def empirical_conditional(m: FeatureMatrix, implicants, implicand: str) -> float:
    """Share of implicand = 1 among languages observing all implicants as 1 and the implicand."""
    y = m.column(implicand)
    group = _implicant_mask(m, implicants) & (y != MISSING)
    if not group.any():
        raise UndefinedError(f"no language observes {sorted(implicants)} = 1 together with {implicand!r}")
    return float((y[group] == 1).mean())


def enumerate_implicant_sets(m: FeatureMatrix, variables, max_implicants: int, min_support: int = MIN_SUPPORT):
    """Implicant sets (as sorted index tuples into ``variables``) with joint support >= min_support.

    Support only shrinks as a set grows, so sets are grown one variable at a
    time from supported sets. Members never share a source feature.
    """
    ones = np.stack([m.column(v) == 1 for v in variables], axis=1)
    ones_f = ones.astype(float)
    source = [m.variables[m.index(v)].source_feature for v in variables]
    level = [((j,), ones[:, j]) for j in range(len(variables)) if ones[:, j].sum() >= min_support]
    out = [s for s, _ in level]
    for _ in range(1, max_implicants):
        nxt = []
        for members, mask in level:
            start = members[-1] + 1
            if start >= len(variables):
                continue
            support = mask.astype(float) @ ones_f[:, start:]
            taken = {source[j] for j in members}
            for off in np.flatnonzero(support >= min_support):
                j = start + int(off)
                if source[j] not in taken:
                    nxt.append((members + (j,), mask & ones[:, j]))
        level = nxt
        out.extend(s for s, _ in level)
    return out


def discover(
    n: Network,
    m: FeatureMatrix,
    max_implicants: int = 3,
    level: float = 0.05,
    min_support: int = MIN_SUPPORT,
) -> tuple[list[Implication], int]:
    """Every significant (implicant set, implicand) pair after Bonferroni correction.

    Returns the implications with corrected p below ``level`` sorted by effect
    (descending, then by ids) together with the number of tests performed.
    """
    variables = sorted(v for v in m.variable_ids if v in n)
    if len(variables) < 2:
        return [], 0
    sets = enumerate_implicant_sets(m, variables, max_implicants, min_support)
    source = np.array([m.variables[m.index(v)].source_feature for v in variables])

    y = np.stack([m.column(v) for v in variables], axis=1)
    obs = (y != MISSING).astype(float)
    is_one = (y == 1).astype(float)
    ones = is_one.astype(bool)
    n_b, k_b = obs.sum(axis=0), is_one.sum(axis=0)

    net_idx = np.array([n.index(v) for v in variables])
    prior = calibrate(n, np.full((1, len(n.variables)), MISSING, np.int8)).marginals[0, net_idx, 1]

    def allowed(members):
        ok = np.ones(len(variables), dtype=bool)
        ok[list(members)] = False
        ok &= ~np.isin(source, source[list(members)])
        return ok

    n_tests = int(sum(allowed(s).sum() for s in sets))
    logger.info("%d implicant sets, %d tests", len(sets), n_tests)

    found: list[Implication] = []
    for start in range(0, len(sets), QUERY_CHUNK):
        chunk = sets[start : start + QUERY_CHUNK]
        masks = np.ones((len(chunk), len(m.languages)), dtype=bool)
        ev = np.full((len(chunk), len(n.variables)), MISSING, dtype=np.int8)
        for r, members in enumerate(chunk):
            for j in members:
                masks[r] &= ones[:, j]
                ev[r, net_idx[j]] = 1
        fm = masks.astype(float)
        n_a, k_a = fm @ obs, fm @ is_one
        p_raw = welch_p_values(n_a, k_a, n_b[None, :], k_b[None, :])
        hits = np.argwhere(p_raw * n_tests < level)
        if not len(hits):
            continue
        cond = calibrate(n, ev).marginals[:, net_idx, 1]
        for r, t in hits:
            members = chunk[r]
            if not allowed(members)[t]:
                continue
            pc, pp, pr = float(cond[r, t]), float(prior[t]), float(p_raw[r, t])
            found.append(
                Implication(
                    tuple(variables[j] for j in members),
                    variables[t],
                    pc,
                    pp,
                    abs(pc - pp),
                    pr,
                    min(1.0, pr * n_tests),
                    n_tests,
                    int(n_a[r, t]),
                )
            )
    found.sort(key=lambda imp: (-imp.effect, imp.implicants, imp.implicand))
    return found, n_tests


# ---------------------------------------------------------------- known universals


def load_universals() -> dict:
    with resources.files("probtypo").joinpath("data/universals.json").open(encoding="utf-8") as fh:
        return json.load(fh)


def resolve_label(label: str, m: FeatureMatrix, universals: dict | None = None) -> str | None:
    """Variable id in ``m`` for a human-readable value label such as 'Postpositions'."""
    universals = universals or load_universals()
    for candidate in universals["aliases"].get(label, []):
        if candidate in m._index:
            return candidate
    return None


def label_index(m: FeatureMatrix, universals: dict | None = None) -> dict[str, str]:
    """Variable id -> human-readable label for every aliased variable present in ``m``."""
    universals = universals or load_universals()
    out = {}
    for label, ids in universals["aliases"].items():
        for v in ids:
            if v in m._index:
                out.setdefault(v, label)
    return out


def annotate(imp: Implication, labels: dict[str, str], universals: dict | None = None) -> str:
    universals = universals or load_universals()
    got = ({labels.get(v, v) for v in imp.implicants}, labels.get(imp.implicand, imp.implicand))
    for u in universals["universals"]:
        if (set(u["implicants"]), u["implicand"]) == got:
            return u["source"]
    return ""


def format_table(implications, labels: dict[str, str], limit: int | None = None) -> str:
    """Plain-text table: implicants ⊃ implicand, with model probabilities and known-universal notes."""
    universals = load_universals()
    rows = []
    for k, imp in enumerate(implications[:limit] if limit else implications, start=1):
        lhs = ", ".join(labels.get(v, v) for v in imp.implicants)
        rhs = labels.get(imp.implicand, imp.implicand)
        note = annotate(imp, labels, universals)
        rows.append((str(k), lhs, "⊃", rhs, f"{imp.p_cond:.3f}", f"{imp.p_prior:.3f}", f"{imp.p_corrected:.2e}", note))
    header = ("#", "Implicant", "", "Implicand", "p(i|j)", "p(i)", "p_corr", "Known")
    widths = [max(len(r[c]) for r in rows + [header]) for c in range(len(header))]
    fmt = "  ".join("{:<%d}" % w for w in widths)
    lines = [fmt.format(*header).rstrip(), "  ".join("-" * w for w in widths)]
    lines += [fmt.format(*r).rstrip() for r in rows]
    return "\n".join(lines) + "\n"
