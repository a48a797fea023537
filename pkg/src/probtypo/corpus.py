"""WALS-style feature tables: loading, frequency filtering, binarisation and splits."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from probtypo import MISSING

logger = logging.getLogger(__name__)

UNKNOWN_CATEGORY = "Unknown"
# features with more distinct values than this collapse to presence/absence
MAX_ONE_HOT_VALUES = 7
ABSENT_LABEL_PREFIXES = ("no ", "none", "absent", "absence")


class TableError(ValueError):
    """Malformed or inconsistent input table."""


def code_key(code: str):
    """Sort key placing numeric value codes in numeric order before other codes."""
    try:
        return (0, float(code), code)
    except ValueError:
        return (1, 0.0, code)


@dataclass(frozen=True)
class Feature:
    feature_id: str
    category: str
    value_domain: tuple[str, ...]
    # value meaning "the language lacks this"; only used for >7-valued features
    absent_value: str | None = None
    # pre-binarised indicator of a single value: "0" lumps several values
    # together and is exempt from the rare-value rule
    indicator: bool = False


@dataclass
class RawTable:
    """Categorical languages x features table; ``None`` cells are missing."""

    languages: list[str]
    features: list[Feature]
    cells: np.ndarray  # object array, shape (n_languages, n_features)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=object).reshape(len(self.languages), len(self.features))
        _check_unique(self.languages, "language id")
        _check_unique([f.feature_id for f in self.features], "feature id")
        for j, feat in enumerate(self.features):
            domain = set(feat.value_domain)
            for i, value in enumerate(self.cells[:, j]):
                if value is not None and value not in domain:
                    raise TableError(
                        f"value {value!r} of language {self.languages[i]!r} not in domain of {feat.feature_id!r}"
                    )

    def coded_counts(self, j: int) -> dict[str, int]:
        values, counts = np.unique([v for v in self.cells[:, j] if v is not None], return_counts=True)
        return {str(v): int(c) for v, c in zip(values, counts)}


@dataclass(frozen=True)
class Variable:
    variable_id: str
    source_feature: str
    value_label: str
    category: str


@dataclass
class FeatureMatrix:
    """Binary languages x variables matrix; ``MISSING`` (-1) marks unobserved cells."""

    languages: list[str]
    variables: list[Variable]
    values: np.ndarray  # int8, shape (n_languages, n_variables)
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int8).reshape(len(self.languages), len(self.variables))
        _check_unique(self.languages, "language id")
        _check_unique(self.variable_ids, "variable id")
        if not np.isin(self.values, (0, 1, MISSING)).all():
            raise TableError("matrix cells must be 0, 1 or missing")
        self._index = {v.variable_id: k for k, v in enumerate(self.variables)}

    @property
    def variable_ids(self) -> list[str]:
        return [v.variable_id for v in self.variables]

    @property
    def observed(self) -> np.ndarray:
        return self.values != MISSING

    def index(self, variable_id: str) -> int:
        try:
            return self._index[variable_id]
        except KeyError:
            raise KeyError(f"unknown variable {variable_id!r}") from None

    def column(self, variable_id: str) -> np.ndarray:
        return self.values[:, self.index(variable_id)]

    def categories(self) -> dict[str, list[str]]:
        """Category name -> variable ids, both in first-appearance order."""
        out: dict[str, list[str]] = {}
        for v in self.variables:
            out.setdefault(v.category, []).append(v.variable_id)
        return out

    def subset(self, languages) -> FeatureMatrix:
        rows = {lang: i for i, lang in enumerate(self.languages)}
        keep = [lang for lang in languages]
        return FeatureMatrix(keep, list(self.variables), self.values[[rows[lang] for lang in keep]])

    def select(self, variable_ids) -> FeatureMatrix:
        cols = [self.index(v) for v in variable_ids]
        return FeatureMatrix(list(self.languages), [self.variables[c] for c in cols], self.values[:, cols])


@dataclass(frozen=True)
class Split:
    train: tuple[str, ...]
    dev: tuple[str, ...]
    test: tuple[str, ...]
    seed: int

    def to_json(self) -> dict:
        return {"seed": self.seed, "train": list(self.train), "dev": list(self.dev), "test": list(self.test)}

    @classmethod
    def from_json(cls, d: dict) -> Split:
        return cls(tuple(d["train"]), tuple(d["dev"]), tuple(d["test"]), int(d["seed"]))


def _check_unique(ids, what):
    seen = set()
    for x in ids:
        if x in seen:
            raise TableError(f"duplicate {what} {x!r}")
        seen.add(x)


# ---------------------------------------------------------------- loading


def load_categories(path) -> dict[str, tuple[str, str | None, bool]]:
    """Read a category map CSV.

    Required columns ``feature_id,category``; optional ``absent_value`` and
    ``indicator`` (1/true marks a pre-binarised single-value indicator).
    """
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[:2] != ["feature_id", "category"]:
            raise TableError(f"{path}: header must start with feature_id,category")
        for row in reader:
            if None in row:
                raise TableError(f"{path}:{reader.line_num}: too many columns")
            if row["category"] is None:
                raise TableError(f"{path}:{reader.line_num}: expected at least 2 columns")
            absent = row.get("absent_value") or None
            indicator = (row.get("indicator") or "").strip().lower() in ("1", "true", "yes")
            out[row["feature_id"]] = (row["category"], absent, indicator)
    return out


def load_table(path, categories=None) -> RawTable:
    """Parse a languages-as-rows CSV; empty strings become missing.

    ``categories`` is either a path to a category map CSV or a mapping
    ``feature_id -> category`` (or ``-> (category, absent_value, indicator)``).
    """
    path = Path(path)
    if categories is not None and not isinstance(categories, dict):
        categories = load_categories(categories)
    categories = categories or {}

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, strict=True)
        try:
            header = next(reader)
        except StopIteration:
            raise TableError(f"{path}: empty file") from None
        except csv.Error as exc:
            raise TableError(f"{path}:1: {exc}") from None
        if not header or header[0] != "language_id":
            raise TableError(f"{path}:1:1: first column must be 'language_id'")
        feature_ids = header[1:]
        languages, rows = [], []
        lineno = 1
        try:
            for row in reader:
                lineno = reader.line_num
                if not row:
                    continue
                if len(row) != len(header):
                    raise TableError(
                        f"{path}:{lineno}:{min(len(row), len(header)) + 1}: expected {len(header)} columns, got {len(row)}"
                    )
                if not row[0]:
                    raise TableError(f"{path}:{lineno}:1: empty language id")
                languages.append(row[0])
                rows.append([v if v != "" else None for v in row[1:]])
        except csv.Error as exc:
            raise TableError(f"{path}:{reader.line_num}: {exc}") from None

    cells = np.empty((len(languages), len(feature_ids)), dtype=object)
    for i, row in enumerate(rows):
        cells[i, :] = row
    features = []
    for j, fid in enumerate(feature_ids):
        entry = categories.get(fid, UNKNOWN_CATEGORY)
        cat, absent, indicator = (tuple(entry) + (None, False))[:3] if isinstance(entry, tuple) else (entry, None, False)
        domain = tuple(sorted({v for v in cells[:, j] if v is not None}, key=code_key))
        features.append(Feature(fid, cat, domain, absent, bool(indicator)))
    return RawTable(languages, features, cells)


def write_table(t: RawTable, path, categories_path=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["language_id"] + [f.feature_id for f in t.features])
        for lang, row in zip(t.languages, t.cells):
            w.writerow([lang] + ["" if v is None else v for v in row])
    if categories_path is not None:
        with open(categories_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature_id", "category", "absent_value", "indicator"])
            for f in t.features:
                w.writerow([f.feature_id, f.category, f.absent_value or "", "1" if f.indicator else ""])


def _read_dicts(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def table_from_cldf(directory) -> RawTable:
    """Convert the three-file WALS CLDF export (languages, parameters, values).

    Categories come from an ``Area`` column of parameters.csv when present,
    otherwise via chapters.csv/areas.csv when those files exist. Code names
    from codes.csv are used to spot the "absent" value of many-valued features.
    """
    d = Path(directory)
    languages = [r["ID"] for r in _read_dicts(d / "languages.csv")]
    params = _read_dicts(d / "parameters.csv")
    values = _read_dicts(d / "values.csv")

    area_of_chapter = {}
    if (d / "chapters.csv").exists():
        area_names = {}
        if (d / "areas.csv").exists():
            area_names = {r["ID"]: r.get("Name", r["ID"]) for r in _read_dicts(d / "areas.csv")}
        for r in _read_dicts(d / "chapters.csv"):
            area = r.get("Area_ID") or r.get("Area") or ""
            area_of_chapter[r["ID"]] = area_names.get(area, area)
    code_names = {}
    if (d / "codes.csv").exists():
        for r in _read_dicts(d / "codes.csv"):
            code_names[(r["Parameter_ID"], str(r.get("Number", r.get("Value", ""))))] = r.get("Name", "")

    feature_ids = [p["ID"] for p in params]
    col = {fid: j for j, fid in enumerate(feature_ids)}
    row = {lang: i for i, lang in enumerate(languages)}
    cells = np.full((len(languages), len(feature_ids)), None, dtype=object)
    for r in values:
        lang, fid, v = r["Language_ID"], r["Parameter_ID"], r["Value"]
        if lang not in row:
            raise TableError(f"values.csv: unknown language {lang!r}")
        if fid not in col:
            raise TableError(f"values.csv: unknown parameter {fid!r}")
        if v != "":
            cells[row[lang], col[fid]] = v

    features = []
    for j, p in enumerate(params):
        fid = p["ID"]
        cat = p.get("Area") or area_of_chapter.get(p.get("Chapter_ID", ""), "") or UNKNOWN_CATEGORY
        domain = tuple(sorted({v for v in cells[:, j] if v is not None}, key=code_key))
        absent = None
        for code in domain:
            if code_names.get((fid, code), "").strip().lower().startswith(ABSENT_LABEL_PREFIXES):
                absent = code
                break
        features.append(Feature(fid, cat, domain, absent))
    return RawTable(languages, features, cells)


# ---------------------------------------------------------------- filtering


def filter_table(t: RawTable, min_langs: int = 100, min_value_frac: float = 0.10) -> RawTable:
    """Drop sparsely coded features and blank out rare values.

    A feature survives only if at least ``min_langs`` languages code it; a
    value held by fewer than ``min_value_frac`` of the feature's coded
    languages is recoded as missing. Both rules are applied until nothing
    changes, so the result is a fixed point (the filter is idempotent). For
    indicator features only the "1" value is subject to the rare-value rule.
    """
    if min_langs < 0 or min_value_frac < 0:
        raise ValueError("thresholds must be nonnegative")
    cells = t.cells.copy()
    alive = list(range(len(t.features)))
    changed = True
    while changed:
        changed = False
        survivors = []
        for j in alive:
            col = cells[:, j]
            coded = [v for v in col if v is not None]
            if len(coded) < min_langs:
                changed = True
                continue
            values, counts = np.unique(coded, return_counts=True)
            rare = {str(v) for v, c in zip(values, counts) if c < min_value_frac * len(coded)}
            if t.features[j].indicator:
                rare.discard("0")
            if rare:
                changed = True
                for i, v in enumerate(col):
                    if v in rare:
                        cells[i, j] = None
            survivors.append(j)
        alive = survivors

    features = []
    for j in alive:
        f = t.features[j]
        present = {v for v in cells[:, j] if v is not None}
        domain = tuple(v for v in f.value_domain if v in present)
        features.append(Feature(f.feature_id, f.category, domain, f.absent_value, f.indicator))
    return RawTable(list(t.languages), features, cells[:, alive].reshape(len(t.languages), len(alive)))


# ---------------------------------------------------------------- binarisation


def binarize(t: RawTable) -> FeatureMatrix:
    """Recode every categorical feature as one or more binary variables.

    * 2 values: one variable named after the feature, 1 for the higher code;
    * 3 to 7 values: one indicator ``feature=value`` per value;
    * more than 7: one presence/absence variable (0 for the absent value).

    Features with a single observed value carry no information and are dropped.
    """
    variables: list[Variable] = []
    columns: list[np.ndarray] = []
    n = len(t.languages)
    for j, f in enumerate(t.features):
        col = t.cells[:, j]
        observed = np.array([v is not None for v in col], dtype=bool)
        present = sorted({v for v in col if v is not None}, key=code_key)
        if len(present) < 2:
            logger.warning("dropping feature %s: fewer than two observed values", f.feature_id)
            continue
        if len(present) == 2:
            hi = present[1]
            out = np.full(n, MISSING, dtype=np.int8)
            out[observed] = [1 if v == hi else 0 for v in col[observed]]
            variables.append(Variable(f.feature_id, f.feature_id, hi, f.category))
            columns.append(out)
        elif len(present) <= MAX_ONE_HOT_VALUES:
            for value in present:
                out = np.full(n, MISSING, dtype=np.int8)
                out[observed] = [1 if v == value else 0 for v in col[observed]]
                variables.append(Variable(f"{f.feature_id}={value}", f.feature_id, value, f.category))
                columns.append(out)
        else:
            absent = f.absent_value
            if absent not in present:
                absent = present[0]
                logger.warning(
                    "feature %s: no absent value declared, treating lowest code %r as absence", f.feature_id, absent
                )
            out = np.full(n, MISSING, dtype=np.int8)
            out[observed] = [0 if v == absent else 1 for v in col[observed]]
            variables.append(Variable(f"{f.feature_id}:present", f.feature_id, "present", f.category))
            columns.append(out)
    values = np.stack(columns, axis=1) if columns else np.empty((n, 0), dtype=np.int8)
    return FeatureMatrix(list(t.languages), variables, values)


def preprocess(t: RawTable, min_langs: int = 100, min_value_frac: float = 0.10) -> FeatureMatrix:
    m = binarize(filter_table(t, min_langs, min_value_frac))
    keep = m.observed.any(axis=1)
    return m.subset([lang for lang, k in zip(m.languages, keep) if k])


# ---------------------------------------------------------------- splits


def split_languages(m: FeatureMatrix, seed: int) -> Split:
    """Seeded 80/10/10 partition; dev and test get floor(N/10), train the rest."""
    n = len(m.languages)
    if n < 10:
        raise ValueError(f"need at least 10 languages to split, got {n}")
    order = sorted(m.languages)
    perm = np.random.default_rng(seed).permutation(n)
    shuffled = [order[i] for i in perm]
    n_held = n // 10
    dev = shuffled[:n_held]
    test = shuffled[n_held : 2 * n_held]
    train = shuffled[2 * n_held :]
    return Split(tuple(sorted(train)), tuple(sorted(dev)), tuple(sorted(test)), seed)


# ---------------------------------------------------------------- serialisation


def write_matrix(m: FeatureMatrix, matrix_path, manifest_path, extra: dict | None = None):
    with open(matrix_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["language_id"] + m.variable_ids)
        for lang, row in zip(m.languages, m.values):
            w.writerow([lang] + ["" if v == MISSING else str(int(v)) for v in row])
    manifest = dict(extra or {})
    manifest["variables"] = [
        {
            "variable_id": v.variable_id,
            "source_feature": v.source_feature,
            "value_label": v.value_label,
            "category": v.category,
        }
        for v in m.variables
    ]
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


def read_matrix(matrix_path, manifest_path) -> FeatureMatrix:
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    variables = [
        Variable(d["variable_id"], d["source_feature"], d["value_label"], d["category"]) for d in manifest["variables"]
    ]
    with open(matrix_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[1:] != [v.variable_id for v in variables]:
            raise TableError(f"{matrix_path}: columns do not match manifest {manifest_path}")
        languages, rows = [], []
        for row in reader:
            if not row:
                continue
            languages.append(row[0])
            try:
                rows.append([MISSING if c == "" else int(c) for c in row[1:]])
            except ValueError:
                raise TableError(f"{matrix_path}:{reader.line_num}: cells must be 0, 1 or empty") from None
    values = np.array(rows, dtype=np.int8).reshape(len(languages), len(variables))
    return FeatureMatrix(languages, variables, values)
