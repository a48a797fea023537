"""Command-line pipeline: preprocess, fit, predict, implications, evaluate, export-dot.

Settings resolve in increasing priority: dataclass defaults, a JSON config
file (``--config``), ``PROBTYPO_<FIELD>`` environment variables, then flags.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from probtypo import __version__, corpus, experiments, implications, inference, learning, structure
from probtypo.graph import Network, SmoothingPrior, validate

logger = logging.getLogger("probtypo")

ENV_PREFIX = "PROBTYPO_"
# fields that name files rather than change results; kept out of the config hash
PATH_FIELDS = ("input", "categories", "cldf", "workdir")

MATRIX = "matrix.csv"
MANIFEST = "manifest.json"
NETWORK = "network.json"
FIT_REPORT = "fit_report.json"
SPLIT = "split.json"
IMPLICATIONS_CSV = "implications.csv"
IMPLICATIONS_JSON = "implications.json"
IMPLICATIONS_TABLE = "implications.txt"
REPORT_CSV = "prediction_report.csv"
REPORT_JSON = "prediction_report.json"
DOT = "network.dot"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    input: str | None = None
    categories: str | None = None
    cldf: str | None = None
    workdir: str = "run"
    seed: int = 0
    min_langs: int = 100
    min_value_frac: float = 0.10
    alpha: float = 5.0
    pc_significance: float = 0.05
    max_cond: int = structure.DEFAULT_MAX_COND
    em_tol: float = 1e-4
    em_max_iter: int = 100
    k_min: int = 2
    k_max: int = 6
    max_sets_per_cell: int = 200
    level: float = 0.05
    max_implicants: int = 3

    def validate(self) -> RunConfig:
        checks = [
            (self.min_langs >= 0, "min_langs must be >= 0"),
            (0 <= self.min_value_frac < 1, "min_value_frac must be in [0, 1)"),
            (self.alpha > 0, "alpha must be > 0"),
            (0 < self.pc_significance < 1, "pc_significance must be in (0, 1)"),
            (self.max_cond >= 0, "max_cond must be >= 0"),
            (self.em_tol > 0, "em_tol must be > 0"),
            (self.em_max_iter >= 1, "em_max_iter must be >= 1"),
            (1 <= self.k_min <= self.k_max, "need 1 <= k_min <= k_max"),
            (self.max_sets_per_cell >= 1, "max_sets_per_cell must be >= 1"),
            (0 < self.level < 1, "level must be in (0, 1)"),
            (self.max_implicants >= 1, "max_implicants must be >= 1"),
        ]
        bad = [msg for ok, msg in checks if not ok]
        if bad:
            raise ConfigError("; ".join(bad))
        return self

    @property
    def k_range(self) -> range:
        return range(self.k_min, self.k_max + 1)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, d: dict) -> RunConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**{k: _coerce(k, v) for k, v in d.items()}).validate()

    @classmethod
    def load(cls, path) -> RunConfig:
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_json(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None

    def config_hash(self) -> str:
        """sha256 of the canonical JSON of every result-affecting field."""
        d = {k: v for k, v in self.to_json().items() if k not in PATH_FIELDS}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value):
    kind = _FIELD_TYPES[name]
    if value is None:
        return None
    try:
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot interpret {value!r} as {kind}") from None


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name in _FIELD_TYPES:
        key = ENV_PREFIX + name.upper()
        if key in environ:
            out[name] = _coerce(name, environ[key])
    return out


def resolve_config(args: argparse.Namespace, environ=None) -> RunConfig:
    base = RunConfig.load(args.config).to_json() if getattr(args, "config", None) else RunConfig().to_json()
    base.update(env_overrides(environ))
    for name in _FIELD_TYPES:
        value = getattr(args, name, None)
        if value is not None:
            base[name] = value
    return RunConfig.from_json(base)


# ---------------------------------------------------------------- helpers


def _provenance(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "probtypo_version": __version__}


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{path} not found ({hint})")
    return path


def _load_matrix(cfg: RunConfig) -> corpus.FeatureMatrix:
    wd = Path(cfg.workdir)
    return corpus.read_matrix(
        _require(wd / MATRIX, "run preprocess first"), _require(wd / MANIFEST, "run preprocess first")
    )


def _load_network(path: Path) -> Network:
    with open(_require(path, "run fit first"), encoding="utf-8") as fh:
        return Network.from_json(json.load(fh))


def _load_split(cfg: RunConfig) -> corpus.Split:
    with open(_require(Path(cfg.workdir) / SPLIT, "run fit first"), encoding="utf-8") as fh:
        return corpus.Split.from_json(json.load(fh))


def _dump_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------- commands


def cmd_convert_cldf(cfg: RunConfig, out_dir: str) -> None:
    if not cfg.cldf:
        raise ConfigError("convert-cldf needs --cldf DIR")
    table = corpus.table_from_cldf(cfg.cldf)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus.write_table(table, out / "features.csv", out / "categories.csv")
    print(f"{len(table.languages)} languages, {len(table.features)} features -> {out}")


def cmd_preprocess(cfg: RunConfig) -> corpus.FeatureMatrix:
    if cfg.cldf:
        table = corpus.table_from_cldf(cfg.cldf)
    elif cfg.input:
        if not cfg.categories:
            raise ConfigError("preprocess needs --categories alongside --input")
        table = corpus.load_table(cfg.input, corpus.load_categories(cfg.categories))
    else:
        raise ConfigError("preprocess needs --input/--categories or --cldf")
    m = corpus.preprocess(table, cfg.min_langs, cfg.min_value_frac)
    if not m.variables:
        raise corpus.TableError("no variables survive preprocessing")
    wd = Path(cfg.workdir)
    wd.mkdir(parents=True, exist_ok=True)
    corpus.write_matrix(m, wd / MATRIX, wd / MANIFEST, extra=_provenance(cfg))
    print(f"{len(m.languages)} languages x {len(m.variables)} variables -> {wd}")
    return m


def cmd_fit(cfg: RunConfig) -> tuple[Network, learning.FitReport]:
    m = _load_matrix(cfg)
    split = corpus.split_languages(m, cfg.seed)
    train, dev = m.subset(split.train), m.subset(split.dev)
    st = structure.learn_structure(train, cfg.pc_significance, cfg.max_cond)
    n, report = learning.em_fit(st, train, SmoothingPrior(cfg.alpha), cfg.em_tol, cfg.em_max_iter, dev=dev)
    problems = validate(n)
    if problems:
        raise RuntimeError("fitted network is invalid: " + "; ".join(problems))
    wd = Path(cfg.workdir)
    prov = _provenance(cfg)
    _write(wd / NETWORK, n.dumps(prov))
    _write(wd / FIT_REPORT, _dump_json({**report.to_json(), **prov}))
    _write(wd / SPLIT, _dump_json({**split.to_json(), **prov}))
    print(
        f"{len(n.structure.edges())} edges, EM {report.iterations} iterations "
        f"({'converged' if report.converged else 'not converged'}), dev log-likelihood {report.dev_log_likelihood:.2f}"
    )
    return n, report


def _resolve_variable(n: Network, name: str) -> str:
    if name in n:
        return name
    for candidate in implications.load_universals()["aliases"].get(name, []):
        if candidate in n:
            return candidate
    raise KeyError(f"unknown variable {name!r}")


def parse_evidence(n: Network, items) -> dict[str, int]:
    e: dict[str, int] = {}
    for item in items or []:
        for part in item.split(","):
            if not part.strip():
                continue
            name, sep, value = part.rpartition("=")
            if not sep or value.strip() not in ("0", "1"):
                raise ConfigError(f"evidence must look like VARIABLE=0 or VARIABLE=1, got {part!r}")
            v = _resolve_variable(n, name.strip())
            if v in e and e[v] != int(value):
                raise ConfigError(f"conflicting evidence for {v!r}")
            e[v] = int(value)
    return e


def cmd_predict(cfg: RunConfig, evidence, target: str, network: str | None = None) -> dict:
    n = _load_network(Path(network) if network else Path(cfg.workdir) / NETWORK)
    e = parse_evidence(n, evidence)
    t = _resolve_variable(n, target)
    if t in e:
        raise ConfigError(f"target {t!r} is part of the evidence")
    marg = inference.bp_marginal(n, e, t)
    out = {"target": t, "evidence": e, "p0": marg.p0, "p1": marg.p1, "decoded": inference.decode(n, e, t)}
    print(_dump_json(out), end="")
    return out


def implications_csv(found) -> str:
    buf = io.StringIO()
    fields = [f.name for f in dataclasses.fields(implications.Implication)]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for imp in found:
        row = imp.to_row()
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def cmd_implications(cfg: RunConfig, limit: int = 40) -> list[implications.Implication]:
    n = _load_network(Path(cfg.workdir) / NETWORK)
    m = _load_matrix(cfg)
    train = m.subset(_load_split(cfg).train)
    found, n_tests = implications.discover(n, train, cfg.max_implicants, cfg.level)
    wd = Path(cfg.workdir)
    _write(wd / IMPLICATIONS_CSV, implications_csv(found))
    # column/row layout keeps the file compact; discovery can report ~10^6 rows
    columns = [f.name for f in dataclasses.fields(implications.Implication)]
    payload = {
        "n_tests": n_tests,
        "n_reported": len(found),
        "columns": columns,
        "rows": [[row[c] for c in columns] for row in map(implications.Implication.to_row, found)],
        **_provenance(cfg),
    }
    _write(wd / IMPLICATIONS_JSON, json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":")) + "\n")
    table = implications.format_table(found, implications.label_index(train), limit=limit) if found else "none\n"
    _write(wd / IMPLICATIONS_TABLE, table)
    print(f"{len(found)} significant implications out of {n_tests} tests; top {min(limit, len(found))}:")
    print(table, end="")
    return found


def cmd_evaluate(cfg: RunConfig) -> experiments.PredictionReport:
    n = _load_network(Path(cfg.workdir) / NETWORK)
    m = _load_matrix(cfg)
    report = experiments.run_prediction_grid(n, m, _load_split(cfg), cfg.k_range, cfg.max_sets_per_cell, cfg.seed)
    wd = Path(cfg.workdir)
    _write(wd / REPORT_CSV, report.to_csv())
    _write(wd / REPORT_JSON, report.dumps(_provenance(cfg)))
    print(report.to_csv(), end="")
    return report


def _dot_id(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(n: Network, labels: dict[str, str] | None = None) -> str:
    """Graphviz digraph with one cluster-free node per variable and parent -> child edges."""
    labels = labels or {}
    lines = ["digraph probtypo {", "  rankdir=LR;", "  node [shape=ellipse];"]
    for v in n.variables:
        p1 = n.cpts[v][0, 1] if n.parent[v] is None else None
        text = labels.get(v, v) + (f"\\np1={p1:.2f}" if p1 is not None else "")
        lines.append(f"  {_dot_id(v)} [label={_dot_id(text)}];")
    for parent, child in n.structure.edges():
        lines.append(f"  {_dot_id(parent)} -> {_dot_id(child)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_export_dot(cfg: RunConfig, network: str | None = None, out: str | None = None) -> str:
    n = _load_network(Path(network) if network else Path(cfg.workdir) / NETWORK)
    path = Path(out) if out else Path(cfg.workdir) / DOT
    text = to_dot(n)
    _write(path, text)
    print(f"{len(n.variables)} nodes, {len(n.structure.edges())} edges -> {path}")
    return text


def cmd_pipeline(cfg: RunConfig) -> None:
    cmd_preprocess(cfg)
    cmd_fit(cfg)
    cmd_implications(cfg)
    cmd_evaluate(cfg)


# ---------------------------------------------------------------- argument parsing


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", help="JSON RunConfig file")
    g.add_argument("--input", help="feature CSV (language_id + one column per feature)")
    g.add_argument("--categories", help="category CSV (feature_id,category[,absent_value,indicator])")
    g.add_argument("--cldf", help="WALS-style CLDF directory (languages/parameters/values)")
    g.add_argument("--workdir", help="directory for all artifacts")
    g.add_argument("--seed", type=int)
    g.add_argument("--min-langs", dest="min_langs", type=int)
    g.add_argument("--min-value-frac", dest="min_value_frac", type=float)
    g.add_argument("--alpha", type=float)
    g.add_argument("--significance", dest="pc_significance", type=float, help="PC test level")
    g.add_argument("--max-cond", dest="max_cond", type=int)
    g.add_argument("--em-tol", dest="em_tol", type=float)
    g.add_argument("--em-max-iter", dest="em_max_iter", type=int)
    g.add_argument("--k-min", dest="k_min", type=int)
    g.add_argument("--k-max", dest="k_max", type=int)
    g.add_argument("--max-sets", dest="max_sets_per_cell", type=int)
    g.add_argument("--level", type=float, help="family-wise level for discovery")
    g.add_argument("--max-implicants", dest="max_implicants", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probtypo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert-cldf", help="flatten a CLDF export into features.csv + categories.csv")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    for name, text in [
        ("preprocess", "filter and binarize a feature table"),
        ("fit", "learn the forest and fit CPTs by MAP-EM"),
        ("implications", "discover significant implications"),
        ("evaluate", "held-out feature prediction grid with baselines"),
        ("pipeline", "preprocess, fit, implications and evaluate in one go"),
    ]:
        _add_config_flags(sub.add_parser(name, help=text))
    p = sub.add_parser("predict", help="posterior of one variable given evidence")
    _add_config_flags(p)
    p.add_argument("--network", help="network JSON (default: WORKDIR/network.json)")
    p.add_argument("--evidence", "-e", action="append", help="VAR=0|1, comma-separated or repeated")
    p.add_argument("--target", "-t", required=True)
    p = sub.add_parser("export-dot", help="write the network as Graphviz DOT")
    _add_config_flags(p)
    p.add_argument("--network")
    p.add_argument("--out")
    return parser


USAGE_ERRORS = (ConfigError, corpus.TableError, FileNotFoundError, KeyError, implications.UndefinedError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = resolve_config(args)
        if args.command == "convert-cldf":
            cmd_convert_cldf(cfg, args.out)
        elif args.command == "preprocess":
            cmd_preprocess(cfg)
        elif args.command == "fit":
            cmd_fit(cfg)
        elif args.command == "predict":
            cmd_predict(cfg, args.evidence, args.target, args.network)
        elif args.command == "implications":
            cmd_implications(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        elif args.command == "export-dot":
            cmd_export_dot(cfg, args.network, args.out)
        elif args.command == "pipeline":
            cmd_pipeline(cfg)
    except USAGE_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"probtypo: error: {msg}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        logger.debug("internal error", exc_info=True)
        print(f"probtypo: internal error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
