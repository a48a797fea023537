import argparse
import json
from pathlib import Path

import numpy as np
import pytest

from probtypo import cli
from probtypo.graph import Network
from probtypo.synthetic import random_forest_network, sample


@pytest.fixture(scope="module")
def dataset(tmp_path_factory) -> tuple[Path, Path]:
    """400 languages: 8 two-valued features from a strong forest plus one 4-valued feature."""
    d = tmp_path_factory.mktemp("data")
    rng = np.random.default_rng(0)
    n = random_forest_network(8, rng, strong=True, prefix="f")
    x = sample(n, 400, rng)
    four = rng.integers(1, 5, 400)
    x_missing = rng.random(x.shape) < 0.15
    lines = ["language_id," + ",".join(n.variables) + ",g"]
    for i in range(400):
        cells = ["" if x_missing[i, j] else str(int(x[i, j]) + 1) for j in range(8)]
        lines.append(f"lang{i:03d}," + ",".join(cells) + f",{four[i]}")
    (d / "features.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    cats = ["feature_id,category"] + [f"{v},{'Order' if k < 4 else 'Sound'}" for k, v in enumerate(n.variables)]
    (d / "categories.csv").write_text("\n".join(cats + ["g,Sound"]) + "\n", encoding="utf-8")
    return d / "features.csv", d / "categories.csv"


def _base(dataset, workdir):
    return ["--input", str(dataset[0]), "--categories", str(dataset[1]), "--workdir", str(workdir)]


FAST = ["--max-sets", "5", "--max-implicants", "2"]


@pytest.fixture(scope="module")
def fitted(dataset, tmp_path_factory):
    wd = tmp_path_factory.mktemp("run")
    assert cli.main(["pipeline", *_base(dataset, wd), *FAST]) == 0
    return wd


def test_pipeline_writes_every_artifact(fitted):
    for name in [cli.MATRIX, cli.MANIFEST, cli.NETWORK, cli.FIT_REPORT, cli.SPLIT, cli.IMPLICATIONS_CSV,
                 cli.IMPLICATIONS_JSON, cli.IMPLICATIONS_TABLE, cli.REPORT_CSV, cli.REPORT_JSON]:
        assert (fitted / name).exists(), name
    hashes = {json.loads((fitted / f).read_text())["config_hash"] for f in
              [cli.MANIFEST, cli.NETWORK, cli.FIT_REPORT, cli.SPLIT, cli.IMPLICATIONS_JSON, cli.REPORT_JSON]}
    assert len(hashes) == 1
    report = json.loads((fitted / cli.FIT_REPORT).read_text())
    assert report["converged"]


def test_rerun_is_byte_identical(dataset, fitted, tmp_path):
    assert cli.main(["pipeline", *_base(dataset, tmp_path), *FAST]) == 0
    for name in [cli.MATRIX, cli.MANIFEST, cli.NETWORK, cli.IMPLICATIONS_CSV, cli.REPORT_CSV, cli.REPORT_JSON]:
        assert (tmp_path / name).read_bytes() == (fitted / name).read_bytes(), name


def test_fit_recovers_planted_edges(fitted, dataset):
    truth = random_forest_network(8, np.random.default_rng(0), strong=True, prefix="f")
    n = Network.from_json(json.loads((fitted / cli.NETWORK).read_text()))
    learned = {frozenset(e) for e in n.structure.edges()}
    planted = {frozenset(e) for e in truth.structure.edges()}
    assert planted <= learned


def test_predict_prints_marginal(fitted, capsys):
    n = Network.from_json(json.loads((fitted / cli.NETWORK).read_text()))
    target = next(v for v in n.variables if n.parent[v] is None)
    assert cli.main(["predict", "--workdir", str(fitted), "-t", target]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["evidence"] == {} and out["p1"] == pytest.approx(n.cpts[target][0, 1], abs=1e-12)
    other = next(v for v in n.variables if v != target)
    assert cli.main(["predict", "--workdir", str(fitted), "-e", f"{other}=1", "-t", target]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["evidence"] == {other: 1} and out["decoded"] in (0, 1)


def test_predict_target_in_evidence_exits_2(fitted, capsys):
    assert cli.main(["predict", "--workdir", str(fitted), "-e", "f0=1", "-t", "f0"]) == 2
    assert "part of the evidence" in capsys.readouterr().err


def test_predict_bad_evidence_exits_2(fitted, capsys):
    assert cli.main(["predict", "--workdir", str(fitted), "-e", "f0=yes", "-t", "f1"]) == 2
    assert cli.main(["predict", "--workdir", str(fitted), "-e", "nope=1", "-t", "f1"]) == 2


def test_missing_input_exits_2(tmp_path, capsys):
    code = cli.main(["preprocess", "--input", str(tmp_path / "no.csv"), "--categories", str(tmp_path / "no.csv"),
                     "--workdir", str(tmp_path)])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_fit_without_preprocess_exits_2(tmp_path):
    assert cli.main(["fit", "--workdir", str(tmp_path)]) == 2


def test_invalid_flag_value_exits_2(dataset, tmp_path):
    assert cli.main(["preprocess", *_base(dataset, tmp_path), "--alpha", "0"]) == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["preprocess", "--alpha", "abc"])
    assert exc.value.code == 2


def test_internal_error_exits_1(fitted, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("boom")

    monkeypatch.setattr(cli.experiments, "run_prediction_grid", boom)
    assert cli.main(["evaluate", "--workdir", str(fitted)]) == 1


def test_implications_outputs_are_consistent(fitted):
    payload = json.loads((fitted / cli.IMPLICATIONS_JSON).read_text())
    csv_rows = (fitted / cli.IMPLICATIONS_CSV).read_text().splitlines()
    assert len(csv_rows) - 1 == payload["n_reported"] == len(payload["rows"])
    assert payload["columns"][:2] == ["implicants", "implicand"]


def test_export_dot(fitted, tmp_path):
    out = tmp_path / "net.dot"
    assert cli.main(["export-dot", "--workdir", str(fitted), "--out", str(out)]) == 0
    n = Network.from_json(json.loads((fitted / cli.NETWORK).read_text()))
    text = out.read_text()
    assert text.count("->") == len(n.structure.edges())


def _components(n: Network) -> int:
    return sum(1 for v in n.variables if n.parent[v] is None)


def test_dot_for_chain_and_forest():
    cpt = [[0.5, 0.5], [0.5, 0.5]]
    chain = Network(("a", "b", "c"), {"a": None, "b": "a", "c": "b"}, {"a": [[0.5, 0.5]], "b": cpt, "c": cpt})
    text = cli.to_dot(chain)
    assert text.count("->") == 2 and text.count("[label=") == 3
    forest = Network(("a", "b", "x"), {"a": None, "b": "a", "x": None}, {"a": [[0.5, 0.5]], "b": cpt, "x": [[0.5, 0.5]]})
    pydot = pytest.importorskip("pydot")
    (graph,) = pydot.graph_from_dot_data(cli.to_dot(forest))
    nodes = {node.get_name().strip('"') for node in graph.get_nodes()} - {"node"}
    assert nodes == {"a", "b", "x"}
    edges = {(e.get_source().strip('"'), e.get_destination().strip('"')) for e in graph.get_edges()}
    assert edges == {("a", "b")}
    assert _components(forest) == 2


def test_dot_quotes_awkward_ids():
    pydot = pytest.importorskip("pydot")
    n = Network(('81A=1', 'say "hi"'), {'81A=1': None, 'say "hi"': '81A=1'},
                {'81A=1': [[0.5, 0.5]], 'say "hi"': [[0.5, 0.5], [0.5, 0.5]]})
    (graph,) = pydot.graph_from_dot_data(cli.to_dot(n))
    assert len(graph.get_edges()) == 1


def test_config_round_trip_is_byte_identical(tmp_path):
    cfg = cli.RunConfig(seed=7, alpha=2.5, workdir=str(tmp_path))
    p = tmp_path / "c.json"
    p.write_text(cfg.dumps())
    again = cli.RunConfig.load(p)
    assert again == cfg and again.dumps() == cfg.dumps()


def test_config_hash_ignores_paths():
    a = cli.RunConfig(workdir="x", input="a.csv")
    b = cli.RunConfig(workdir="y", input="b.csv")
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != cli.RunConfig(seed=1).config_hash()


def test_config_validation():
    with pytest.raises(cli.ConfigError, match="alpha"):
        cli.RunConfig(alpha=-1).validate()
    with pytest.raises(cli.ConfigError, match="k_min"):
        cli.RunConfig(k_min=4, k_max=3).validate()
    with pytest.raises(cli.ConfigError, match="unknown config keys"):
        cli.RunConfig.from_json({"nope": 1})


def test_precedence_file_env_flags(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 1, "alpha": 3.0, "level": 0.01}))
    args = argparse.Namespace(config=str(p), seed=None, alpha=4.0)
    env = {"PROBTYPO_SEED": "9", "PROBTYPO_ALPHA": "2", "PROBTYPO_MAX_COND": "2"}
    cfg = cli.resolve_config(args, env)
    assert (cfg.seed, cfg.alpha, cfg.level, cfg.max_cond) == (9, 4.0, 0.01, 2)


def test_bad_env_value():
    with pytest.raises(cli.ConfigError, match="seed"):
        cli.env_overrides({"PROBTYPO_SEED": "x"})


def test_cldf_conversion_command(tmp_path):
    src = tmp_path / "cldf"
    src.mkdir()
    (src / "languages.csv").write_text("ID\nabc\ndef\n", encoding="utf-8")
    (src / "parameters.csv").write_text("ID,Area\n1A,Phonology\n", encoding="utf-8")
    (src / "values.csv").write_text("ID,Language_ID,Parameter_ID,Value\nv1,abc,1A,1\nv2,def,1A,2\n", encoding="utf-8")
    out = tmp_path / "flat"
    assert cli.main(["convert-cldf", "--cldf", str(src), "--out", str(out)]) == 0
    assert (out / "features.csv").read_text().splitlines() == ["language_id,1A", "abc,1", "def,2"]
