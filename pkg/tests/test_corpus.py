import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from probtypo import MISSING
from probtypo import corpus
from probtypo.corpus import Feature, RawTable, TableError


def raw(columns: dict[str, list], categories=None, indicator=()) -> RawTable:
    langs = [f"l{i:03d}" for i in range(len(next(iter(columns.values()))))]
    feats, cols = [], []
    for fid, col in columns.items():
        domain = tuple(sorted({v for v in col if v is not None}, key=corpus.code_key))
        feats.append(Feature(fid, (categories or {}).get(fid, "Cat"), domain, indicator=fid in indicator))
        cols.append(col)
    cells = np.empty((len(langs), len(feats)), dtype=object)
    for j, col in enumerate(cols):
        cells[:, j] = col
    return RawTable(langs, feats, cells)


# ---------------------------------------------------------------- loading


def test_load_small_csv_with_one_missing_cell(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("language_id,f1,f2\nabc,1,2\ndef,2,\n", encoding="utf-8")
    t = corpus.load_table(p, {"f1": "Word Order", "f2": "Phonology"})
    assert t.languages == ["abc", "def"]
    assert [f.feature_id for f in t.features] == ["f1", "f2"]
    assert sum(v is None for v in t.cells.ravel()) == 1
    assert t.features[1].category == "Phonology"


def test_duplicate_language_is_rejected(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("language_id,f1\nabc,1\nabc,2\n", encoding="utf-8")
    with pytest.raises(TableError, match="duplicate language id"):
        corpus.load_table(p)


def test_ragged_row_reports_location(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("language_id,f1,f2\nabc,1,2\ndef,2\n", encoding="utf-8")
    with pytest.raises(TableError, match=r"t\.csv:3:"):
        corpus.load_table(p)


def test_bad_header(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("lang,f1\nabc,1\n", encoding="utf-8")
    with pytest.raises(TableError, match="language_id"):
        corpus.load_table(p)


def test_category_file_with_optional_columns(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("feature_id,category,absent_value,indicator\nf1,Phonology,1,\nf2,Word Order,,1\n", encoding="utf-8")
    cats = corpus.load_categories(p)
    assert cats == {"f1": ("Phonology", "1", False), "f2": ("Word Order", None, True)}


def test_write_then_load_round_trip(tmp_path):
    t = raw({"f": ["1", "2", None], "g": ["a", None, "b"]}, indicator=("g",))
    corpus.write_table(t, tmp_path / "f.csv", tmp_path / "c.csv")
    back = corpus.load_table(tmp_path / "f.csv", tmp_path / "c.csv")
    assert back.languages == t.languages
    assert back.features == t.features
    assert (back.cells == t.cells).all()


def test_cell_outside_domain_is_rejected():
    with pytest.raises(TableError, match="not in domain"):
        RawTable(["x"], [Feature("f", "C", ("1", "2"))], np.array([["3"]], dtype=object))


def test_cldf_conversion(tmp_path):
    (tmp_path / "languages.csv").write_text("ID,Name\nabc,A\ndef,D\nghi,G\n", encoding="utf-8")
    (tmp_path / "parameters.csv").write_text("ID,Name,Chapter_ID\n1A,Consonants,1\n81A,Order,81\n", encoding="utf-8")
    (tmp_path / "chapters.csv").write_text("ID,Area_ID\n1,1\n81,9\n", encoding="utf-8")
    (tmp_path / "areas.csv").write_text("ID,Name\n1,Phonology\n9,Word Order\n", encoding="utf-8")
    (tmp_path / "codes.csv").write_text(
        "ID,Parameter_ID,Name,Number\n1A-1,1A,Small,1\n1A-2,1A,Large,2\n81A-1,81A,SOV,1\n81A-7,81A,No dominant order,7\n",
        encoding="utf-8",
    )
    (tmp_path / "values.csv").write_text(
        "ID,Language_ID,Parameter_ID,Value\nv1,abc,1A,1\nv2,def,1A,2\nv3,abc,81A,1\nv4,ghi,81A,7\n",
        encoding="utf-8",
    )
    t = corpus.table_from_cldf(tmp_path)
    assert t.languages == ["abc", "def", "ghi"]
    assert [(f.feature_id, f.category) for f in t.features] == [("1A", "Phonology"), ("81A", "Word Order")]
    assert t.features[1].absent_value == "7"
    assert t.cells[2, 0] is None and t.cells[2, 1] == "7"


def test_cldf_unknown_language(tmp_path):
    (tmp_path / "languages.csv").write_text("ID\nabc\n", encoding="utf-8")
    (tmp_path / "parameters.csv").write_text("ID,Area\n1A,Phonology\n", encoding="utf-8")
    (tmp_path / "values.csv").write_text("ID,Language_ID,Parameter_ID,Value\nv,zzz,1A,1\n", encoding="utf-8")
    with pytest.raises(TableError, match="unknown language"):
        corpus.table_from_cldf(tmp_path)


# ---------------------------------------------------------------- filtering


def test_feature_coded_for_99_languages_is_dropped():
    t = raw({"f": ["1", "2"] * 49 + ["1"] + [None], "g": ["1", "2"] * 50})
    out = corpus.filter_table(t)
    assert [f.feature_id for f in out.features] == ["g"]


def test_empty_table_filters_to_empty():
    t = RawTable([], [], np.empty((0, 0), dtype=object))
    out = corpus.filter_table(t)
    assert out.languages == [] and out.features == []


def test_rare_value_cells_become_missing():
    # 200 coded languages; value "3" held by 10 of them (5%)
    col = ["1"] * 100 + ["2"] * 90 + ["3"] * 10
    out = corpus.filter_table(raw({"f": col}))
    cells = list(out.cells[:, 0])
    assert sum(c is None for c in cells) == 10
    assert all(cells[i] is None for i in range(190, 200))
    assert out.features[0].value_domain == ("1", "2")


def test_indicator_zero_is_exempt_from_rare_rule():
    col = ["1"] * 190 + ["0"] * 10
    plain = corpus.filter_table(raw({"f": col}))
    flagged = corpus.filter_table(raw({"f": col}, indicator=("f",)))
    assert sum(c is None for c in plain.cells[:, 0]) == 10
    assert sum(c is None for c in flagged.cells[:, 0]) == 0


def test_negative_threshold_rejected():
    with pytest.raises(ValueError):
        corpus.filter_table(raw({"f": ["1"]}), min_langs=-1)


@st.composite
def small_tables(draw):
    n_lang = draw(st.integers(1, 40))
    n_feat = draw(st.integers(0, 4))
    cols = {}
    for j in range(n_feat):
        domain = [str(k) for k in range(1, draw(st.integers(1, 5)) + 1)]
        cols[f"f{j}"] = draw(st.lists(st.sampled_from(domain + [None]), min_size=n_lang, max_size=n_lang))
    if not cols:
        return RawTable([f"l{i}" for i in range(n_lang)], [], np.empty((n_lang, 0), dtype=object))
    return raw(cols)


@given(small_tables(), st.integers(0, 20), st.sampled_from([0.0, 0.1, 0.25, 0.4]))
def test_filter_is_idempotent(t, min_langs, frac):
    once = corpus.filter_table(t, min_langs, frac)
    twice = corpus.filter_table(once, min_langs, frac)
    assert once.features == twice.features
    assert (once.cells == twice.cells).all()


# ---------------------------------------------------------------- binarisation


def test_two_valued_feature_single_variable():
    m = corpus.binarize(raw({"f": ["A", "B", None]}))
    assert m.variable_ids == ["f"]
    assert m.values[:, 0].tolist() == [0, 1, MISSING]


def test_four_valued_feature_one_hot():
    m = corpus.binarize(raw({"f": ["A", "B", "C", "D", None]}))
    assert m.variable_ids == ["f=A", "f=B", "f=C", "f=D"]
    assert m.values[2].tolist() == [0, 0, 1, 0]
    assert (m.values[4] == MISSING).all()


def test_nine_valued_feature_presence_absence():
    f = Feature("g", "C", tuple(str(k) for k in range(1, 10)), absent_value="1")
    cells = np.array([[str(k)] for k in range(1, 10)], dtype=object)
    m = corpus.binarize(RawTable([f"l{k}" for k in range(9)], [f], cells))
    assert m.variable_ids == ["g:present"]
    assert m.values[:, 0].tolist() == [0] + [1] * 8


def test_single_valued_feature_dropped_with_warning(caplog):
    m = corpus.binarize(raw({"f": ["A", "A", None], "g": ["1", "2", "1"]}))
    assert m.variable_ids == ["g"]
    assert "dropping feature f" in caplog.text


@given(st.lists(st.sampled_from(["x", "y", None]), min_size=2, max_size=30))
def test_binary_recoding_is_invertible(col):
    t = raw({"f": col})
    m = corpus.binarize(t)
    if len(t.features[0].value_domain) < 2:
        assert m.variable_ids == []
        return
    lo, hi = t.features[0].value_domain
    back = [None if v == MISSING else (hi if v == 1 else lo) for v in m.values[:, 0]]
    assert back == col


@given(st.lists(st.sampled_from(["1", "2", "3", "4", None]), min_size=1, max_size=40))
def test_one_hot_group_has_exactly_one_active(col):
    m = corpus.binarize(raw({"f": col}))
    if len(m.variables) < 3:  # two observed values give a single binary variable
        return
    for row, v in zip(m.values, col):
        if v is None:
            assert (row == MISSING).all()
        else:
            assert (row == 1).sum() == 1 and not (row == MISSING).any()


# ---------------------------------------------------------------- splits and matrices


def _matrix(n_lang: int) -> corpus.FeatureMatrix:
    return corpus.FeatureMatrix(
        [f"l{i:04d}" for i in range(n_lang)], [corpus.Variable("v", "v", "1", "C")], np.zeros((n_lang, 1))
    )


def test_split_ten_languages():
    s = corpus.split_languages(_matrix(10), seed=0)
    assert (len(s.train), len(s.dev), len(s.test)) == (8, 1, 1)


def test_split_remainder_goes_to_train():
    s = corpus.split_languages(_matrix(2679), seed=3)
    assert (len(s.train), len(s.dev), len(s.test)) == (2145, 267, 267)


def test_split_is_deterministic():
    m = _matrix(57)
    assert corpus.split_languages(m, 11) == corpus.split_languages(m, 11)
    assert corpus.split_languages(m, 11) != corpus.split_languages(m, 12)


def test_split_too_small():
    with pytest.raises(ValueError):
        corpus.split_languages(_matrix(9), 0)


@given(st.integers(10, 300), st.integers(0, 2**32 - 1))
def test_split_partitions(n, seed):
    m = _matrix(n)
    s = corpus.split_languages(m, seed)
    parts = [set(s.train), set(s.dev), set(s.test)]
    assert set().union(*parts) == set(m.languages)
    assert sum(map(len, parts)) == n
    assert len(s.dev) == len(s.test) == n // 10


def test_split_json_round_trip():
    s = corpus.split_languages(_matrix(30), 4)
    assert corpus.Split.from_json(json.loads(json.dumps(s.to_json()))) == s


def test_matrix_round_trip(tmp_path):
    m = corpus.binarize(raw({"f": ["A", "B", None, "C"], "g": ["1", None, "2", "2"]}))
    corpus.write_matrix(m, tmp_path / "m.csv", tmp_path / "m.json", extra={"config_hash": "x"})
    back = corpus.read_matrix(tmp_path / "m.csv", tmp_path / "m.json")
    assert back.languages == m.languages and back.variables == m.variables
    assert (back.values == m.values).all()
    assert json.loads((tmp_path / "m.json").read_text())["config_hash"] == "x"


def test_preprocess_drops_languages_without_data():
    col_f = ["1", "2"] * 60 + [None]
    col_g = ["1", "2", "2"] * 40 + [None]
    m = corpus.preprocess(raw({"f": col_f, "g": col_g}))
    assert len(m.languages) == 120
    assert m.observed.any(axis=1).all()
