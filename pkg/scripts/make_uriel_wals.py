"""Build a WALS-style feature table from the WALS-sourced slice of URIEL.

The World Atlas of Language Structures itself is distributed from wals.info /
Zenodo.  When it is not reachable, URIEL (shipped inside the ``lang2vec``
wheel) carries per-language binary features that URIEL derived from WALS.
This script writes them in the package's canonical CSV layout:

    data/uriel_wals/features.csv     language_id + one column per feature
    data/uriel_wals/categories.csv   feature_id,category,indicator (WALS area)

Usage:  pip install lang2vec && python scripts/make_uriel_wals.py
"""
import argparse
import csv
import importlib.resources
from pathlib import Path

import numpy as np

WALS_SOURCE = "WALS"

# URIEL feature prefix/name -> WALS area of the chapter it was derived from.
AREA_BY_FEATURE = {
    "S_GENDER_MARK": "Nominal Categories",  # 30A/31A
    "S_SEX_MARK": "Nominal Categories",
    "S_DEFINITE_AFFIX": "Nominal Categories",  # 37A
    "S_DEFINITE_WORD": "Nominal Categories",
    "S_INDEFINITE_AFFIX": "Nominal Categories",  # 38A
    "S_INDEFINITE_WORD": "Nominal Categories",
    "S_POSSESSIVE_PREFIX": "Nominal Categories",  # 57A
    "S_POSSESSIVE_SUFFIX": "Nominal Categories",
    "S_PLURAL_PREFIX": "Nominal Categories",  # 33A
    "S_PLURAL_SUFFIX": "Nominal Categories",
    "S_PLURAL_WORD": "Nominal Categories",
    "S_CASE_PREFIX": "Nominal Categories",  # 51A
    "S_CASE_SUFFIX": "Nominal Categories",
    "S_CASE_PROCLITIC": "Nominal Categories",
    "S_CASE_ENCLITIC": "Nominal Categories",
    "S_CASE_MARK": "Nominal Categories",
    "S_COMITATIVE_VS_INSTRUMENTAL_MARK": "Nominal Categories",  # 52A
    "S_NUMCLASS_MARK": "Nominal Categories",  # 55A
    "S_ADJECTIVE_WITHOUT_NOUN": "Nominal Syntax",  # 61A
    "S_OBJECT_HEADMARK": "Morphology",  # 23A-25A
    "S_OBJECT_DEPMARK": "Morphology",
    "S_POSSESSIVE_HEADMARK": "Morphology",
    "S_POSSESSIVE_DEPMARK": "Morphology",
    "S_TEND_HEADMARK": "Morphology",
    "S_TEND_DEPMARK": "Morphology",
    "S_TEND_PREFIX": "Morphology",  # 26A
    "S_TEND_SUFFIX": "Morphology",
    "S_ANY_REDUP": "Morphology",  # 27A
    "S_PERFECTIVE_VS_IMPERFECTIVE_MARK": "Verbal Categories",  # 65A
    "S_PAST_VS_PRESENT_MARK": "Verbal Categories",  # 66A
    "S_FUTURE_AFFIX": "Verbal Categories",  # 67A
    "S_TAM_PREFIX": "Verbal Categories",  # 69A
    "S_TAM_SUFFIX": "Verbal Categories",
    "S_NOMINATIVE_VS_ACCUSATIVE_MARK": "Simple Clauses",  # 98A
    "S_ERGATIVE_VS_ABSOLUTIVE_MARK": "Simple Clauses",
    "S_PROSUBJECT_WORD": "Simple Clauses",  # 101A
    "S_PROSUBJECT_AFFIX": "Simple Clauses",
    "S_PROSUBJECT_CLITIC": "Simple Clauses",
    "S_NEGATIVE_AFFIX": "Simple Clauses",  # 112A
    "S_NEGATIVE_WORD": "Simple Clauses",
    "S_POLARQ_WORD": "Simple Clauses",  # 116A
    "S_POLARQ_AFFIX": "Simple Clauses",
    "S_COMPLEMENTIZER_WORD_BEFORE_CLAUSE": "Complex Sentences",
    "S_COMPLEMENTIZER_WORD_AFTER_CLAUSE": "Complex Sentences",
}


def area_of(name):
    if name in AREA_BY_FEATURE:
        return AREA_BY_FEATURE[name]
    if name.startswith(("P_", "INV_")):
        return "Phonology"
    # remaining S_* features come from the word-order chapters (81A-97A, 143A-144A)
    return "Word Order"


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "data" / "uriel_wals")
    args = parser.parse_args(argv)

    npz = importlib.resources.files("lang2vec") / "data" / "features.npz"
    with importlib.resources.as_file(npz) as path:
        d = np.load(path, allow_pickle=True)
        feats = [str(f) for f in d["feats"]]
        langs = [str(lang) for lang in d["langs"]]
        sources = [str(s) for s in d["sources"]]
        values = d["data"][:, :, sources.index(WALS_SOURCE)]

    observed = (values == 0) | (values == 1)
    keep_f = [j for j in range(len(feats)) if observed[:, j].any()]
    keep_l = [i for i in range(len(langs)) if observed[i, keep_f].any()]

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "features.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["language_id"] + [feats[j] for j in keep_f])
        for i in keep_l:
            row = [langs[i]]
            for j in keep_f:
                row.append(str(int(values[i, j])) if observed[i, j] else "")
            w.writerow(row)
    with open(args.out / "categories.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature_id", "category", "indicator"])
        for j in keep_f:
            # every URIEL column flags one WALS value; 0 pools all other values
            w.writerow([feats[j], area_of(feats[j]), "1"])
    print(f"wrote {len(keep_l)} languages x {len(keep_f)} features to {args.out}")


if __name__ == "__main__":
    main()
