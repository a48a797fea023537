"""Compare PC conditioning depths on a typology table.

For each max_cond value: skeleton size, held-out (dev) log-likelihood of the
EM fit, the model's p(OV | Postpositions) against p(OV), and the mean
prediction accuracy per k. Usage:

    python3 scripts/compare_max_cond.py --input data/uriel_wals/features.csv \
        --categories data/uriel_wals/categories.csv --depths 0 1 2
"""
import argparse
import logging
import time

from probtypo import corpus, experiments, implications, inference, learning, structure


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--input", required=True)
    ap.add_argument("--categories", required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--depths", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--max-sets", type=int, default=50)
    args = ap.parse_args()
    logging.basicConfig(level=logging.ERROR)

    m = corpus.preprocess(corpus.load_table(args.input, args.categories))
    split = corpus.split_languages(m, args.seed)
    train, dev = m.subset(split.train), m.subset(split.dev)
    ov, postp = implications.resolve_label("OV", m), implications.resolve_label("Postpositions", m)
    print("max_cond  edges  dev_loglik  p(OV|Postp)  p(OV)  grid mean k=2..6  seconds")
    for depth in args.depths:
        t0 = time.perf_counter()
        st = structure.learn_structure(train, max_cond=depth)
        n, report = learning.em_fit(st, train, dev=dev)
        p_cond, p_prior = inference.implication_conditional(n, ov, postp) if ov and postp else (float("nan"),) * 2
        grid = experiments.run_prediction_grid(n, m, split, max_sets_per_cell=args.max_sets, seed=args.seed)
        means = " ".join(f"{grid.mean(k):.3f}" for k in grid.k_values)
        print(
            f"{depth:8d}  {len(st.edges()):5d}  {report.dev_log_likelihood:10.1f}  {p_cond:11.3f}  {p_prior:5.3f}"
            f"  {means}  {time.perf_counter() - t0:.0f}"
        )
    print(f"baselines: most frequent {grid.baseline_mean(grid.most_frequent):.3f}, "
          f"pairwise {grid.baseline_mean(grid.pairwise):.3f}")


if __name__ == "__main__":
    main()
