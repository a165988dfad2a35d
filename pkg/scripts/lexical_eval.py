"""Directional ranking check: Gaifman models at N = 1, 2, 3 against the degree baseline.

Runs on the synthetic lexical KB by default, or on a dataset directory with
train/valid/test triple files (for example WN18).

    python scripts/lexical_eval.py
    python scripts/lexical_eval.py --data /path/to/wn18 --limit 500
"""
import argparse
import logging

from gaifman.graph import build_gaifman_graph
from gaifman.pipeline import GaifmanConfig, degree_baseline_report, evaluate_many, train_all
from gaifman.synthetic import lexical, load_split


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", help="dataset directory; default is the synthetic lexical KB")
    ap.add_argument("--objects", type=int, default=2000, help="size of the synthetic KB")
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--w", type=int, default=2)
    ap.add_argument("--neg", type=int, default=8)
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--candidates", default="500")
    ap.add_argument("--limit", type=int, default=150, help="test triples to rank")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    split = load_split(args.data) if args.data else lexical(args.objects, seed=args.seed)
    kb = split.train
    graph = build_gaifman_graph(kb)
    print(kb.stats_line())
    config = GaifmanConfig(r=1, k=args.k, w=args.w, neg=args.neg, seed=args.seed,
                           mlp={"epochs": args.epochs})
    bundle = train_all(kb, config, graph, jobs=args.jobs)
    triples, skipped = split.resolve(split.test)
    triples = triples[:args.limit]
    known = split.known()
    candidates = args.candidates if args.candidates == "all" else int(args.candidates)
    reports = evaluate_many(bundle, kb, triples, [1, 2, 3], candidates=candidates, known=known, graph=graph)
    for n, rep in reports.items():
        print(f"N={n}")
        print(rep.to_table())
    print("degree baseline")
    print(degree_baseline_report(kb, graph, triples, candidates=candidates, known=known).to_table())


if __name__ == "__main__":
    main()
