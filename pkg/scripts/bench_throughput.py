"""Query answers per second against k on the degree-skewed surrogate KB.

Trains a handful of mid-frequency relations briefly (model quality does not
affect timing) and scores batches of tail replacements for each k.

    python scripts/bench_throughput.py --k-grid 10,20,50 --out bench.csv
"""
import argparse
import logging

import numpy as np

from gaifman.graph import build_gaifman_graph
from gaifman.pipeline import GaifmanConfig, bench, bench_csv, train_all
from gaifman.synthetic import skewed


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k-grid", default="10,20,50")
    ap.add_argument("--relations", type=int, default=5, help="number of relations to time")
    ap.add_argument("--triples", type=int, default=20, help="test triples per relation")
    ap.add_argument("--batch", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="write the CSV here instead of stdout")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    kb = skewed(seed=args.seed).train
    graph = build_gaifman_graph(kb)
    print(kb.stats_line(), f"median degree {np.median(graph.degrees):.0f}, max {graph.degrees.max()}")
    sizes = [(len(kb.facts_of(i)), name) for i, name in enumerate(kb.relations)]
    relations = [name for c, name in sizes if 300 <= c <= 600][:args.relations]
    bundle = train_all(kb, GaifmanConfig(r=1, k=10, w=1, neg=2, mlp={"epochs": 2}), graph,
                       relations=relations)
    rng = np.random.default_rng(args.seed)
    triples = []
    for name in relations:
        facts = kb.facts_of(kb.relation_id(name))
        for i in rng.choice(len(facts), min(args.triples, len(facts)), replace=False):
            triples.append((facts[i].args[0], facts[i].relation, facts[i].args[1]))
    grid = [None if x == "inf" else int(x) for x in args.k_grid.split(",")]
    text = bench_csv(bench(bundle, kb, triples, grid, graph, batch=args.batch, seed=args.seed))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    print(text, end="")


if __name__ == "__main__":
    main()
