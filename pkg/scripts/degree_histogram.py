"""Gaifman degree histogram of a triple file (or of the synthetic KBs) as CSV.

    python scripts/degree_histogram.py train.txt > degrees.csv
    python scripts/degree_histogram.py --synthetic skewed
"""
import argparse
import sys

from gaifman.graph import build_gaifman_graph, degree_histogram, histogram_csv
from gaifman.kb import load_triples
from gaifman.synthetic import lexical, skewed


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("path", nargs="?", help="head<TAB>relation<TAB>tail file")
    ap.add_argument("--synthetic", choices=["skewed", "lexical"])
    args = ap.parse_args()
    if args.synthetic == "skewed":
        kb = skewed().train
    elif args.synthetic == "lexical":
        kb = lexical().train
    elif args.path:
        kb = load_triples(args.path)
    else:
        ap.error("give a triple file or --synthetic")
    graph = build_gaifman_graph(kb)
    print(kb.stats_line(), file=sys.stderr)
    sys.stdout.write(histogram_csv(degree_histogram(graph)))


if __name__ == "__main__":
    main()
