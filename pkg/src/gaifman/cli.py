"""Command-line entry point: ``gaifman <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import DataError, GaifmanError
from .featurizer import Dataset, build_dataset
from .graph import build_gaifman_graph, degree_histogram, histogram_csv, max_r_neighborhood_size
from .kb import KnowledgeBase, load_nary, load_triples, read_triples
from .logic import (Atom, Var, default_feature_set, load_feature_file, parse, path_features,
                    result_set, to_text, union)
from .mlp import history_csv, read_header
from .pipeline import (ModelBundle, GaifmanConfig, Scorer, bench, bench_csv,
                       degree_baseline_report, evaluate, query_prob, train_all)
from .sampler import SamplerConfig, sample_records
from .util import stable_hash

log = logging.getLogger("gaifman")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _k(text: str) -> int | None:
    if text.lower() in ("inf", "none", "all"):
        return None
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("k must be positive or 'inf'")
    return value


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _k_list(text: str) -> list[int | None]:
    return [_k(x.strip()) for x in text.split(",") if x.strip()]


def _candidates(text: str):
    if text == "all":
        return "all"
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("candidates must be 'all' or a positive integer")
    return value


def _add_kb(p, required=True):
    p.add_argument("--kb", required=required, help="training facts (head<TAB>relation<TAB>tail)")
    p.add_argument("--nary", action="store_true", help="KB file is relation<TAB>arg1<TAB>...")


def _add_sampler(p):
    p.add_argument("--r", type=int, default=1, help="neighborhood radius")
    p.add_argument("--k", type=_k, default=20, help="neighborhood size bound ('inf' for unbounded)")
    p.add_argument("--w", type=int, default=5, help="neighborhoods per positive tuple")
    p.add_argument("--neg", type=int, default=25, help="corrupted negatives per positive tuple")
    p.add_argument("--allow-false-negatives", action="store_true",
                   help="keep corrupted tuples that are true in the KB")


def _add_features(p):
    p.add_argument("--features", help="feature file (one formula per line); default: built-in set")
    p.add_argument("--path-features", action="store_true",
                   help="add two-hop paths over every ordered relation pair")
    p.add_argument("--raw-counts", action="store_true", help="no log1p on counting features")


def build_parser() -> _Parser:
    parser = _Parser(prog="gaifman", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="store_true", help="print version and build info")
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")
    common.add_argument("--config", help="file of key=value lines; flags override it")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("stats", parents=[common], help="KB size, degree histogram, largest neighborhood")
    _add_kb(p)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--histogram", help="write the degree histogram CSV here instead of stdout")

    p = sub.add_parser("features", parents=[common], help="print the built-in feature set")
    _add_kb(p)
    p.add_argument("--path-features", action="store_true")
    p.add_argument("--out", help="write to this file instead of stdout")

    p = sub.add_parser("sample", parents=[common], help="dump sampled neighborhoods as JSON lines")
    _add_kb(p)
    _add_sampler(p)
    p.add_argument("--query", help="target query, e.g. 'r(s1, s2)'")
    p.add_argument("--relation", help="shorthand for the query relation(s1, ..., sn)")
    p.add_argument("--limit", type=int, default=10, help="number of answer tuples to sample for")

    p = sub.add_parser("build-dataset", parents=[common], help="featurize training examples for one query")
    _add_kb(p)
    _add_sampler(p)
    _add_features(p)
    p.add_argument("--query")
    p.add_argument("--relation")
    p.add_argument("--out", required=True, help="dataset file")
    p.add_argument("--csv", help="also dump the dataset as CSV here")

    p = sub.add_parser("train", parents=[common], help="train one model per relation")
    _add_kb(p)
    _add_sampler(p)
    _add_features(p)
    p.add_argument("--n", type=int, default=1, help="inference samples N stored in the bundle")
    p.add_argument("--relations", help="comma-separated subset of relations")
    p.add_argument("--hidden", type=_int_list, default=(100, 100))
    p.add_argument("--dropout", type=float, default=0.2, help="input dropout rate")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--out", required=True, help="bundle directory")
    p.add_argument("--history", help="write per-relation training curves (CSV) into this directory")

    p = sub.add_parser("predict", parents=[common], help="probability of one statement")
    p.add_argument("--bundle", required=True)
    _add_kb(p, required=False)
    p.add_argument("--triple", required=True, help="'head relation tail' (whitespace separated)")
    p.add_argument("--n", type=int, default=None, help="inference samples N (default: bundle's)")

    p = sub.add_parser("eval", parents=[common], help="entity-prediction ranking metrics")
    p.add_argument("--bundle", required=True)
    _add_kb(p, required=False)
    p.add_argument("--test", required=True, help="test triples")
    p.add_argument("--valid", help="validation triples (only used for filtering)")
    p.add_argument("--mode", choices=["filtered", "raw"], default="filtered")
    p.add_argument("--candidates", type=_candidates, default=500,
                   help="'all' (full ranking, slow) or a candidate sample size")
    p.add_argument("--ties", choices=["average", "optimistic", "pessimistic"], default="average")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--limit", type=int, help="evaluate only the first LIMIT test triples")
    p.add_argument("--baseline", action="store_true", help="also report the degree heuristic")
    p.add_argument("--csv", help="write the report CSV here")

    p = sub.add_parser("bench", parents=[common], help="query answers per second for several k")
    p.add_argument("--bundle", required=True)
    _add_kb(p, required=False)
    p.add_argument("--test", required=True)
    p.add_argument("--k-grid", type=_k_list, default=[10, 20, 50])
    p.add_argument("--limit", type=int, default=50, help="test triples per relation")
    p.add_argument("--batch", type=int, default=100, help="pairs scored per call")
    p.add_argument("--out", help="write the CSV here instead of stdout")

    p = sub.add_parser("inspect", parents=[common], help="print the header of a dataset, model, or bundle")
    p.add_argument("path")
    p.add_argument("--csv", action="store_true", help="dump a dataset's rows as CSV")
    return parser


# -- config file -------------------------------------------------------------


def read_config_file(path) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}, line {lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _apply_config(parser, argv, args):
    """Re-parse with config-file values as defaults so explicit flags still win."""
    values = read_config_file(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, text in values.items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"{args.config}: unknown option {key!r} for '{args.command}'")
        if action.const is True:
            defaults[key] = text.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                defaults[key] = action.type(text)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{args.config}: bad value for {key}: {exc}") from None
        else:
            defaults[key] = text
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


# -- helpers -----------------------------------------------------------------


def _load_kb(path, nary: bool) -> KnowledgeBase:
    kb = load_nary(path) if nary else load_triples(path)
    log.info("loaded %s: %s", path, kb.stats_line())
    return kb


def _bundle_kb(args, bundle: ModelBundle) -> KnowledgeBase:
    kb = _load_kb(args.kb, args.nary) if args.kb else ModelBundle.load_kb(args.bundle)
    if bundle.kb_hash and kb.fingerprint() != bundle.kb_hash:
        log.warning("KB hash %s differs from the bundle's training KB %s", kb.fingerprint(), bundle.kb_hash)
    return kb


def _query(args, kb):
    if bool(args.query) == bool(args.relation):
        raise UsageError("give exactly one of --query or --relation")
    if args.query:
        return parse(args.query, kb)
    rel = kb.relation_id(args.relation)
    return Atom(args.relation, tuple(Var(f"s{i}") for i in range(1, kb.arities[rel] + 1)))


def _feature_set(args, kb):
    if args.features:
        fs = load_feature_file(args.features, kb)
    else:
        fs = default_feature_set(kb)
    if args.path_features:
        fs = union(fs, path_features(kb.relations))
    return fs


def _sampler(args) -> SamplerConfig:
    return SamplerConfig(args.r, args.k, args.w, args.neg, args.seed, not args.allow_false_negatives)


def _write(text: str, path=None):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _triples(path, kb):
    ids, skipped = [], 0
    for h, r, t in read_triples(path):
        if kb.has_object(h) and kb.has_object(t) and kb.has_relation(r):
            ids.append((kb.object_id(h), kb.relation_id(r), kb.object_id(t)))
        else:
            skipped += 1
    return ids, skipped


# -- subcommands -------------------------------------------------------------


def cmd_stats(args):
    kb = _load_kb(args.kb, args.nary)
    graph = build_gaifman_graph(kb)
    hist = degree_histogram(graph)
    print(kb.stats_line())
    print(f"edges={graph.n_edges} mean_degree={graph.degrees.mean() if kb.n_objects else 0:.3f} "
          f"max_degree={int(graph.degrees.max()) if kb.n_objects else 0}")
    print(f"max_neighborhood_size(r={args.r})={max_r_neighborhood_size(graph, args.r)}")
    _write(histogram_csv(hist), args.histogram)


def cmd_features(args):
    kb = _load_kb(args.kb, args.nary)
    fs = default_feature_set(kb)
    if args.path_features:
        fs = union(fs, path_features(kb.relations))
    _write(fs.to_text(), args.out)


def cmd_sample(args):
    kb = _load_kb(args.kb, args.nary)
    graph = build_gaifman_graph(kb)
    q = _query(args, kb)
    config = _sampler(args)
    answers = sorted(result_set(kb, q))
    known = frozenset(answers) if config.filter_negatives else None
    records = sample_records(kb, graph, answers[: args.limit], config, known, stable_hash(to_text(q)))
    for record in records:
        print(json.dumps(record, sort_keys=True))


def cmd_build_dataset(args):
    kb = _load_kb(args.kb, args.nary)
    graph = build_gaifman_graph(kb)
    q = _query(args, kb)
    fs = _feature_set(args, kb)
    transform = "none" if args.raw_counts else "log1p"
    data = build_dataset(kb, graph, q, fs, _sampler(args), transform, jobs=args.jobs)
    data.save(args.out)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            data.to_csv(fh, kb)
    print(f"{len(data)} rows ({data.n_positive} positive, {data.n_negative} negative), "
          f"{data.X.shape[1]} features -> {args.out}")


def cmd_train(args):
    kb = _load_kb(args.kb, args.nary)
    graph = build_gaifman_graph(kb)
    fs = _feature_set(args, kb)
    config = GaifmanConfig(
        r=args.r, k=args.k, w=args.w, neg=args.neg, n_samples=args.n, seed=args.seed,
        transform="none" if args.raw_counts else "log1p",
        filter_negatives=not args.allow_false_negatives,
        mlp={"hidden": tuple(args.hidden), "input_dropout": args.dropout, "learning_rate": args.lr,
             "batch_size": args.batch_size, "epochs": args.epochs},
    )
    relations = [r.strip() for r in args.relations.split(",")] if args.relations else None
    for name in relations or ():
        kb.relation_id(name)
    bundle = train_all(kb, config, graph, fs, relations, out_dir=args.out, jobs=args.jobs)
    if args.history:
        os.makedirs(args.history, exist_ok=True)
        for i, name in enumerate(sorted(bundle.models)):
            rows = bundle.models[name].meta.get("history", [])
            Path(args.history, f"{i:05d}.csv").write_text(history_csv(rows), encoding="utf-8")
    print(f"trained {len(bundle.models)} models, skipped {len(bundle.skipped)} -> {args.out}")


def cmd_predict(args):
    parts = args.triple.split()
    if len(parts) != 3:
        raise UsageError("--triple expects 'head relation tail'")
    h, r, t = parts
    bundle = ModelBundle.load(args.bundle, relations=[r])
    kb = _bundle_kb(args, bundle)
    p = query_prob(bundle, kb, (kb.object_id(h), kb.object_id(t)), r, args.n)
    print(f"{p:.6f}")


def cmd_eval(args):
    bundle = ModelBundle.load(args.bundle)
    kb = _bundle_kb(args, bundle)
    graph = build_gaifman_graph(kb)
    test, skipped = _triples(args.test, kb)
    if args.limit is not None:
        test = test[: args.limit]
    known = {(f.args[0], f.relation, f.args[1]) for f in kb.facts if len(f.args) == 2}
    known.update(test)
    if args.valid:
        known.update(_triples(args.valid, kb)[0])
    scorer = Scorer(bundle, kb, graph)
    report = evaluate(bundle, kb, test, args.mode, args.candidates, frozenset(known), args.ties,
                      args.n, graph, scorer)
    report.skipped += skipped
    sys.stdout.write(report.to_table())
    if args.csv:
        Path(args.csv).write_text(report.to_csv(), encoding="utf-8")
    if args.baseline:
        base = degree_baseline_report(kb, graph, test, args.mode, args.candidates, frozenset(known),
                                      args.ties, bundle.config.eval_seed)
        sys.stdout.write("degree baseline\n" + base.to_table())


def cmd_bench(args):
    bundle = ModelBundle.load(args.bundle)
    kb = _bundle_kb(args, bundle)
    graph = build_gaifman_graph(kb)
    test, _ = _triples(args.test, kb)
    per_rel: dict[int, list] = {}
    for tr in test:
        per_rel.setdefault(tr[1], [])
        if len(per_rel[tr[1]]) < args.limit:
            per_rel[tr[1]].append(tr)
    sample = [tr for rel in sorted(per_rel) for tr in per_rel[rel]]
    rows = bench(bundle, kb, sample, args.k_grid, graph, batch=args.batch, seed=args.seed)
    _write(bench_csv(rows), args.out)


def cmd_inspect(args):
    path = Path(args.path)
    if path.is_dir():
        print((path / "manifest.json").read_text(encoding="utf-8"), end="")
        return
    with open(path, "rb") as fh:
        magic = fh.readline()
    if magic.startswith(b"GAIFMAN-DATASET"):
        data = Dataset.load(path)
        if args.csv:
            data.to_csv(sys.stdout)
        else:
            print(json.dumps(dict(data.meta, rows=len(data), dim=data.X.shape[1]), indent=2, sort_keys=True))
    elif magic.startswith(b"GAIFMAN-MLP"):
        print(json.dumps(read_header(path), indent=2, sort_keys=True))
    else:
        raise DataError(f"{path}: not a dataset, model, or bundle")


COMMANDS = {
    "stats": cmd_stats, "features": cmd_features, "sample": cmd_sample,
    "build-dataset": cmd_build_dataset, "train": cmd_train, "predict": cmd_predict,
    "eval": cmd_eval, "bench": cmd_bench, "inspect": cmd_inspect,
}


def version_text() -> str:
    return (f"gaifman {__version__} (python {platform.python_version()}, numpy {np.__version__}, "
            f"scipy {scipy.__version__})")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.version:
            print(version_text())
            return 0
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("gaifman: error: a subcommand is required", file=sys.stderr)
            return 1
        if args.config:
            args = _apply_config(parser, argv, args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (OSError, DataError) as exc:
        print(f"gaifman: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=args.log_level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "version"}
    log.info("config: %s", json.dumps(resolved, sort_keys=True, default=str))
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"gaifman: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError, GaifmanError) as exc:
        print(f"gaifman: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
