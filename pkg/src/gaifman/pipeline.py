"""Training one model per relation, query answering, ranking evaluation, and throughput."""
from __future__ import annotations

import csv
import io
import json
import logging
import multiprocessing as mp
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .featurizer import Featurizer, build_dataset
from .graph import GaifmanGraph, build_gaifman_graph
from .kb import KnowledgeBase, load_snapshot, save_snapshot
from .logic import Atom, FeatureSet, Var, default_feature_set, parse_feature_text
from .mlp import MlpConfig, MlpModel, load as load_model, train
from .sampler import CANDIDATES, INFER, SamplerConfig, sample_members, stream, stream_key
from .util import Progress, stable_hash

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaifmanConfig:
    """The model tuple (r, k, features, base model) plus sample counts.

    ``k=None`` means unbounded neighborhoods. ``mlp`` holds overrides for
    :class:`MlpConfig` (everything except ``input_dim`` and ``seed``).
    """

    r: int = 1
    k: int | None = 20
    w: int = 5
    neg: int = 25
    n_samples: int = 1
    seed: int = 0
    eval_seed: int = 12345
    transform: str = "log1p"
    filter_negatives: bool = True
    mlp: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_samples < 1:
            raise DataError("n_samples (N) must be >= 1")
        self.sampler()
        bad = set(self.mlp) - {f.name for f in fields(MlpConfig)} | (set(self.mlp) & {"input_dim", "seed"})
        if bad:
            raise DataError(f"unknown or reserved MLP options: {sorted(bad)}")

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(self.r, self.k, self.w, self.neg, self.seed, self.filter_negatives)

    def mlp_config(self, dim: int, seed: int) -> MlpConfig:
        return MlpConfig(input_dim=dim, seed=seed, **self.mlp)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GaifmanConfig":
        d = dict(d)
        if "hidden" in d.get("mlp", {}):
            d["mlp"] = dict(d["mlp"], hidden=tuple(d["mlp"]["hidden"]))
        return cls(**d)


def _relation_seed(seed: int, relation: str) -> int:
    return stream_key(seed, stable_hash(relation)) & 0xFFFFFFFF


class ModelBundle:
    """Per-relation models sharing one feature set and configuration."""

    def __init__(self, config: GaifmanConfig, features: FeatureSet,
                 models: dict[str, MlpModel], kb_hash: str | None = None,
                 skipped: Sequence[str] = ()):
        self.config = config
        self.features = features
        self.models = models
        self.kb_hash = kb_hash
        self.skipped = list(skipped)

    def model(self, relation: str) -> MlpModel:
        try:
            return self.models[relation]
        except KeyError:
            raise DataError(f"no trained model for relation {relation!r}") from None

    def manifest(self) -> dict:
        names = sorted(self.models)
        return {
            "format": "gaifman-bundle 1",
            "config": self.config.to_dict(),
            "feature_hash": self.features.digest(),
            "n_features": len(self.features),
            "kb_hash": self.kb_hash,
            "features": "features.txt",
            "models": {r: f"models/{i:05d}.mlp" for i, r in enumerate(names)},
            "seeds": {r: self.models[r].config.seed for r in names},
            "skipped": self.skipped,
        }

    def save(self, directory, kb: KnowledgeBase | None = None) -> Path:
        """Write the bundle; with ``kb``, also a snapshot of the training KB."""
        directory = Path(directory)
        (directory / "models").mkdir(parents=True, exist_ok=True)
        manifest = self.manifest()
        if kb is not None:
            save_snapshot(kb, directory / "kb")
            manifest["kb"] = "kb"
        (directory / "features.txt").write_text(self.features.to_text(), encoding="utf-8")
        for rel, rel_path in manifest["models"].items():
            self.models[rel].save(directory / rel_path)
        with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return directory

    @classmethod
    def load(cls, directory, relations: Iterable[str] | None = None) -> "ModelBundle":
        directory = Path(directory)
        try:
            manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DataError(f"{directory}: no manifest.json (not a model bundle)") from None
        features = parse_feature_text((directory / manifest["features"]).read_text(encoding="utf-8"),
                                      source="bundle")
        if features.digest() != manifest["feature_hash"]:
            raise DataError(f"{directory}: feature file does not match the manifest hash")
        wanted = set(manifest["models"]) if relations is None else set(relations)
        models = {r: load_model(directory / p, feature_hash=manifest["feature_hash"])
                  for r, p in manifest["models"].items() if r in wanted}
        return cls(GaifmanConfig.from_dict(manifest["config"]), features, models,
                   manifest.get("kb_hash"), manifest.get("skipped", ()))

    @staticmethod
    def load_kb(directory) -> KnowledgeBase:
        """The training KB snapshot stored with a bundle."""
        path = Path(directory) / "kb"
        if not path.is_dir():
            raise DataError(f"{directory}: bundle has no KB snapshot; pass the training KB explicitly")
        return load_snapshot(path)


# -- training ----------------------------------------------------------------


def _train_one(kb, graph, config, features, featurizer, rel_name):
    rel = kb.relation_id(rel_name)
    n = kb.arities[rel]
    q = Atom(rel_name, tuple(Var(f"s{i}") for i in range(1, n + 1)))
    data = build_dataset(kb, graph, q, features, config.sampler(), config.transform, featurizer)
    seed = _relation_seed(config.seed, rel_name)
    model = train(config.mlp_config(len(features), seed), data, expect_negatives=config.neg > 0)
    model.meta.update({
        "relation": rel_name,
        "feature_hash": features.digest(),
        "kb_hash": kb.fingerprint(),
        "positives": data.n_positive,
        "negatives": data.n_negative,
    })
    return model


_SHARED = None


def _pool_train(rel_name):
    kb, graph, config, features, featurizer = _SHARED
    return rel_name, _train_one(kb, graph, config, features, featurizer, rel_name)


def train_all(kb: KnowledgeBase, config: GaifmanConfig, graph: GaifmanGraph | None = None,
              features: FeatureSet | None = None, relations: Iterable[str] | None = None,
              out_dir=None, jobs: int = 1) -> ModelBundle:
    """Train ``q = r(s1, ..., sn)`` for every relation (or the given subset)."""
    graph = graph or build_gaifman_graph(kb)
    features = features or default_feature_set(kb)
    featurizer = Featurizer(kb, features, config.transform)
    names = list(kb.relations) if relations is None else list(relations)
    todo, skipped = [], []
    for name in names:
        if not kb.facts_of(kb.relation_id(name)):
            log.warning("relation %s has no training facts; skipped", name)
            skipped.append(name)
        else:
            todo.append(name)
    models = {}
    progress = Progress(len(todo), "train", log)
    if jobs > 1 and len(todo) > 1 and "fork" in mp.get_all_start_methods():
        global _SHARED
        _SHARED = (kb, graph, config, features, featurizer)
        with mp.get_context("fork").Pool(jobs) as pool:
            for name, model in pool.imap(_pool_train, todo):
                models[name] = model
                progress.update()
        _SHARED = None
    else:
        for name in todo:
            models[name] = _train_one(kb, graph, config, features, featurizer, name)
            progress.update()
    bundle = ModelBundle(config, features, models, kb.fingerprint(), skipped)
    if out_dir is not None:
        bundle.save(out_dir, kb)
    return bundle


# -- scoring -----------------------------------------------------------------


class Scorer:
    """Samples inference neighborhoods and averages model probabilities.

    Neighborhood ``i`` of a tuple is drawn from the stream keyed by
    ``(eval_seed, relation, tuple, i)``, so a tuple always gets the same
    score no matter which batch it is scored in.
    """

    def __init__(self, bundle: ModelBundle, kb: KnowledgeBase, graph: GaifmanGraph | None = None,
                 k: int | None | str = "config", r: int | None = None, seed: int | None = None):
        self.bundle = bundle
        self.kb = kb
        self.graph = graph or build_gaifman_graph(kb)
        cfg = bundle.config
        self.k = cfg.k if k == "config" else k
        self.r = cfg.r if r is None else r
        self.seed = cfg.eval_seed if seed is None else seed
        self.featurizer = Featurizer(kb, bundle.features, cfg.transform)

    def sample_probs(self, relation: str, tuples: Sequence[tuple[int, ...]], n: int) -> np.ndarray:
        """Per-neighborhood probabilities, shape ``(len(tuples), n)``."""
        model = self.bundle.model(relation)
        salt = stable_hash(relation)
        graph, r, k, seed = self.graph, self.r, self.k, self.seed
        rows = []
        for t in tuples:
            for i in range(n):
                rnd = stream(seed, INFER, salt, len(t), *t, i)
                rows.append((sample_members(graph, t, r, k, rnd), t))
        if not rows:
            return np.zeros((0, n))
        X = self.featurizer.matrix(rows)
        return model.predict_proba(X).reshape(len(tuples), n)

    def score(self, relation: str, tuples: Sequence[tuple[int, ...]], n: int | None = None) -> np.ndarray:
        n = self.bundle.config.n_samples if n is None else n
        return self.sample_probs(relation, tuples, n).mean(axis=1)


def query_prob(bundle: ModelBundle, kb: KnowledgeBase, center: Sequence[int], relation: str,
               n: int | None = None, graph: GaifmanGraph | None = None,
               scorer: Scorer | None = None) -> float:
    """Mean model probability over ``n`` sampled neighborhoods of ``center``."""
    scorer = scorer or Scorer(bundle, kb, graph)
    return float(scorer.score(relation, [tuple(int(c) for c in center)], n)[0])


# -- evaluation --------------------------------------------------------------

TIE_POLICIES = ("average", "optimistic", "pessimistic")


def rank_of(scores: np.ndarray, true_index: int, ties: str = "average") -> float:
    s = scores[true_index]
    greater = int((scores > s).sum())
    equal = int((scores == s).sum())
    if ties == "average":
        return greater + (equal + 1) / 2.0
    if ties == "optimistic":
        return greater + 1.0
    if ties == "pessimistic":
        return float(greater + equal)
    raise ValueError(f"unknown tie policy {ties!r}")


def _metrics(ranks) -> dict:
    ranks = np.asarray(ranks, dtype=np.float64)
    if len(ranks) == 0:
        return {"count": 0, "mean_rank": float("nan"), "hits@10": float("nan"), "hits@1": float("nan")}
    return {
        "count": int(len(ranks)),
        "mean_rank": float(ranks.mean()),
        "hits@10": float(100.0 * (ranks <= 10).mean()),
        "hits@1": float(100.0 * (ranks <= 1).mean()),
    }


@dataclass
class EvalReport:
    mode: str
    candidates: str
    ties: str
    n_samples: int
    head_ranks: list[float] = field(default_factory=list)
    tail_ranks: list[float] = field(default_factory=list)
    skipped: int = 0
    seconds: float = 0.0
    scored: int = 0

    @property
    def ranks(self) -> list[float]:
        return self.head_ranks + self.tail_ranks

    def metrics(self) -> dict[str, dict]:
        return {"head": _metrics(self.head_ranks), "tail": _metrics(self.tail_ranks),
                "all": _metrics(self.ranks)}

    @property
    def mean_rank(self) -> float:
        return self.metrics()["all"]["mean_rank"]

    @property
    def hits10(self) -> float:
        return self.metrics()["all"]["hits@10"]

    @property
    def hits1(self) -> float:
        return self.metrics()["all"]["hits@1"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["direction", "count", "mean_rank", "hits@10", "hits@1", "mode", "candidates", "ties", "N"])
        for direction, m in self.metrics().items():
            w.writerow([direction, m["count"], f"{m['mean_rank']:.4f}", f"{m['hits@10']:.4f}",
                        f"{m['hits@1']:.4f}", self.mode, self.candidates, self.ties, self.n_samples])
        return buf.getvalue()

    def to_table(self) -> str:
        lines = [f"entity prediction ({self.mode}, candidates={self.candidates}, ties={self.ties}, N={self.n_samples})"]
        if self.candidates != "all":
            lines.append("note: candidate-subsampled metrics, not comparable to full-ranking numbers")
        lines.append(f"{'direction':<10}{'count':>8}{'mean rank':>12}{'hits@10':>10}{'hits@1':>10}")
        for direction, m in self.metrics().items():
            lines.append(f"{direction:<10}{m['count']:>8}{m['mean_rank']:>12.2f}"
                         f"{m['hits@10']:>10.2f}{m['hits@1']:>10.2f}")
        lines.append(f"skipped triples: {self.skipped}   scored statements: {self.scored}   "
                     f"time: {self.seconds:.1f}s")
        return "\n".join(lines) + "\n"


def _candidate_list(n_objects, true_obj, candidates, rnd):
    if candidates == "all":
        return list(range(n_objects))
    m = int(candidates)
    if m >= n_objects:
        return list(range(n_objects))
    others = rnd.sample(range(n_objects - 1), m - 1)
    # map [0, n-1) onto objects other than the true one
    return sorted([o + (o >= true_obj) for o in others] + [true_obj])


def evaluate_many(bundle: ModelBundle, kb: KnowledgeBase, triples: Sequence[tuple[int, int, int]],
                  n_values: Sequence[int], mode: str = "filtered", candidates="all",
                  known: set | frozenset | None = None, ties: str = "average",
                  graph: GaifmanGraph | None = None, scorer: Scorer | None = None,
                  candidate_seed: int | None = None) -> dict[int, EvalReport]:
    """Rank every test triple in both directions for several values of N at once.

    Triples are ``(head, relation, tail)`` ids in ``kb``'s tables. Since
    sample ``i`` of a tuple does not depend on N, one scoring pass with
    ``max(n_values)`` neighborhoods yields all reports.
    """
    if mode not in ("raw", "filtered"):
        raise ValueError("mode must be 'raw' or 'filtered'")
    if ties not in TIE_POLICIES:
        raise ValueError(f"ties must be one of {TIE_POLICIES}")
    scorer = scorer or Scorer(bundle, kb, graph)
    n_max = max(n_values)
    if known is None:
        known = frozenset((f.args[0], f.relation, f.args[1]) for f in kb.facts if len(f.args) == 2)
    cand_label = "all" if candidates == "all" else f"sample({int(candidates)})"
    reports = {n: EvalReport(mode, cand_label, ties, n) for n in n_values}
    cseed = bundle.config.eval_seed if candidate_seed is None else candidate_seed
    start = time.perf_counter()
    progress = Progress(len(triples), "eval", log)
    skipped, scored = 0, 0
    for ti, (h, rel, t) in enumerate(triples):
        rel_name = kb.relations[rel]
        if rel_name not in bundle.models:
            skipped += 1
            continue
        for direction in ("tail", "head"):
            true_obj = t if direction == "tail" else h
            rnd = stream(cseed, CANDIDATES, ti, direction == "tail")
            cands = _candidate_list(kb.n_objects, true_obj, candidates, rnd)
            if mode == "filtered":
                if direction == "tail":
                    cands = [c for c in cands if c == t or (h, rel, c) not in known]
                else:
                    cands = [c for c in cands if c == h or (c, rel, t) not in known]
            pairs = [(h, c) for c in cands] if direction == "tail" else [(c, t) for c in cands]
            probs = scorer.sample_probs(rel_name, pairs, n_max)
            scored += len(pairs)
            true_index = cands.index(true_obj)
            for n in n_values:
                r = rank_of(probs[:, :n].mean(axis=1), true_index, ties)
                getattr(reports[n], f"{direction}_ranks").append(r)
        progress.update()
    elapsed = time.perf_counter() - start
    for rep in reports.values():
        rep.skipped = skipped
        rep.seconds = elapsed
        rep.scored = scored
    return reports


def evaluate(bundle: ModelBundle, kb: KnowledgeBase, triples, mode: str = "filtered",
             candidates="all", known=None, ties: str = "average", n: int | None = None,
             graph: GaifmanGraph | None = None, scorer: Scorer | None = None) -> EvalReport:
    n = bundle.config.n_samples if n is None else n
    return evaluate_many(bundle, kb, triples, [n], mode, candidates, known, ties, graph, scorer)[n]


def degree_baseline_report(kb: KnowledgeBase, graph: GaifmanGraph, triples, mode="filtered",
                           candidates="all", known=None, ties="average",
                           candidate_seed: int = 12345) -> EvalReport:
    """Rank candidates by their Gaifman degree (ignores the query entirely)."""
    if known is None:
        known = frozenset((f.args[0], f.relation, f.args[1]) for f in kb.facts if len(f.args) == 2)
    cand_label = "all" if candidates == "all" else f"sample({int(candidates)})"
    rep = EvalReport(mode, cand_label, ties, 1)
    deg = graph.degrees.astype(np.float64)
    start = time.perf_counter()
    for ti, (h, rel, t) in enumerate(triples):
        for direction in ("tail", "head"):
            true_obj = t if direction == "tail" else h
            rnd = stream(candidate_seed, CANDIDATES, ti, direction == "tail")
            cands = _candidate_list(kb.n_objects, true_obj, candidates, rnd)
            if mode == "filtered":
                if direction == "tail":
                    cands = [c for c in cands if c == t or (h, rel, c) not in known]
                else:
                    cands = [c for c in cands if c == h or (c, rel, t) not in known]
            getattr(rep, f"{direction}_ranks").append(
                rank_of(deg[cands], cands.index(true_obj), ties))
            rep.scored += len(cands)
    rep.seconds = time.perf_counter() - start
    return rep


# -- throughput --------------------------------------------------------------


def bench(bundle: ModelBundle, kb: KnowledgeBase, triples: Sequence[tuple[int, int, int]],
          k_grid: Sequence[int | None], graph: GaifmanGraph | None = None,
          batch: int = 100, n: int = 1, seed: int = 0) -> list[tuple[int | None, float]]:
    """Query answers per second for each k, averaged over relation types.

    An answer is the probability of one object pair; timing covers
    neighborhood sampling, featurization, and network inference. Each test
    triple contributes ``batch`` tail-replacement pairs scored together.
    """
    graph = graph or build_gaifman_graph(kb)
    by_rel: dict[str, list] = {}
    for h, rel, t in triples:
        name = kb.relations[rel]
        if name in bundle.models:
            by_rel.setdefault(name, []).append((h, t))
    if not by_rel:
        raise DataError("no benchmark triples with a trained relation")
    out = []
    for k in k_grid:
        scorer = Scorer(bundle, kb, graph, k=k)
        rates = []
        for name, pairs in sorted(by_rel.items()):
            rnd = stream(seed, CANDIDATES, stable_hash(name))
            batches = [[(h, rnd.randrange(kb.n_objects)) for _ in range(batch)] for h, _ in pairs]
            t0 = time.perf_counter()
            for b in batches:
                scorer.score(name, b, n)
            elapsed = time.perf_counter() - t0
            rates.append(len(batches) * batch / elapsed)
        out.append((k, float(np.mean(rates))))
        log.info("bench k=%s: %.0f answers/s", k, out[-1][1])
    return out


def bench_csv(rows) -> str:
    return "k,answers_per_sec\n" + "".join(
        f"{'inf' if k is None else k},{rate:.1f}\n" for k, rate in rows)
