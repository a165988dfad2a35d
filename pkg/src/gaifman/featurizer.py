"""Feature vectors for sampled neighborhoods and labeled training datasets.

:class:`Featurizer` compiles the common feature shapes (target atoms,
one-step existentials, two-step paths, single-variable counts) into lookup
tables, so a neighborhood is featurized by one pass over its local facts.
Any other formula goes through the generic model checker.
"""
from __future__ import annotations

import json
import logging
import multiprocessing as mp
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DataError
from .graph import GaifmanGraph
from .kb import KnowledgeBase, Substructure, induce
from .logic import (And, Atom, Exists, FeatureSet, Formula, Var, count, counting_variables,
                    evaluate, result_set, to_text)
from .sampler import NEGATIVE, SamplerConfig, corrupt, gen_neighs
from .util import Progress, stable_hash

log = logging.getLogger(__name__)

TRANSFORMS = ("log1p", "none")


def _target(t) -> int | None:
    if isinstance(t, Var) and t.kind == "target":
        return t.index
    return None


def _classify(phi: Formula):
    """Return a compiled shape for ``phi`` or None for the generic path."""
    if isinstance(phi, Atom):
        idx = [_target(t) for t in phi.terms]
        if all(i is not None for i in idx):
            return ("atom", phi.relation, tuple(idx))
        if len(phi.terms) == 2:
            a, b = phi.terms
            if _target(a) and isinstance(b, Var) and b.kind == "counting":
                return ("count_out", phi.relation, _target(a))
            if _target(b) and isinstance(a, Var) and a.kind == "counting":
                return ("count_in", phi.relation, _target(b))
        return None
    if isinstance(phi, Exists):
        x, body = phi.var, phi.body
        if isinstance(body, Atom) and len(body.terms) == 2:
            a, b = body.terms
            if _target(a) and b == Var(x):
                return ("out", body.relation, _target(a))
            if _target(b) and a == Var(x):
                return ("in", body.relation, _target(b))
        if isinstance(body, And) and len(body.parts) == 2:
            p, q = body.parts
            if (isinstance(p, Atom) and isinstance(q, Atom) and len(p.terms) == 2
                    and len(q.terms) == 2 and p.terms[1] == Var(x) and q.terms[0] == Var(x)
                    and _target(p.terms[0]) and _target(q.terms[1])):
                return ("path", p.relation, _target(p.terms[0]), q.relation, _target(q.terms[1]))
    return None


class Featurizer:
    """Maps (substructure or member set, tuple) to the feature vector for ``features``."""

    def __init__(self, kb: KnowledgeBase, features: FeatureSet, transform: str = "log1p"):
        if transform not in TRANSFORMS:
            raise DataError(f"unknown transform {transform!r}; expected one of {TRANSFORMS}")
        self.kb = kb
        self.features = features
        self.transform = transform
        self.dim = len(features)
        self.atom_pos = defaultdict(list)
        self.out_pos = defaultdict(list)
        self.in_pos = defaultdict(list)
        self.cnt_out = defaultdict(list)
        self.cnt_in = defaultdict(list)
        self.path_pos = defaultdict(list)
        self.generic: list[tuple[int, Formula, bool]] = []
        counting = np.zeros(self.dim, dtype=bool)
        for pos, phi in enumerate(features):
            shape = _classify(phi)
            is_count = bool(counting_variables(phi))
            counting[pos] = is_count
            if shape is None:
                self.generic.append((pos, phi, is_count))
                continue
            kind, rel_name, *rest = shape
            if kind == "path":
                r1, i, r2, j = rel_name, rest[0], rest[1], rest[2]
                if kb.has_relation(r1) and kb.has_relation(r2):
                    self.path_pos[kb.relation_id(r1), i, kb.relation_id(r2), j].append(pos)
                continue
            if not kb.has_relation(rel_name):
                continue  # no facts: constant zero
            rel = kb.relation_id(rel_name)
            if kind == "atom":
                if kb.arities[rel] == 2:
                    self.atom_pos[(rel,) + rest[0]].append(pos)
                else:
                    self.generic.append((pos, phi, False))
            else:
                table = {"out": self.out_pos, "in": self.in_pos,
                         "count_out": self.cnt_out, "count_in": self.cnt_in}[kind]
                table[rel, rest[0]].append(pos)
        self.path_first = defaultdict(list)
        for (r1, i, r2, j), positions in self.path_pos.items():
            self.path_first[r1, i].append((r2, j, positions))
        self.path_first = dict(self.path_first)
        self.counting_mask = counting
        for t in (self.atom_pos, self.out_pos, self.in_pos, self.cnt_out, self.cnt_in, self.path_pos):
            t.default_factory = None
        self.digest = features.digest()

    # -- local fact extraction -----------------------------------------

    def local_binary_facts(self, members: Sequence[int]) -> set[tuple[int, int, int]]:
        """(relation, head, tail) for binary facts with both ends in ``members``."""
        kb = self.kb
        inc = kb._incident
        m = len(members)
        out = set()
        if m * m < sum(len(inc[c]) for c in members):
            pairs = kb._pairs
            for a in members:
                for b in members:
                    rels = pairs.get((a, b))
                    if rels:
                        out.update((r, a, b) for r in rels)
        else:
            inside = set(members)
            for c in members:
                for f in inc[c]:
                    args = f.args
                    if len(args) == 2 and args[0] in inside and args[1] in inside:
                        out.add((f.relation, args[0], args[1]))
        return out

    # -- featurization ---------------------------------------------------

    def sparse(self, members: Sequence[int], center: Sequence[int],
               sub: Substructure | None = None) -> dict[int, float]:
        """Non-zero feature values as ``{position: value}`` (before transform)."""
        vals: dict[int, float] = {}
        if sub is not None:
            facts = {(f.relation,) + f.args for f in sub.facts if len(f.args) == 2}
        else:
            facts = self.local_binary_facts(members)
        tidx = defaultdict(list)
        for i, d in enumerate(center, start=1):
            tidx[d].append(i)
        atom_pos, out_pos, in_pos = self.atom_pos, self.out_pos, self.in_pos
        cnt_out, cnt_in = self.cnt_out, self.cnt_in
        path_first = self.path_first
        starts = []
        for r, a, b in facts:
            ia = tidx.get(a)
            ib = tidx.get(b)
            if ia:
                for i in ia:
                    for p in out_pos.get((r, i), ()):
                        vals[p] = 1.0
                    for p in cnt_out.get((r, i), ()):
                        vals[p] = vals.get(p, 0.0) + 1.0
                    if ib:
                        for j in ib:
                            for p in atom_pos.get((r, i, j), ()):
                                vals[p] = 1.0
                    if (r, i) in path_first:
                        starts.append((r, i, b))
            if ib:
                for j in ib:
                    for p in in_pos.get((r, j), ()):
                        vals[p] = 1.0
                    for p in cnt_in.get((r, j), ()):
                        vals[p] = vals.get(p, 0.0) + 1.0
        # second hop by lookup, so parallel edges between hubs stay linear
        for r1, i, x in starts:
            for r2, j, positions in path_first[r1, i]:
                if j <= len(center) and (r2, x, center[j - 1]) in facts:
                    for p in positions:
                        vals[p] = 1.0
        if self.generic:
            if sub is None:
                sub = induce(self.kb, members)
            for pos, phi, is_count in self.generic:
                v = count(sub, phi, center) if is_count else float(evaluate(sub, phi, center))
                if v:
                    vals[pos] = float(v)
        return vals

    def _finish(self, vals: dict[int, float]) -> tuple[np.ndarray, np.ndarray]:
        idx = np.fromiter(sorted(vals), dtype=np.int32, count=len(vals))
        data = np.fromiter((vals[i] for i in idx.tolist()), dtype=np.float64, count=len(vals))
        if self.transform == "log1p" and len(idx):
            mask = self.counting_mask[idx]
            data[mask] = np.log1p(data[mask])
        return idx, data

    def vector(self, members: Sequence[int], center: Sequence[int],
               sub: Substructure | None = None) -> np.ndarray:
        idx, data = self._finish(self.sparse(members, center, sub))
        v = np.zeros(self.dim)
        v[idx] = data
        return v

    def matrix(self, rows: Sequence[tuple[Sequence[int], Sequence[int]]]) -> sp.csr_matrix:
        """Stack ``(members, center)`` rows into a CSR matrix."""
        indptr = [0]
        indices, data = [], []
        for members, center in rows:
            idx, vals = self._finish(self.sparse(members, center))
            indices.append(idx)
            data.append(vals)
            indptr.append(indptr[-1] + len(idx))
        indices = np.concatenate(indices) if indices else np.zeros(0, np.int32)
        data = np.concatenate(data) if data else np.zeros(0)
        return sp.csr_matrix((data, indices, np.asarray(indptr, dtype=np.int64)),
                             shape=(len(rows), self.dim))


def featurize(sub: Substructure, center: Sequence[int], features: FeatureSet,
              transform: str = "none") -> np.ndarray:
    """Dense feature vector of ``center`` within ``sub`` (generic evaluator)."""
    v = np.zeros(len(features))
    for pos, phi in enumerate(features):
        if counting_variables(phi):
            c = count(sub, phi, center)
            v[pos] = np.log1p(c) if transform == "log1p" else c
        else:
            v[pos] = 1.0 if evaluate(sub, phi, center) else 0.0
    return v


# -- datasets ------------------------------------------------------------

_MAGIC = b"GAIFMAN-DATASET 1\n"


@dataclass
class Dataset:
    X: sp.csr_matrix
    y: np.ndarray
    tuples: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_positive(self) -> int:
        return int(self.y.sum())

    @property
    def n_negative(self) -> int:
        return len(self) - self.n_positive

    def save(self, path) -> None:
        X = self.X.tocsr()
        header = dict(self.meta, rows=len(self), dim=X.shape[1], nnz=int(X.nnz),
                      arity=int(self.tuples.shape[1]))
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
            fh.write(self.y.astype("<i1").tobytes())
            fh.write(self.tuples.astype("<i8").tobytes())
            fh.write(X.indptr.astype("<i8").tobytes())
            fh.write(X.indices.astype("<i4").tobytes())
            fh.write(X.data.astype("<f8").tobytes())

    @classmethod
    def load(cls, path, features: FeatureSet | None = None, kb: KnowledgeBase | None = None) -> "Dataset":
        with open(path, "rb") as fh:
            if fh.readline() != _MAGIC:
                raise DataError(f"{path}: not a dataset file")
            header = json.loads(fh.readline())
            body = fh.read()
        rows, dim, nnz, arity = header["rows"], header["dim"], header["nnz"], header["arity"]
        sizes = [rows, 8 * rows * arity, 8 * (rows + 1), 4 * nnz, 8 * nnz]
        if len(body) != sum(sizes):
            raise DataError(f"{path}: truncated or corrupt dataset body")
        chunks, off = [], 0
        for s in sizes:
            chunks.append(body[off:off + s])
            off += s
        y = np.frombuffer(chunks[0], "<i1").astype(np.int8)
        tuples = np.frombuffer(chunks[1], "<i8").reshape(rows, arity).astype(np.int64)
        X = sp.csr_matrix((np.frombuffer(chunks[4], "<f8").copy(),
                           np.frombuffer(chunks[3], "<i4").copy(),
                           np.frombuffer(chunks[2], "<i8").copy()), shape=(rows, dim))
        meta = {k: v for k, v in header.items() if k not in ("rows", "dim", "nnz", "arity")}
        if features is not None and meta.get("feature_hash") != features.digest():
            raise DataError(f"{path}: feature-set hash mismatch (stale dataset?)")
        if kb is not None and meta.get("kb_hash") != kb.fingerprint():
            raise DataError(f"{path}: knowledge-base hash mismatch (stale dataset?)")
        return cls(X, y, tuples, meta)

    def to_csv(self, stream, kb: KnowledgeBase | None = None) -> None:
        arity = self.tuples.shape[1]
        cols = [f"s{i}" for i in range(1, arity + 1)] + ["label"] + [f"f{j}" for j in range(self.X.shape[1])]
        stream.write(",".join(cols) + "\n")
        dense_row = np.zeros(self.X.shape[1])
        for i in range(len(self)):
            dense_row[:] = 0
            lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
            dense_row[self.X.indices[lo:hi]] = self.X.data[lo:hi]
            names = [kb.objects[a] if kb else str(a) for a in self.tuples[i]]
            stream.write(",".join(names + [str(int(self.y[i]))] + [f"{v:g}" for v in dense_row]) + "\n")


def _rows_for(args):
    """Worker body: all (members, center, label) rows for a chunk of positive tuples."""
    kb, graph, config, known, salt, chunk = args
    rows, forced = [], Counter()
    for t in chunk:
        for nb in gen_neighs(graph, t, config, salt=salt):
            rows.append((nb.members, nb.tuple, 1))
        for c in corrupt(kb, t, config.neg, config.seed, known=known, salt=salt, stats=forced):
            nb = gen_neighs(graph, c, config, label=0, purpose=NEGATIVE, salt=salt, count=1)[0]
            rows.append((nb.members, nb.tuple, 0))
    return rows, forced["forced"]


_SHARED = None


def _pool_rows(i):
    kb, graph, config, known, salt, chunks = _SHARED
    return _rows_for((kb, graph, config, known, salt, chunks[i]))


def build_dataset(kb: KnowledgeBase, graph: GaifmanGraph, q: Formula, features: FeatureSet,
                  config: SamplerConfig, transform: str = "log1p",
                  featurizer: Featurizer | None = None, jobs: int = 1,
                  positives: Sequence[tuple[int, ...]] | None = None) -> Dataset:
    """Positive and corrupted-negative feature vectors for the result set of ``q``.

    ``positives`` overrides the result set (used when the training tuples
    are a subset of S(q), e.g. a held-out split).
    """
    answers = sorted(result_set(kb, q)) if positives is None else sorted(positives)
    if not answers:
        raise DataError("no positive examples: the target query has an empty result set")
    features.check_targets(len(answers[0]))
    featurizer = featurizer or Featurizer(kb, features, transform)
    known = frozenset(result_set(kb, q)) if config.filter_negatives else None
    qtext = to_text(q)
    salt = stable_hash(qtext)
    chunk_size = 256
    chunks = [answers[i:i + chunk_size] for i in range(0, len(answers), chunk_size)]
    progress = Progress(len(answers), f"dataset {qtext}", log)
    rows, forced = [], 0
    if jobs > 1 and len(chunks) > 1 and "fork" in mp.get_all_start_methods():
        global _SHARED
        _SHARED = (kb, graph, config, known, salt, chunks)
        with mp.get_context("fork").Pool(jobs) as pool:
            for part, nf in pool.imap(_pool_rows, range(len(chunks))):
                rows.extend(part)
                forced += nf
        _SHARED = None
    else:
        for chunk in chunks:
            part, nf = _rows_for((kb, graph, config, known, salt, chunk))
            rows.extend(part)
            forced += nf
            progress.update(len(chunk))
    if forced:
        log.warning("%d corrupted tuples were accepted although known true", forced)
    X = featurizer.matrix([(m, c) for m, c, _ in rows])
    y = np.fromiter((lab for _, _, lab in rows), dtype=np.int8, count=len(rows))
    tuples = np.asarray([c for _, c, _ in rows], dtype=np.int64).reshape(len(rows), -1)
    meta = {
        "query": qtext,
        "sampler": asdict(config),
        "transform": featurizer.transform,
        "feature_hash": features.digest(),
        "kb_hash": kb.fingerprint(),
        "seed": config.seed,
        "positives": int(y.sum()),
        "negatives": int(len(y) - y.sum()),
        "forced_negatives": forced,
    }
    return Dataset(X, y, tuples, meta)
