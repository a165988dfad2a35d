"""Gaifman graph of a knowledge base and r-neighborhoods of objects and tuples."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .kb import KnowledgeBase


@dataclass(frozen=True)
class Neighborhood:
    center: tuple[int, ...]
    radius: int
    members: tuple[int, ...]


class GaifmanGraph:
    """Undirected co-occurrence graph stored as flat CSR arrays.

    ``indices[indptr[d]:indptr[d + 1]]`` is the sorted, duplicate-free
    neighbor list of object ``d``. Self-loops are never stored.
    """

    def __init__(self, n_objects: int, indptr: np.ndarray, indices: np.ndarray):
        self.n_objects = n_objects
        self.indptr = indptr
        self.indices = indices
        self.degrees = np.diff(indptr)
        self._ball_set = lru_cache(maxsize=65536)(self._ball_set_uncached)

    @classmethod
    def from_kb(cls, kb: KnowledgeBase) -> "GaifmanGraph":
        heads, tails = [], []
        for f in kb.facts:
            args = f.args
            if len(args) == 2:
                a, b = args
                if a != b:
                    heads.append(a)
                    tails.append(b)
            else:
                for a, b in combinations(set(args), 2):
                    heads.append(a)
                    tails.append(b)
        return cls.from_edges(kb.n_objects, heads, tails)

    @classmethod
    def from_edges(cls, n: int, heads: Sequence[int], tails: Sequence[int]) -> "GaifmanGraph":
        u = np.asarray(heads, dtype=np.int64)
        v = np.asarray(tails, dtype=np.int64)
        keep = u != v
        u, v = u[keep], v[keep]
        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        code = np.unique(src * max(n, 1) + dst)
        src = code // max(n, 1)
        dst = code % max(n, 1)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(n, indptr, dst.astype(np.int32))

    @property
    def n_edges(self) -> int:
        return int(len(self.indices) // 2)

    def neighbors(self, d: int) -> np.ndarray:
        return self.indices[self.indptr[d]:self.indptr[d + 1]]

    def degree(self, d: int) -> int:
        return int(self.degrees[d])

    def ball(self, d: int, r: int) -> frozenset:
        """N_r(d) as a (cached) frozenset."""
        return self._ball_set(d, r)

    def _ball_set_uncached(self, d: int, r: int) -> frozenset:
        if r == 0:
            return frozenset((d,))
        if r == 1:
            return frozenset(self.neighbors(d).tolist()).union((d,))
        return frozenset(bfs_levels(self, (d,), r))

    def ball_sequence(self, d: int, r: int) -> np.ndarray:
        """Sorted members of N_r(d) excluding ``d`` itself."""
        if r == 0:
            return self.indices[:0]
        if r == 1:
            return self.neighbors(d)
        members = self.ball(d, r) - {d}
        return np.fromiter(sorted(members), dtype=np.int64, count=len(members))

    def adjacency_matrix(self) -> sp.csr_matrix:
        data = np.ones(len(self.indices), dtype=np.int8)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n_objects,) * 2)


def build_gaifman_graph(kb: KnowledgeBase) -> GaifmanGraph:
    return GaifmanGraph.from_kb(kb)


def bfs_levels(graph: GaifmanGraph, sources, r: int) -> dict[int, int]:
    """Distances (≤ r) from the nearest source, by truncated multi-source BFS."""
    dist = {s: 0 for s in sources}
    frontier = list(dist)
    indptr, indices = graph.indptr, graph.indices
    for depth in range(1, r + 1):
        nxt = []
        for u in frontier:
            for v in indices[indptr[u]:indptr[u + 1]].tolist():
                if v not in dist:
                    dist[v] = depth
                    nxt.append(v)
        if not nxt:
            break
        frontier = nxt
    return dist


def neighborhood(graph: GaifmanGraph, center: Sequence[int], r: int) -> Neighborhood:
    """N_r of a tuple: the union of its elements' r-balls, ascending ids."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    center = tuple(center)
    if r <= 1:
        members = set()
        for d in center:
            members |= graph.ball(d, r)
    else:
        members = bfs_levels(graph, center, r).keys()
    return Neighborhood(center, r, tuple(sorted(members)))


def degree_histogram(graph: GaifmanGraph) -> dict[int, int]:
    counts = Counter(graph.degrees.tolist())
    return dict(sorted(counts.items()))


def histogram_csv(hist: dict[int, int]) -> str:
    lines = ["degree,count"]
    lines += [f"{d},{c}" for d, c in sorted(hist.items())]
    return "\n".join(lines) + "\n"


def max_r_neighborhood_size(graph: GaifmanGraph, r: int, block: int = 1024) -> int:
    """Largest |N_r(d)| over all objects.

    Radius >= 2 is computed with blocked boolean sparse products of
    (A + I), which avoids one Python-level BFS per object.
    """
    if r < 0:
        raise ValueError("radius must be non-negative")
    n = graph.n_objects
    if n == 0:
        return 0
    if r == 0:
        return 1
    if r == 1:
        return int(graph.degrees.max()) + 1
    adj = graph.adjacency_matrix().astype(np.int32)
    step = (adj + sp.identity(n, dtype=np.int32, format="csr")).tocsr()
    step.data[:] = 1
    best = 0
    for start in range(0, n, block):
        stop = min(n, start + block)
        reach = step[start:stop]
        for _ in range(r - 1):
            reach = reach @ step
            reach.data[:] = 1
        best = max(best, int(np.diff(reach.indptr).max()))
    return best
