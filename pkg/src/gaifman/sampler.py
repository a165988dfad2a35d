"""Bounded-size (r, k)-neighborhood sampling and tuple corruption.

Every random draw comes from a stream derived from ``(seed, purpose,
tuple, index)`` so results do not depend on the order in which tuples are
processed, or on how many other samples were requested.
"""
from __future__ import annotations

import logging
import random
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass
from itertools import accumulate
from typing import Iterable, Sequence

from .errors import DataError
from .graph import GaifmanGraph, neighborhood
from .kb import KnowledgeBase

log = logging.getLogger(__name__)

_MASK = (1 << 64) - 1

# stream purposes
POSITIVE, NEGATIVE, CORRUPT, INFER, CANDIDATES, SHUFFLE = range(1, 7)


def _mix(x: int) -> int:
    # splitmix64 finalizer
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def stream_key(seed: int, *parts: int) -> int:
    h = _mix(seed & _MASK)
    for p in parts:
        h = _mix(h ^ (p & _MASK))
    return h


def stream(seed: int, *parts: int) -> random.Random:
    """An independent generator for the given key path."""
    return random.Random(stream_key(seed, *parts))


@dataclass(frozen=True)
class SamplerConfig:
    r: int = 1
    k: int | None = 20  # None means unbounded (k = infinity)
    w: int = 1
    neg: int = 0
    seed: int = 0
    filter_negatives: bool = True

    def __post_init__(self):
        if self.r < 0:
            raise DataError("r must be non-negative")
        if self.k is not None and self.k < 1:
            raise DataError("k must be >= 1 (or None for unbounded)")
        if self.w < 1:
            raise DataError("w must be >= 1")
        if self.neg < 0:
            raise DataError("neg must be >= 0")


@dataclass(frozen=True)
class SampledNeighborhood:
    tuple: tuple[int, ...]
    members: tuple[int, ...]
    label: int  # 1 positive, 0 negative


def sample_members(graph: GaifmanGraph, center: Sequence[int], r: int,
                   k: int | None, rnd: random.Random) -> tuple[int, ...]:
    """Draw one (r, k)-neighborhood of ``center``; ascending ids."""
    if k is None:
        return neighborhood(graph, center, r).members
    n = len(center)
    if k < n:
        raise DataError(f"k={k} is smaller than the tuple length {n}")
    quota = k // n
    distinct = tuple(dict.fromkeys(center))
    chosen = set(distinct)
    pools = []
    for d in distinct:
        pool = graph.ball_sequence(d, r)
        pools.append(pool)
        # d itself is force-included and counts against its quota
        take = min(quota, len(pool) + 1) - 1
        if take > 0:
            picks = rnd.sample(range(len(pool)), take)
            chosen.update(pool[picks].tolist())
    need = k - len(chosen)
    if need > 0:
        _top_up(graph, distinct, pools, r, chosen, need, rnd)
    return tuple(sorted(chosen))


def _top_up(graph, distinct, pools, r, chosen, need, rnd):
    sizes = [len(p) + 1 for p in pools]
    total = sum(sizes)
    if max(sizes) < 4 * (len(chosen) + need) + 32:
        residual = set().union(*(graph.ball(d, r) for d in distinct)) - chosen
        if residual:
            chosen.update(rnd.sample(sorted(residual), min(need, len(residual))))
        return
    # rejection sampling over the concatenated balls; an element is only
    # accepted from the first ball containing it, which makes draws uniform
    # over the union without materializing it
    balls = [graph.ball(d, r) for d in distinct]
    bounds = list(accumulate(sizes))
    drawn = 0
    while drawn < need:
        x = rnd.randrange(total)
        i = bisect_right(bounds, x)
        j = x - (bounds[i - 1] if i else 0)
        e = distinct[i] if j == len(pools[i]) else int(pools[i][j])
        if e in chosen or any(e in balls[l] for l in range(i)):
            continue
        chosen.add(e)
        drawn += 1


def gen_neighs(graph: GaifmanGraph, center: Sequence[int], config: SamplerConfig,
               label: int = 1, purpose: int = POSITIVE, salt: int = 0,
               count: int | None = None) -> list[SampledNeighborhood]:
    """Return ``count`` (default ``config.w``) sampled neighborhoods of ``center``.

    Sample ``i`` is drawn from its own stream, so the first samples of a
    longer list equal the samples of a shorter one.
    """
    center = tuple(int(c) for c in center)
    count = config.w if count is None else count
    if config.k is None:
        members = neighborhood(graph, center, config.r).members
        return [SampledNeighborhood(center, members, label) for _ in range(count)]
    out = []
    for i in range(count):
        rnd = stream(config.seed, purpose, salt, len(center), *center, i)
        members = sample_members(graph, center, config.r, config.k, rnd)
        out.append(SampledNeighborhood(center, members, label))
    return out


def corrupt(kb: KnowledgeBase, center: Sequence[int], count: int, seed: int,
            known: set | frozenset | None = None, salt: int = 0,
            max_retries: int = 10, stats: Counter | None = None) -> list[tuple[int, ...]]:
    """Corrupt one position per output, cycling positions round-robin.

    Replacements equal to the original object are always redrawn. Tuples in
    ``known`` (true tuples of the target query) are redrawn up to
    ``max_retries`` times, after which the last draw is kept and
    ``stats["forced"]`` is incremented.
    """
    center = tuple(center)
    n_obj = kb.n_objects
    if count == 0:
        return []
    if n_obj <= 1:
        raise DataError("cannot corrupt tuples over a domain with fewer than 2 objects")
    rnd = stream(seed, CORRUPT, salt, len(center), *center)
    out = []
    for j in range(count):
        pos = j % len(center)
        original = center[pos]
        for attempt in range(max_retries + 1):
            c = rnd.randrange(n_obj)
            while c == original:
                c = rnd.randrange(n_obj)
            cand = center[:pos] + (c,) + center[pos + 1:]
            if known is None or cand not in known:
                break
        else:
            if stats is not None:
                stats["forced"] += 1
            log.debug("accepted known-true corruption %s after %d retries", cand, max_retries)
        out.append(cand)
    return out


def sample_records(kb: KnowledgeBase, graph: GaifmanGraph, tuples: Iterable[Sequence[int]],
                   config: SamplerConfig, known=None, salt: int = 0):
    """Positive and negative neighborhoods as JSON-ready dicts (for inspection)."""
    for t in tuples:
        for s in gen_neighs(graph, t, config, salt=salt):
            yield _record(kb, s)
        for c in corrupt(kb, t, config.neg, config.seed, known=known, salt=salt):
            for s in gen_neighs(graph, c, config, label=0, purpose=NEGATIVE, salt=salt, count=1):
                yield _record(kb, s)


def _record(kb, s: SampledNeighborhood) -> dict:
    return {
        "tuple": [kb.objects[a] for a in s.tuple],
        "label": "positive" if s.label else "negative",
        "members": [kb.objects[a] for a in s.members],
    }
