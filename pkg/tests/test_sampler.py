from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gaifman.errors import DataError
from gaifman.graph import GaifmanGraph, build_gaifman_graph, neighborhood
from gaifman.kb import KnowledgeBase
from gaifman.sampler import (NEGATIVE, SamplerConfig, corrupt, gen_neighs, sample_members,
                             sample_records, stream)

from conftest import small_kbs


def star(leaves: int) -> GaifmanGraph:
    return GaifmanGraph.from_edges(leaves + 1, [0] * leaves, list(range(1, leaves + 1)))


def test_config_validation():
    with pytest.raises(DataError):
        SamplerConfig(r=-1)
    with pytest.raises(DataError):
        SamplerConfig(k=0)
    with pytest.raises(DataError):
        SamplerConfig(w=0)
    with pytest.raises(DataError):
        SamplerConfig(neg=-1)
    assert SamplerConfig(k=None).k is None


def test_small_neighborhood_gives_w_identical_copies(path_kb):
    g = build_gaifman_graph(path_kb)
    b = path_kb.object_id("b")
    out = gen_neighs(g, [b], SamplerConfig(r=1, k=20, w=4))
    assert len(out) == 4
    assert all(s.members == neighborhood(g, [b], 1).members for s in out)


def test_unbounded_k_returns_full_neighborhood():
    g = star(50)
    out = gen_neighs(g, [0], SamplerConfig(r=1, k=None, w=2))
    assert [len(s.members) for s in out] == [51, 51]


def test_k_smaller_than_tuple_is_rejected():
    g = star(5)
    with pytest.raises(DataError):
        sample_members(g, (1, 2, 3), 1, 2, stream(0))


def test_prefix_stability():
    g = star(100)
    cfg = SamplerConfig(r=1, k=5, w=3, seed=7)
    three = gen_neighs(g, [0], cfg)
    five = gen_neighs(g, [0], cfg, count=5)
    assert [s.members for s in three] == [s.members for s in five[:3]]


def test_purpose_separates_streams():
    g = star(100)
    cfg = SamplerConfig(r=1, k=5, w=1, seed=7)
    a = gen_neighs(g, [0], cfg)[0].members
    b = gen_neighs(g, [0], cfg, purpose=NEGATIVE)[0].members
    assert a != b


@given(small_kbs(max_objects=30, max_facts=60), st.integers(0, 3), st.integers(1, 12),
       st.integers(0, 10**6), st.data())
def test_contracts(kb, r, k, seed, data):
    g = build_gaifman_graph(kb)
    n = data.draw(st.integers(1, min(3, k)))
    center = tuple(data.draw(st.lists(st.integers(0, kb.n_objects - 1), min_size=n, max_size=n)))
    full = set(neighborhood(g, center, r).members)
    cfg = SamplerConfig(r=r, k=k, w=3, seed=seed)
    out = gen_neighs(g, center, cfg)
    for s in out:
        assert len(s.members) <= k
        assert set(center) <= set(s.members)
        assert set(s.members) <= full
        assert list(s.members) == sorted(s.members)
        assert len(s.members) == min(k, len(full)) or len(set(center)) > k
    assert out == gen_neighs(g, center, cfg)
    if len(full) <= k:
        assert all(set(s.members) == full for s in out)


def test_star_balance_within_three_sigma():
    leaves, k, trials = 40, 9, 4000
    g = star(leaves)
    hits = Counter()
    for i in range(trials):
        members = sample_members(g, (0,), 1, k, stream(3, i))
        hits.update(members)
    assert hits[0] == trials
    p = (k - 1) / leaves
    mean, sd = trials * p, np.sqrt(trials * p * (1 - p))
    for leaf in range(1, leaves + 1):
        assert abs(hits[leaf] - mean) <= 3 * sd + 1e-9


def test_quota_per_tuple_element():
    # two stars joined at nothing: each center keeps itself plus k/2 - 1 leaves
    heads = [0] * 30 + [31] * 30
    tails = list(range(1, 31)) + list(range(32, 62))
    g = GaifmanGraph.from_edges(62, heads, tails)
    for i in range(50):
        m = sample_members(g, (0, 31), 1, 10, stream(5, i))
        left = [x for x in m if x <= 30]
        assert len(left) == 5 and len(m) == 10


def test_top_up_fills_from_larger_ball():
    # center 0 has 2 neighbors, center 10 has 30: the small side's spare quota goes to the big side
    heads = [0, 0] + [10] * 30
    tails = [1, 2] + list(range(11, 41))
    g = GaifmanGraph.from_edges(41, heads, tails)
    m = sample_members(g, (0, 10), 1, 10, stream(1))
    assert {0, 1, 2, 10} <= set(m)
    assert len(m) == 10


def test_rejection_top_up_is_uniform_over_union():
    # big hub triggers the rejection route; leaves of the hub should be hit evenly
    hub_leaves = 400
    heads = [0] * hub_leaves + [500]
    tails = list(range(1, hub_leaves + 1)) + [501]
    g = GaifmanGraph.from_edges(502, heads, tails)
    hits = Counter()
    trials = 3000
    for i in range(trials):
        m = sample_members(g, (500, 0), 1, 8, stream(2, i))
        hits.update(x for x in m if 1 <= x <= hub_leaves)
    # 0 and 500 and 501 fixed (501 via quota); 5 leaves of the hub per draw
    total = sum(hits.values())
    assert total == trials * 5
    p = 5 / hub_leaves
    sd = np.sqrt(trials * p * (1 - p))
    assert max(abs(hits[x] - trials * p) for x in range(1, hub_leaves + 1)) <= 4 * sd


def test_corrupt_changes_one_position_round_robin(family_kb):
    kb = family_kb
    center = (0, 1)
    out = corrupt(kb, center, 6, seed=1)
    for j, c in enumerate(out):
        pos = j % 2
        assert c[pos] != center[pos]
        assert c[1 - pos] == center[1 - pos]


def test_corrupt_avoids_known_and_counts_forced():
    kb = KnowledgeBase()
    kb.add("r", "a", "b")
    kb.add("r", "a", "c")
    known = {(0, 0), (0, 1), (0, 2)}
    stats = Counter()
    out = corrupt(kb, (0, 1), 4, seed=0, known=known, stats=stats)
    # every replacement of position 1 is known; position 0 never is
    assert stats["forced"] == 2
    assert all(c not in known for j, c in enumerate(out) if j % 2 == 0)


def test_corrupt_needs_two_objects():
    kb = KnowledgeBase()
    kb.add("u", "a")
    with pytest.raises(DataError):
        corrupt(kb, (0,), 1, seed=0)


def test_sample_records_labels(family_kb):
    g = build_gaifman_graph(family_kb)
    recs = list(sample_records(family_kb, g, [(0, 1)], SamplerConfig(k=3, w=2, neg=3)))
    assert [r["label"] for r in recs] == ["positive"] * 2 + ["negative"] * 3
    assert all(set(r["tuple"]) <= set(r["members"]) for r in recs)
