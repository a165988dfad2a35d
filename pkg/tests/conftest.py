import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from gaifman.kb import KnowledgeBase

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def small_kbs(draw, max_objects=12, max_relations=4, max_arity=3, max_facts=25, min_arity=1):
    """Random KBs with mixed arities; every object is registered even if isolated."""
    n_obj = draw(st.integers(1, max_objects))
    n_rel = draw(st.integers(1, max_relations))
    arities = draw(st.lists(st.integers(min_arity, max_arity), min_size=n_rel, max_size=n_rel))
    kb = KnowledgeBase()
    for i in range(n_obj):
        kb.add_object(f"o{i}")
    for j, a in enumerate(arities):
        kb.add_relation(f"R{j}", a)
    facts = draw(st.lists(
        st.integers(0, n_rel - 1).flatmap(
            lambda r: st.tuples(st.just(r), st.tuples(*[st.integers(0, n_obj - 1)] * arities[r]))),
        max_size=max_facts))
    for rel, args in facts:
        kb.add_fact((rel, args))
    return kb


@pytest.fixture
def path_kb():
    """a - b - c - d as r(a,b), r(b,c), r(c,d)."""
    kb = KnowledgeBase()
    kb.add("r", "a", "b")
    kb.add("r", "b", "c")
    kb.add("r", "c", "d")
    return kb


@pytest.fixture
def family_kb():
    kb = KnowledgeBase()
    for h, r, t in [("ann", "parent", "bob"), ("bob", "parent", "cat"), ("ann", "likes", "cat"),
                    ("cat", "likes", "dan"), ("dan", "parent", "eve"), ("bob", "likes", "bob")]:
        kb.add(r, h, t)
    return kb


def brute_gaifman_edges(kb):
    """Pairs of distinct objects that co-occur in some fact."""
    edges = set()
    for f in kb.facts:
        for a in f.args:
            for b in f.args:
                if a != b:
                    edges.add((a, b))
    return edges


def floyd_warshall(n, edges):
    inf = float("inf")
    dist = np.full((n, n), inf)
    np.fill_diagonal(dist, 0)
    for a, b in edges:
        dist[a, b] = 1
    for m in range(n):
        dist = np.minimum(dist, dist[:, m:m + 1] + dist[m:m + 1, :])
    return dist


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
