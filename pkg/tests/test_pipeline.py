import numpy as np
import pytest
from hypothesis import given, strategies as st

from gaifman.errors import DataError
from gaifman.graph import build_gaifman_graph
from gaifman.logic import default_feature_set, path_features, union
from gaifman.pipeline import (EvalReport, GaifmanConfig, ModelBundle, Scorer, bench, bench_csv,
                              degree_baseline_report, evaluate, evaluate_many, query_prob, rank_of,
                              train_all)
from gaifman.synthetic import planted_rule

FAST = {"hidden": (12,), "epochs": 8, "learning_rate": 1e-2}


@pytest.fixture(scope="module")
def planted():
    split = planted_rule(n_objects=40, density=0.06, seed=1)
    kb = split.train
    features = union(default_feature_set(kb), path_features(kb.relations))
    config = GaifmanConfig(r=1, k=10, w=2, neg=3, mlp=FAST)
    bundle = train_all(kb, config, features=features)
    triples, _ = split.resolve(split.test)
    return split, bundle, triples


def file_bytes(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes()
            for p in sorted(directory.rglob("*")) if p.is_file()}


# -- rank arithmetic ---------------------------------------------------------


def test_rank_policies():
    s = np.array([0.9, 0.5, 0.5, 0.5, 0.1])
    assert rank_of(s, 1, "optimistic") == 2
    assert rank_of(s, 1, "pessimistic") == 4
    assert rank_of(s, 1, "average") == 3
    assert rank_of(s, 0) == 1
    with pytest.raises(ValueError):
        rank_of(s, 0, "random")


def test_report_arithmetic():
    rep = EvalReport("filtered", "all", "average", 1, head_ranks=[1, 3], tail_ranks=[250])
    assert rep.hits10 == pytest.approx(200 / 3)
    assert rep.hits1 == pytest.approx(100 / 3)
    assert rep.mean_rank == pytest.approx(254 / 3)
    assert rep.metrics()["head"]["mean_rank"] == 2
    lines = rep.to_csv().splitlines()
    assert lines[0] == "direction,count,mean_rank,hits@10,hits@1,mode,candidates,ties,N"
    assert lines[3].startswith("all,3,84.6667,66.6667,33.3333")


def test_subsampled_table_carries_note():
    rep = EvalReport("raw", "sample(50)", "average", 1, head_ranks=[2.0])
    assert "not comparable" in rep.to_table()
    assert "not comparable" not in EvalReport("raw", "all", "average", 1).to_table()


@given(st.lists(st.integers(0, 5), min_size=1, max_size=30), st.data())
def test_rank_invariant_under_monotone_transform(values, data):
    s = np.array(values, dtype=float) / 5 + 0.01
    i = data.draw(st.integers(0, len(s) - 1))
    for ties in ("average", "optimistic", "pessimistic"):
        assert rank_of(s, i, ties) == rank_of(np.log(s), i, ties) == rank_of(3 * s + 1, i, ties)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.data())
def test_rank_bounds(values, data):
    s = np.array(values)
    i = data.draw(st.integers(0, len(s) - 1))
    lo, mid, hi = (rank_of(s, i, t) for t in ("optimistic", "average", "pessimistic"))
    assert 1 <= lo <= mid <= hi <= len(s)
    assert mid == (lo + hi) / 2


# -- config ------------------------------------------------------------------


def test_config_round_trip_and_validation():
    cfg = GaifmanConfig(k=None, mlp={"hidden": (7, 3)})
    assert GaifmanConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(DataError):
        GaifmanConfig(n_samples=0)
    with pytest.raises(DataError):
        GaifmanConfig(mlp={"seed": 3})
    with pytest.raises(DataError):
        GaifmanConfig(mlp={"momentum": 0.9})


# -- training and scoring ----------------------------------------------------


def test_constant_model_ranks_at_middle(planted):
    split, bundle, triples = planted
    const = ModelBundle(bundle.config, bundle.features, {})
    for name, model in bundle.models.items():
        clone = type(model)(model.config, [w * 0 for w in model.weights], [b * 0 for b in model.biases])
        const.models[name] = clone
    rep = evaluate(const, split.train, triples[:5], mode="raw", candidates="all")
    c = split.train.n_objects
    assert all(r == (c + 1) / 2 for r in rep.ranks)


def test_query_probability(planted):
    split, bundle, triples = planted
    kb = split.train
    h, _, t = triples[0]
    p = query_prob(bundle, kb, (h, t), "r3", n=3)
    assert 0 <= p <= 1
    scorer = Scorer(bundle, kb)
    assert scorer.score("r3", [(0, 1), (h, t)], 3)[1] == p
    with pytest.raises(DataError):
        query_prob(bundle, kb, (h, t), "r9")


def test_unbounded_k_makes_samples_identical(planted):
    split, bundle, _ = planted
    scorer = Scorer(bundle, split.train, k=None)
    probs = scorer.sample_probs("r1", [(0, 1), (2, 3), (4, 5)], 3)
    np.testing.assert_array_equal(probs[:, :1].mean(1), probs.mean(1))


def test_averaging_reduces_variance(planted):
    split, bundle, _ = planted
    scorer = Scorer(bundle, split.train)
    tuples = [(a, b) for a in range(10) for b in range(10, 20)]
    probs = scorer.sample_probs("r3", tuples, 16)
    single = probs.var(axis=1).mean()
    means = probs.reshape(len(tuples), 4, 4).mean(axis=2).var(axis=1).mean()
    assert single > 0
    assert means < single / 2


def test_filtered_not_worse_than_raw(planted):
    split, bundle, triples = planted
    known = split.known()
    raw = evaluate(bundle, split.train, triples, mode="raw", known=known)
    filt = evaluate(bundle, split.train, triples, mode="filtered", known=known)
    assert all(f <= r for f, r in zip(filt.ranks, raw.ranks))


def test_sampled_candidates_not_worse_than_all(planted):
    split, bundle, triples = planted
    full = evaluate(bundle, split.train, triples, candidates="all")
    sub = evaluate(bundle, split.train, triples, candidates=10)
    assert all(s <= f for s, f in zip(sub.ranks, full.ranks))
    assert sub.hits10 >= full.hits10
    assert sub.candidates == "sample(10)"


def test_evaluate_many_matches_single_runs(planted):
    split, bundle, triples = planted
    many = evaluate_many(bundle, split.train, triples[:6], [1, 3])
    for n in (1, 3):
        assert many[n].ranks == evaluate(bundle, split.train, triples[:6], n=n).ranks


def test_model_beats_degree_baseline(planted):
    split, bundle, triples = planted
    graph = build_gaifman_graph(split.train)
    known = split.known()
    model = evaluate(bundle, split.train, triples, known=known, n=3)
    base = degree_baseline_report(split.train, graph, triples, known=known)
    assert model.mean_rank < base.mean_rank


def test_bundle_round_trip(planted, tmp_path):
    split, bundle, triples = planted
    bundle.save(tmp_path / "b", split.train)
    again = ModelBundle.load(tmp_path / "b")
    kb = ModelBundle.load_kb(tmp_path / "b")
    assert kb.fingerprint() == split.train.fingerprint()
    assert again.config == bundle.config
    a = evaluate(bundle, split.train, triples[:5])
    b = evaluate(again, kb, triples[:5])
    assert a.ranks == b.ranks
    partial = ModelBundle.load(tmp_path / "b", relations=["r3"])
    assert set(partial.models) == {"r3"}


def test_bundle_rejects_edited_features(planted, tmp_path):
    split, bundle, _ = planted
    bundle.save(tmp_path / "b")
    with open(tmp_path / "b" / "features.txt", "a") as fh:
        fh.write("r1(s1, s1) & r2(s2, s2)\n")
    with pytest.raises(DataError, match="hash"):
        ModelBundle.load(tmp_path / "b")
    with pytest.raises(DataError, match="manifest"):
        ModelBundle.load(tmp_path)
    with pytest.raises(DataError, match="snapshot"):
        ModelBundle.load_kb(tmp_path / "b")


def test_training_is_reproducible(tmp_path):
    split = planted_rule(n_objects=25, density=0.08, seed=4)
    config = GaifmanConfig(k=6, w=2, neg=2, mlp={"hidden": (5,), "epochs": 2})
    train_all(split.train, config, out_dir=tmp_path / "a")
    train_all(split.train, config, out_dir=tmp_path / "b", jobs=2)
    assert file_bytes(tmp_path / "a") == file_bytes(tmp_path / "b")


def test_relations_without_facts_are_skipped(tmp_path):
    split = planted_rule(n_objects=25, density=0.08, seed=4)
    kb = split.train
    kb.add_relation("empty", 2)
    bundle = train_all(kb, GaifmanConfig(k=6, w=1, neg=1, mlp={"hidden": (4,), "epochs": 1}))
    assert bundle.skipped == ["empty"]
    assert "empty" not in bundle.models
    rep = evaluate(bundle, kb, [(0, kb.relation_id("empty"), 1), (0, 0, 1)])
    assert rep.skipped == 1 and len(rep.ranks) == 2


def test_bench_reports_rates(planted):
    split, bundle, triples = planted
    rows = bench(bundle, split.train, triples[:3], [5, None], batch=10)
    assert [k for k, _ in rows] == [5, None]
    assert all(rate > 0 for _, rate in rows)
    assert bench_csv(rows).splitlines()[2].startswith("inf,")


def test_single_fact_relation_gives_w_positives_and_neg_negatives():
    split = planted_rule(n_objects=25, density=0.08, seed=4)
    kb = split.train
    kb.add("rare", "e0", "e1")
    bundle = train_all(kb, GaifmanConfig(k=6, w=5, neg=25, mlp={"hidden": (3,), "epochs": 1}),
                       relations=["rare"])
    meta = bundle.model("rare").meta
    assert (meta["positives"], meta["negatives"]) == (5, 25)


class _Oracle:
    """Probability 1 exactly on the pairs of one relation, 0 elsewhere."""

    def __init__(self, pairs):
        self.pairs = pairs

    def sample_probs(self, relation, tuples, n):
        return np.array([[float(t in self.pairs)] * n for t in tuples])


def test_oracle_model_ranks_first(planted):
    split, bundle, triples = planted
    pairs = {(h, t) for h, _, t in triples}
    rep = evaluate(bundle, split.train, triples, known=split.known(), scorer=_Oracle(pairs))
    # filtering removes every other true pair, so the oracle's only 1.0 is the target
    assert rep.mean_rank == 1 and rep.hits1 == 100
