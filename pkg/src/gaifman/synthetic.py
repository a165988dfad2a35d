"""Synthetic knowledge bases for tests, experiments, and dataset stand-ins."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .kb import KnowledgeBase, read_triples

Triple = tuple[str, str, str]


@dataclass
class Split:
    """A training KB plus held-out name triples."""

    train: KnowledgeBase
    valid: list[Triple] = field(default_factory=list)
    test: list[Triple] = field(default_factory=list)

    def resolve(self, triples: list[Triple]) -> tuple[list[tuple[int, int, int]], int]:
        """Map name triples to training-KB ids; returns (ids, number skipped)."""
        kb = self.train
        out, skipped = [], 0
        for h, r, t in triples:
            if kb.has_object(h) and kb.has_object(t) and kb.has_relation(r):
                out.append((kb.object_id(h), kb.relation_id(r), kb.object_id(t)))
            else:
                skipped += 1
        return out, skipped

    def known(self) -> frozenset:
        """All true binary triples (train, valid, test) as training-KB ids."""
        ids = {(f.args[0], f.relation, f.args[1]) for f in self.train.facts if len(f.args) == 2}
        ids.update(self.resolve(self.valid)[0])
        ids.update(self.resolve(self.test)[0])
        return frozenset(ids)


def _kb_from(triples, objects=None, relations=None) -> KnowledgeBase:
    kb = KnowledgeBase()
    # register names up front so ids do not depend on which facts landed in train
    for name in relations or ():
        kb.add_relation(name, 2)
    for name in objects or ():
        kb.add_object(name)
    for h, r, t in triples:
        kb.add(r, h, t)
    return kb


def _split(triples: list[Triple], holdout, rng, objects, relations,
           valid_fraction: float = 0.0) -> Split:
    triples = sorted(set(triples))
    held = [tr for tr in triples if holdout(tr)]
    idx = rng.permutation(len(held))
    n_test = int(round(len(held) * holdout.fraction))
    n_valid = int(round(len(held) * valid_fraction))
    test = sorted(held[i] for i in idx[:n_test])
    valid = sorted(held[i] for i in idx[n_test:n_test + n_valid])
    out = set(test) | set(valid)
    train = _kb_from([tr for tr in triples if tr not in out], objects, relations)
    return Split(train, valid, test)


class _Holdout:
    def __init__(self, fraction, relations=None):
        self.fraction = fraction
        self.relations = relations

    def __call__(self, triple):
        return self.relations is None or triple[1] in self.relations


def planted_rule(n_objects: int = 200, density: float = 0.02, holdout: float = 0.10,
                 seed: int = 0) -> Split:
    """``r1`` and ``r2`` uniformly random, ``r3(x, z)`` iff some ``y`` has ``r1(x, y)`` and ``r2(y, z)``.

    ``holdout`` of the ``r3`` facts go to the test split.
    """
    rng = np.random.default_rng(seed)
    names = [f"e{i}" for i in range(n_objects)]
    a1 = rng.random((n_objects, n_objects)) < density
    a2 = rng.random((n_objects, n_objects)) < density
    a3 = (a1.astype(np.int32) @ a2.astype(np.int32)) > 0
    triples = []
    for rel, a in (("r1", a1), ("r2", a2), ("r3", a3)):
        for x, z in zip(*np.nonzero(a)):
            triples.append((names[x], rel, names[z]))
    return _split(triples, _Holdout(holdout, {"r3"}), rng, names, ["r1", "r2", "r3"])


def skewed(n_objects: int = 14951, n_relations: int = 1345, n_facts: int = 483142,
           exponent: float = 0.6, extra: float = 0.2, seed: int = 0, holdout: float = 0.0) -> Split:
    """Degree-skewed random triples (power-law object and relation popularity).

    Distinct object pairs are drawn with power-law endpoint weights; each pair
    gets one relation plus, with probability ``extra``, a second one. Defaults
    match the object, relation, and training-fact counts of FB15k.
    """
    rng = np.random.default_rng(seed)
    obj_w = 1.0 / np.arange(1, n_objects + 1) ** exponent
    rel_w = 1.0 / np.arange(1, n_relations + 1) ** 1.1
    obj_w /= obj_w.sum()
    rel_w /= rel_w.sum()
    perm = rng.permutation(n_objects)
    n_pairs = int(n_facts / (1 + extra))
    keys = np.zeros(0, dtype=np.int64)
    while len(keys) < n_pairs:
        m = 2 * (n_pairs - len(keys))
        h = perm[rng.choice(n_objects, m, p=obj_w)]
        t = perm[rng.choice(n_objects, m, p=obj_w)]
        fresh = (h.astype(np.int64) * n_objects + t)[h != t]
        keys = np.concatenate([keys, fresh])
        _, first = np.unique(keys, return_index=True)
        keys = keys[np.sort(first)]
    keys = keys[:n_pairs]
    h, t = keys // n_objects, keys % n_objects
    r = rng.choice(n_relations, n_pairs, p=rel_w)
    twice = np.nonzero(rng.random(n_pairs) < extra)[0]
    r2 = rng.choice(n_relations, len(twice), p=rel_w)
    h = np.concatenate([h, h[twice]])
    t = np.concatenate([t, t[twice]])
    r = np.concatenate([r, r2])
    objects = [f"m{i}" for i in range(n_objects)]
    relations = [f"p{i}" for i in range(n_relations)]
    triples = [(objects[a], relations[b], objects[c]) for a, b, c in zip(h.tolist(), r.tolist(), t.tolist())]
    if holdout <= 0:
        return Split(_kb_from(triples, objects, relations))
    return _split(triples, _Holdout(holdout), rng, objects, relations)


# Relation inventory modelled on a lexical hierarchy: directed pairs that are
# each other's inverse, plus symmetric relations.
LEXICAL_INVERSES = [
    ("_hypernym", "_hyponym"),
    ("_member_holonym", "_member_meronym"),
    ("_part_of", "_has_part"),
    ("_instance_hypernym", "_instance_hyponym"),
    ("_member_of_domain_topic", "_synset_domain_topic_of"),
    ("_member_of_domain_region", "_synset_domain_region_of"),
    ("_member_of_domain_usage", "_synset_domain_usage_of"),
]
LEXICAL_SYMMETRIC = ["_derivationally_related_form", "_also_see", "_verb_group", "_similar_to"]


def lexical(n_objects: int = 4000, seed: int = 0, test_fraction: float = 0.05,
            valid_fraction: float = 0.05) -> Split:
    """A small lexical-hierarchy KB with 18 relations.

    Objects form a random tree (hypernym edges); other relations attach
    objects to nearby nodes. Every directed fact comes with its inverse and
    every symmetric fact with its mirror, so most held-out facts have their
    counterpart in training, as in WordNet-derived benchmarks.
    """
    rng = np.random.default_rng(seed)
    names = [f"s{i:05d}" for i in range(n_objects)]
    parent = np.empty(n_objects, dtype=np.int64)
    parent[0] = -1
    for i in range(1, n_objects):
        # preferential toward early nodes so the hierarchy has hubs
        parent[i] = int(i * rng.random() ** 2)
    pairs: list[tuple[int, str, int]] = []

    def add_directed(a, b, k):
        fwd, inv = LEXICAL_INVERSES[k]
        pairs.append((a, fwd, b))
        pairs.append((b, inv, a))

    def add_symmetric(a, b, name):
        pairs.append((a, name, b))
        pairs.append((b, name, a))

    for i in range(1, n_objects):
        kind = 3 if rng.random() < 0.1 else 0
        add_directed(i, int(parent[i]), kind)
    weights = np.array([0.0, 0.25, 0.2, 0.0, 0.15, 0.1, 0.05])
    weights /= weights.sum()
    n_extra = n_objects // 2
    for _ in range(n_extra):
        a = int(rng.integers(1, n_objects))
        b = int(parent[a]) if rng.random() < 0.5 else int(rng.integers(0, n_objects))
        if a != b:
            add_directed(a, b, int(rng.choice(len(weights), p=weights)))
    sym_w = np.array([0.6, 0.15, 0.1, 0.15])
    for _ in range(n_objects):
        a = int(rng.integers(1, n_objects))
        siblings = np.nonzero(parent == parent[a])[0]
        b = int(rng.choice(siblings))
        if a != b:
            add_symmetric(a, b, LEXICAL_SYMMETRIC[int(rng.choice(4, p=sym_w))])
    relations = [n for pair in LEXICAL_INVERSES for n in pair] + LEXICAL_SYMMETRIC
    triples = sorted({(names[a], r, names[b]) for a, r, b in pairs})
    return _split(triples, _Holdout(test_fraction), rng, names, relations, valid_fraction)


def random_kb(rng: np.random.Generator, n_objects: int = 20, n_relations: int = 3,
              max_arity: int = 3, n_facts: int = 30) -> KnowledgeBase:
    """Small random KB with mixed arities (every object registered)."""
    kb = KnowledgeBase()
    for i in range(n_objects):
        kb.add_object(f"o{i}")
    for j in range(n_relations):
        kb.add_relation(f"R{j}", int(rng.integers(1, max_arity + 1)))
    for _ in range(n_facts):
        rel = int(rng.integers(n_relations))
        args = tuple(int(a) for a in rng.integers(0, n_objects, kb.arities[rel]))
        kb.add_fact((rel, args))
    return kb


def load_split(directory) -> Split:
    """Load ``train.txt``/``valid.txt``/``test.txt`` (head, relation, tail) from a directory.

    The common benchmark distributions use ``head<TAB>tail<TAB>relation`` instead;
    the column order is detected from which column has few distinct values.
    """
    directory = Path(directory)
    files = {}
    for split in ("train", "valid", "test"):
        for name in (f"{split}.txt", f"{split}.tsv", f"freebase_mtr100_mte100-{split}.txt",
                     f"wordnet-mlj12-{split}.txt"):
            if (directory / name).exists():
                files[split] = read_triples(directory / name)
                break
    if "train" not in files:
        raise DataError(f"{directory}: no train.txt found")
    rel_col = _relation_column(files["train"])
    order = (0, 1, 2) if rel_col == 1 else (0, 2, 1)

    def fix(ts):
        return [(tr[order[0]], tr[order[1]], tr[order[2]]) for tr in ts]

    train = fix(files["train"])
    kb = KnowledgeBase()
    for h, r, t in train:
        kb.add(r, h, t)
    return Split(kb, fix(files.get("valid", [])), fix(files.get("test", [])))


def _relation_column(triples) -> int:
    distinct = [len({tr[i] for tr in triples}) for i in (1, 2)]
    return 1 if distinct[0] <= distinct[1] else 2
