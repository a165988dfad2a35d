"""Relational structures: the fact store, its indexes, and induced substructures.

Objects and relations are dense integer ids; names only appear at the I/O
boundary. A :class:`KnowledgeBase` is filled once (loader or ``add_fact``)
and then treated as read-only by everything downstream.
"""
from __future__ import annotations

import hashlib
import io
import os
from collections import defaultdict
from typing import IO, Iterable, Iterator, NamedTuple, Sequence

from .errors import DataError


class Fact(NamedTuple):
    relation: int
    args: tuple[int, ...]


class KnowledgeBase:
    """A finite R-structure with name tables and per-key fact indexes."""

    def __init__(self):
        self.objects: list[str] = []
        self.relations: list[str] = []
        self.arities: list[int] = []
        self.facts: set[Fact] = set()
        self._object_ids: dict[str, int] = {}
        self._relation_ids: dict[str, int] = {}
        self._by_relation: list[list[Fact]] = []
        self._by_position: dict[tuple[int, int, int], list[Fact]] = defaultdict(list)
        self._incident: list[list[Fact]] = []
        # binary facts keyed by (head, tail) -> relation ids
        self._pairs: dict[tuple[int, int], list[int]] = {}
        self.max_arity = 0
        self._fingerprint: str | None = None

    # -- symbol tables -------------------------------------------------

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def __len__(self) -> int:
        return len(self.facts)

    def add_object(self, name: str) -> int:
        oid = self._object_ids.get(name)
        if oid is None:
            oid = len(self.objects)
            self._object_ids[name] = oid
            self.objects.append(name)
            self._incident.append([])
        return oid

    def add_relation(self, name: str, arity: int = 2) -> int:
        if arity < 1:
            raise DataError(f"relation {name!r}: arity must be positive, got {arity}")
        rid = self._relation_ids.get(name)
        if rid is None:
            rid = len(self.relations)
            self._relation_ids[name] = rid
            self.relations.append(name)
            self.arities.append(arity)
            self._by_relation.append([])
        elif self.arities[rid] != arity:
            raise DataError(
                f"relation {name!r} has arity {self.arities[rid]}, got {arity}"
            )
        return rid

    def object_id(self, name: str) -> int:
        try:
            return self._object_ids[name]
        except KeyError:
            raise DataError(f"unknown object {name!r}") from None

    def relation_id(self, name: str) -> int:
        try:
            return self._relation_ids[name]
        except KeyError:
            raise DataError(f"unknown relation {name!r}") from None

    def has_relation(self, name: str) -> bool:
        return name in self._relation_ids

    def has_object(self, name: str) -> bool:
        return name in self._object_ids

    # -- facts ---------------------------------------------------------

    def _check(self, fact: Fact) -> Fact:
        rel, args = fact
        args = tuple(args)
        if not 0 <= rel < len(self.relations):
            raise DataError(f"unknown relation id {rel}")
        if len(args) != self.arities[rel]:
            raise DataError(
                f"relation {self.relations[rel]!r} has arity {self.arities[rel]}, "
                f"got {len(args)} arguments"
            )
        n = len(self.objects)
        for a in args:
            if not 0 <= a < n:
                raise DataError(f"unknown object id {a}")
        return Fact(rel, args)

    def add_fact(self, fact: Fact) -> bool:
        """Insert ``fact``; returns False if it was already present."""
        fact = self._check(fact)
        if fact in self.facts:
            return False
        self.facts.add(fact)
        self._fingerprint = None
        rel, args = fact
        self._by_relation[rel].append(fact)
        for pos, a in enumerate(args):
            self._by_position[rel, pos, a].append(fact)
        for a in dict.fromkeys(args):
            self._incident[a].append(fact)
        if len(args) == 2:
            self._pairs.setdefault(args, []).append(rel)
        self.max_arity = max(self.max_arity, len(args))
        return True

    def add(self, relation: str, *args: str) -> bool:
        """Name-level convenience: ``kb.add("r", "a", "b")``."""
        rid = self.add_relation(relation, len(args))
        return self.add_fact(Fact(rid, tuple(self.add_object(a) for a in args)))

    def holds(self, fact: Fact) -> bool:
        self._check(fact)
        return Fact(fact[0], tuple(fact[1])) in self.facts

    def facts_of(self, relation: int) -> list[Fact]:
        return self._by_relation[relation]

    def facts_at(self, relation: int, position: int, obj: int) -> list[Fact]:
        return self._by_position.get((relation, position, obj), [])

    def incident(self, obj: int) -> list[Fact]:
        """Facts having ``obj`` among their arguments."""
        return self._incident[obj]

    def relations_between(self, head: int, tail: int) -> Sequence[int]:
        return self._pairs.get((head, tail), ())

    def fact_names(self, fact: Fact) -> tuple[str, ...]:
        return (self.relations[fact.relation],) + tuple(self.objects[a] for a in fact.args)

    def stats_line(self) -> str:
        return f"|D|={self.n_objects} |R|={self.n_relations} |facts|={len(self.facts)}"

    def fingerprint(self) -> str:
        """Content hash over the canonical serialization (order independent)."""
        if self._fingerprint is None:
            h = hashlib.sha256()
            for line in sorted(_canonical_lines(self)):
                h.update(line.encode("utf-8"))
                h.update(b"\n")
            self._fingerprint = h.hexdigest()[:16]
        return self._fingerprint


class Substructure:
    """The structure induced by a carrier set: facts whose arguments all lie in it."""

    __slots__ = ("kb", "carrier", "members", "facts", "_by_position")

    def __init__(self, kb: KnowledgeBase, carrier: tuple[int, ...], facts: frozenset):
        self.kb = kb
        self.carrier = carrier
        self.members = frozenset(carrier)
        self.facts = facts
        self._by_position = None

    def __len__(self):
        return len(self.carrier)

    def holds(self, relation: int, args: tuple[int, ...]) -> bool:
        return Fact(relation, args) in self.facts

    def facts_at(self, relation: int, position: int, obj: int) -> list[Fact]:
        if self._by_position is None:
            index = defaultdict(list)
            for f in self.facts:
                for pos, a in enumerate(f.args):
                    index[f.relation, pos, a].append(f)
            self._by_position = dict(index)
        return self._by_position.get((relation, position, obj), [])


def induce(kb: KnowledgeBase, carrier: Iterable[int]) -> Substructure:
    """Return the substructure of ``kb`` induced by ``carrier`` (order kept)."""
    members = tuple(dict.fromkeys(carrier))
    n = kb.n_objects
    for c in members:
        if not 0 <= c < n:
            raise DataError(f"unknown object id {c}")
    inside = set(members)
    m = len(members)
    incident = kb._incident
    scan_cost = sum(len(incident[c]) for c in members)
    facts = set()
    if kb.max_arity <= 2 and m * m < scan_cost:
        # pairwise lookup is cheaper than scanning hub adjacency
        pairs = kb._pairs
        for a in members:
            for b in members:
                rels = pairs.get((a, b))
                if rels:
                    facts.update(Fact(r, (a, b)) for r in rels)
        if 1 in kb.arities:
            for a in members:
                facts.update(f for f in incident[a] if len(f.args) == 1)
    else:
        for c in members:
            for f in incident[c]:
                if all(a in inside for a in f.args):
                    facts.add(f)
    return Substructure(kb, members, frozenset(facts))


# -- I/O -------------------------------------------------------------------


def _open_lines(source) -> Iterator[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            yield from _decode_lines(fh)
    elif isinstance(source, (bytes, bytearray)):
        yield from _decode_lines(io.BytesIO(source))
    else:
        yield from _decode_lines(source)


def _decode_lines(fh: IO) -> Iterator[str]:
    for raw in fh:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        yield raw.rstrip("\r\n")


def read_triples(source) -> list[tuple[str, str, str]]:
    """Parse ``head<TAB>relation<TAB>tail`` lines into name triples."""
    out = []
    for lineno, line in enumerate(_open_lines(source), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise DataError(
                f"line {lineno}: expected 3 tab-separated fields, got {len(fields)}"
            )
        out.append((fields[0], fields[1], fields[2]))
    return out


def read_nary(source) -> list[tuple[str, ...]]:
    """Parse ``relation<TAB>arg1<TAB>...<TAB>argn`` lines."""
    out = []
    for lineno, line in enumerate(_open_lines(source), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) < 2:
            raise DataError(f"line {lineno}: expected a relation and at least one argument")
        out.append(tuple(fields))
    return out


def load_triples(source, kb: KnowledgeBase | None = None) -> KnowledgeBase:
    """Load a triple TSV into a (new or given) knowledge base.

    ``source`` may be a path, a bytes object, or a binary/text stream.
    Ids are assigned in first-appearance order; duplicate lines collapse.
    """
    kb = KnowledgeBase() if kb is None else kb
    for h, r, t in read_triples(source):
        kb.add(r, h, t)
    return kb


def load_nary(source, kb: KnowledgeBase | None = None) -> KnowledgeBase:
    kb = KnowledgeBase() if kb is None else kb
    for lineno, (rel, *args) in enumerate(read_nary(source), start=1):
        try:
            kb.add(rel, *args)
        except DataError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
    return kb


def _canonical_lines(kb: KnowledgeBase) -> Iterator[str]:
    for f in kb.facts:
        names = kb.fact_names(f)
        if len(f.args) == 2:
            yield f"{names[1]}\t{names[0]}\t{names[2]}"
        else:
            yield "\t".join(names)


def serialize(kb: KnowledgeBase, stream: IO[str]) -> None:
    """Write the fact set in canonical (sorted) form.

    Binary facts use the triple layout; other arities use the n-ary layout.
    """
    for line in sorted(_canonical_lines(kb)):
        stream.write(line + "\n")


def save_snapshot(kb: KnowledgeBase, directory) -> None:
    """Write name tables and facts so that :func:`load_snapshot` restores identical ids."""
    directory = os.fspath(directory)
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "objects.txt"), "w", encoding="utf-8") as fh:
        fh.writelines(name + "\n" for name in kb.objects)
    with open(os.path.join(directory, "relations.txt"), "w", encoding="utf-8") as fh:
        fh.writelines(f"{name}\t{arity}\n" for name, arity in zip(kb.relations, kb.arities))
    with open(os.path.join(directory, "facts.tsv"), "w", encoding="utf-8") as fh:
        serialize(kb, fh)


def load_snapshot(directory) -> KnowledgeBase:
    directory = os.fspath(directory)
    kb = KnowledgeBase()
    for line in _open_lines(os.path.join(directory, "relations.txt")):
        if line:
            name, arity = line.rsplit("\t", 1)
            kb.add_relation(name, int(arity))
    for line in _open_lines(os.path.join(directory, "objects.txt")):
        if line:
            kb.add_object(line)
    path = os.path.join(directory, "facts.tsv")
    for fields in read_nary(path):
        # triple layout for binary facts, relation-first layout otherwise
        if len(fields) == 3 and kb.has_relation(fields[1]) and kb.arities[kb.relation_id(fields[1])] == 2:
            kb.add(fields[1], fields[0], fields[2])
        else:
            kb.add(fields[0], *fields[1:])
    return kb
