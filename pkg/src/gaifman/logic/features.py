"""Relational feature sets: the default per-relation templates and DSL files."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

from ..errors import DataError, ParseError
from .ast import And, Atom, Exists, Formula, Var, target_variables, to_text
from .parser import parse

S1, S2, X = Var("s1"), Var("s2"), Var("x")


def _templates(r: str) -> list[Formula]:
    return [
        Atom(r, (S1, S2)),
        Atom(r, (S2, S1)),
        Exists("x", Atom(r, (X, S1))),
        Exists("x", Atom(r, (S1, X))),
        Exists("x", Atom(r, (X, S2))),
        Exists("x", Atom(r, (S2, X))),
        Exists("x", And((Atom(r, (S1, X)), Atom(r, (X, S2))))),
        Exists("x", And((Atom(r, (S2, X)), Atom(r, (X, S1))))),
    ]


TEMPLATES_PER_RELATION = 8


@dataclass(frozen=True)
class FeatureSet:
    formulas: tuple[Formula, ...]
    source: str = "built-in"

    @classmethod
    def of(cls, formulas: Iterable[Formula], source: str = "built-in") -> "FeatureSet":
        return cls(tuple(dict.fromkeys(formulas)), source)

    def __len__(self) -> int:
        return len(self.formulas)

    def __iter__(self):
        return iter(self.formulas)

    def __getitem__(self, i):
        return self.formulas[i]

    def arity(self) -> int:
        """Largest target-variable index used by any feature."""
        return max((int(v[1:]) for f in self.formulas for v in target_variables(f)), default=0)

    def to_text(self) -> str:
        return "".join(to_text(f) + "\n" for f in self.formulas)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]

    def check_targets(self, n: int) -> None:
        for f in self.formulas:
            for v in target_variables(f):
                if int(v[1:]) > n:
                    raise DataError(f"feature {to_text(f)!r} uses {v} but the query has {n} targets")


def default_feature_set(relations) -> FeatureSet:
    """Eight templates per binary relation, ordered by (relation, template).

    ``relations`` is a KnowledgeBase, a list of names (taken as binary), or
    a list of ``(name, arity)`` pairs.
    """
    if hasattr(relations, "relations") and hasattr(relations, "arities"):
        pairs = list(zip(relations.relations, relations.arities))
    else:
        pairs = [(r, 2) if isinstance(r, str) else tuple(r) for r in relations]
    formulas = []
    for name, arity in pairs:
        if arity != 2:
            raise DataError(f"default features are defined for binary relations; {name!r} has arity {arity}")
        formulas.extend(_templates(name))
    return FeatureSet.of(formulas, "built-in")


def parse_feature_text(text: str, kb=None, source: str = "file") -> FeatureSet:
    """One formula per line; ``#`` starts a comment."""
    formulas = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        try:
            formulas.append(parse(line, kb))
        except ParseError as exc:
            # report the position in the file, not in the stripped line
            column = exc.column + len(raw) - len(raw.lstrip())
            raise ParseError(f"{source}: {exc.message}", lineno, column) from None
    return FeatureSet.of(formulas, source)


def _strip_comment(line: str) -> str:
    # '#' inside back-quotes is part of a name
    quoted = False
    for i, ch in enumerate(line):
        if ch == "`":
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def load_feature_file(path, kb=None) -> FeatureSet:
    with open(path, encoding="utf-8") as fh:
        return parse_feature_text(fh.read(), kb, source=str(path))


def write_feature_file(features: FeatureSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(features.to_text())


def relation_union_features(relations: Sequence[str]) -> FeatureSet:
    """r(s1, s2) and r(s2, s1) for every relation (the universal-schema set)."""
    formulas = []
    for r in relations:
        formulas += [Atom(r, (S1, S2)), Atom(r, (S2, S1))]
    return FeatureSet.of(formulas, "built-in")


def path_features(relations: Sequence[str]) -> FeatureSet:
    """Two-hop paths ``exists x . a(s1, x) & b(x, s2)`` for all ordered pairs, both directions."""
    formulas = []
    for a in relations:
        for b in relations:
            formulas.append(Exists("x", And((Atom(a, (S1, X)), Atom(b, (X, S2))))))
            formulas.append(Exists("x", And((Atom(a, (S2, X)), Atom(b, (X, S1))))))
    return FeatureSet.of(formulas, "built-in")


def union(*sets: FeatureSet) -> FeatureSet:
    """Concatenate feature sets, dropping repeated formulas (first position wins)."""
    return FeatureSet.of((f for s in sets for f in s), "built-in")
