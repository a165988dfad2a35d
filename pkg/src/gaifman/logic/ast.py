"""Formula AST for the first-order feature language, plus a printer.

Variable classes are determined by name: ``s1, s2, ...`` are target
variables (bound to the query tuple), ``u1, u2, ...`` are counting variables,
anything else must be bound by a quantifier. Back-quoted names are object
constants.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Union

_TARGET = re.compile(r"s(\d+)\Z")
_COUNTING = re.compile(r"u(\d+)\Z")
_SIMPLE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

KEYWORDS = frozenset({"exists", "forall"})
# reserved for second-order features and aggregations
RESERVED = frozenset({"count", "sum", "min", "max", "avg", "true", "false"})


@dataclass(frozen=True)
class Var:
    name: str

    @property
    def kind(self) -> str:
        if _TARGET.match(self.name):
            return "target"
        if _COUNTING.match(self.name):
            return "counting"
        return "bound"

    @property
    def index(self) -> int:
        m = _TARGET.match(self.name) or _COUNTING.match(self.name)
        if m is None:
            raise ValueError(f"{self.name} is not a target or counting variable")
        return int(m.group(1))


@dataclass(frozen=True)
class Const:
    name: str


Term = Union[Var, Const]


@dataclass(frozen=True)
class Atom:
    relation: str
    terms: tuple[Term, ...]


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class And:
    parts: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    parts: tuple["Formula", ...]


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Exists:
    var: str
    body: "Formula"


@dataclass(frozen=True)
class Forall:
    var: str
    body: "Formula"


Formula = Union[Atom, Not, And, Or, Implies, Exists, Forall]


def is_target(name: str) -> bool:
    return _TARGET.match(name) is not None


def is_counting(name: str) -> bool:
    return _COUNTING.match(name) is not None


def children(phi: Formula) -> tuple:
    if isinstance(phi, Atom):
        return ()
    if isinstance(phi, Not):
        return (phi.body,)
    if isinstance(phi, (And, Or)):
        return phi.parts
    if isinstance(phi, Implies):
        return (phi.left, phi.right)
    return (phi.body,)


def walk(phi: Formula) -> Iterator[Formula]:
    yield phi
    for c in children(phi):
        yield from walk(c)


def atoms(phi: Formula) -> Iterator[Atom]:
    return (n for n in walk(phi) if isinstance(n, Atom))


def free_variables(phi: Formula) -> frozenset[str]:
    if isinstance(phi, Atom):
        return frozenset(t.name for t in phi.terms if isinstance(t, Var))
    if isinstance(phi, (Exists, Forall)):
        return free_variables(phi.body) - {phi.var}
    out = frozenset()
    for c in children(phi):
        out |= free_variables(c)
    return out


def target_variables(phi: Formula) -> list[str]:
    return sorted((v for v in free_variables(phi) if is_target(v)), key=lambda v: int(v[1:]))


def counting_variables(phi: Formula) -> list[str]:
    return sorted((v for v in free_variables(phi) if is_counting(v)), key=lambda v: int(v[1:]))


def quantifier_depth(phi: Formula) -> int:
    inner = max((quantifier_depth(c) for c in children(phi)), default=0)
    return inner + (1 if isinstance(phi, (Exists, Forall)) else 0)


def encoding_size(phi: Formula) -> int:
    """Number of AST nodes plus atom arguments."""
    return sum(1 + (len(n.terms) if isinstance(n, Atom) else 0) for n in walk(phi))


# -- printing ----------------------------------------------------------------

_QUANT, _IMPL, _DISJ, _CONJ, _UNARY = range(5)


def _level(phi: Formula) -> int:
    if isinstance(phi, (Exists, Forall)):
        return _QUANT
    if isinstance(phi, Implies):
        return _IMPL
    if isinstance(phi, Or):
        return _DISJ
    if isinstance(phi, And):
        return _CONJ
    return _UNARY


def _name(name: str) -> str:
    if _SIMPLE.match(name) and name not in KEYWORDS:
        return name
    return f"`{name}`"


def _term(t: Term) -> str:
    return f"`{t.name}`" if isinstance(t, Const) else t.name


def _wrap(phi: Formula, above: int) -> str:
    """Print ``phi``, parenthesized unless it binds tighter than ``above``."""
    text = to_text(phi)
    return text if _level(phi) > above else f"({text})"


def to_text(phi: Formula) -> str:
    if isinstance(phi, Atom):
        return f"{_name(phi.relation)}({', '.join(_term(t) for t in phi.terms)})"
    if isinstance(phi, Not):
        return "!" + _wrap(phi.body, _CONJ)
    if isinstance(phi, And):
        return " & ".join(_wrap(p, _CONJ) for p in phi.parts)
    if isinstance(phi, Or):
        return " | ".join(_wrap(p, _DISJ) for p in phi.parts)
    if isinstance(phi, Implies):
        return f"{_wrap(phi.left, _IMPL)} => {_wrap(phi.right, _IMPL)}"
    kw = "exists" if isinstance(phi, Exists) else "forall"
    return f"{kw} {phi.var} . {to_text(phi.body)}"
