"""Model checking and counting over substructures, and query result sets.

Quantifiers range over the carrier of the substructure they are evaluated
on; evaluating on an induced neighborhood therefore *is* relativization to
that neighborhood.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Mapping, Sequence

from ..errors import DataError
from ..graph import GaifmanGraph, bfs_levels
from ..kb import Fact, KnowledgeBase, Substructure
from .ast import (And, Atom, Const, Exists, Forall, Formula, Implies, Not, Or, Var,
                  counting_variables, is_target, target_variables)


def _env(binding) -> dict[str, int]:
    if isinstance(binding, Mapping):
        return {str(k): int(v) for k, v in binding.items()}
    return {f"s{i}": int(d) for i, d in enumerate(binding, start=1)}


class _Structure:
    """What the evaluator needs: a quantifier range and an atom oracle."""

    def __init__(self, kb: KnowledgeBase, domain: Sequence[int], facts):
        self.kb = kb
        self.domain = domain
        self.facts = facts
        self._rel: dict[str, int | None] = {}
        self._obj: dict[str, int | None] = {}

    def relation(self, name: str):
        if name not in self._rel:
            self._rel[name] = self.kb.relation_id(name) if self.kb.has_relation(name) else None
        return self._rel[name]

    def const(self, name: str):
        if name not in self._obj:
            self._obj[name] = self.kb.object_id(name) if self.kb.has_object(name) else None
        return self._obj[name]


def _holds(phi: Formula, env: dict, st: _Structure) -> bool:
    if isinstance(phi, Atom):
        rel = st.relation(phi.relation)
        if rel is None:
            return False
        args = []
        for t in phi.terms:
            if isinstance(t, Var):
                args.append(env[t.name])
            else:
                c = st.const(t.name)
                if c is None:
                    return False
                args.append(c)
        return Fact(rel, tuple(args)) in st.facts
    if isinstance(phi, Not):
        return not _holds(phi.body, env, st)
    if isinstance(phi, And):
        return all(_holds(p, env, st) for p in phi.parts)
    if isinstance(phi, Or):
        return any(_holds(p, env, st) for p in phi.parts)
    if isinstance(phi, Implies):
        return (not _holds(phi.left, env, st)) or _holds(phi.right, env, st)
    if isinstance(phi, _InBall):
        return env[phi.var] in phi.ball if isinstance(phi.var, str) else phi.var in phi.ball
    # quantifiers: save and restore the shadowed binding
    var = phi.var
    saved = env.get(var, _MISSING)
    try:
        if isinstance(phi, Exists):
            for d in st.domain:
                env[var] = d
                if _holds(phi.body, env, st):
                    return True
            return False
        for d in st.domain:
            env[var] = d
            if not _holds(phi.body, env, st):
                return False
        return True
    finally:
        if saved is _MISSING:
            env.pop(var, None)
        else:
            env[var] = saved


_MISSING = object()


def _check_binding(phi: Formula, env: dict):
    missing = [v for v in target_variables(phi) + counting_variables(phi) if v not in env]
    if missing:
        raise DataError(f"unbound free variables: {', '.join(missing)}")


def evaluate(sub: Substructure, phi: Formula, binding, counting: Mapping | None = None) -> bool:
    """Truth of ``phi`` in ``sub`` with ``s_i`` bound to ``binding[i-1]``.

    ``counting`` optionally assigns counting variables (``{"u1": obj}``).
    Atoms mentioning objects outside the carrier are false.
    """
    env = _env(binding)
    if counting:
        env.update(_env(counting))
    _check_binding(phi, env)
    return _holds(phi, env, _Structure(sub.kb, sub.carrier, sub.facts))


def count(sub: Substructure, phi: Formula, binding) -> int:
    """Number of assignments of the counting variables over the carrier that satisfy ``phi``."""
    us = counting_variables(phi)
    if not us:
        raise ValueError("count() needs a formula with counting variables; use evaluate()")
    env = _env(binding)
    _check_binding(phi, {**env, **{u: 0 for u in us}})
    st = _Structure(sub.kb, sub.carrier, sub.facts)
    total = 0
    for values in product(sub.carrier, repeat=len(us)):
        env.update(zip(us, values))
        if _holds(phi, env, st):
            total += 1
    return total


# -- relativization oracle ------------------------------------------------


@dataclass(frozen=True)
class _InBall:
    var: object  # variable name or a constant's object id
    ball: frozenset


def relativize(phi: Formula, ball: frozenset, kb: KnowledgeBase) -> Formula:
    """Rewrite quantifiers to range over ``ball`` and guard constant atoms."""
    if isinstance(phi, Atom):
        guards = []
        for t in phi.terms:
            if isinstance(t, Const):
                oid = kb.object_id(t.name) if kb.has_object(t.name) else -1
                guards.append(_InBall(oid, ball))
        return And(tuple(guards) + (phi,)) if guards else phi
    if isinstance(phi, Not):
        return Not(relativize(phi.body, ball, kb))
    if isinstance(phi, And):
        return And(tuple(relativize(p, ball, kb) for p in phi.parts))
    if isinstance(phi, Or):
        return Or(tuple(relativize(p, ball, kb) for p in phi.parts))
    if isinstance(phi, Implies):
        return Implies(relativize(phi.left, ball, kb), relativize(phi.right, ball, kb))
    body = relativize(phi.body, ball, kb)
    if isinstance(phi, Exists):
        return Exists(phi.var, And((_InBall(phi.var, ball), body)))
    return Forall(phi.var, Implies(_InBall(phi.var, ball), body))


def relativized_evaluate(kb: KnowledgeBase, graph: GaifmanGraph, phi: Formula,
                         binding, r: int) -> bool:
    """Evaluate the r-relativization of ``phi`` over the whole knowledge base.

    Quantifiers range over all of D behind a distance guard; this is the
    independent counterpart of evaluating on the induced neighborhood.
    """
    env = _env(binding)
    _check_binding(phi, env)
    targets = [d for name, d in env.items() if is_target(name)]
    ball = frozenset(bfs_levels(graph, targets, r))
    rel = relativize(phi, ball, kb)
    return _holds(rel, env, _Structure(kb, range(kb.n_objects), kb.facts))


# -- conjunctive query evaluation ---------------------------------------


def _conjuncts(q: Formula) -> tuple[list[Atom], set[str]]:
    existential = set()
    while isinstance(q, Exists):
        existential.add(q.var)
        q = q.body
    parts = q.parts if isinstance(q, And) else (q,)
    atoms = []
    for p in parts:
        if not isinstance(p, Atom):
            raise DataError(
                "target queries must be range-restricted conjunctive queries: "
                "an optional exists-prefix over a conjunction of positive atoms"
            )
        atoms.append(p)
    return atoms, existential


def result_set(kb: KnowledgeBase, q: Formula) -> set[tuple[int, ...]]:
    """All target-variable bindings satisfying ``q`` in ``kb`` (index-driven join)."""
    atoms, _ = _conjuncts(q)
    if counting_variables(q):
        raise DataError("target queries cannot contain counting variables")
    targets = target_variables(q)
    if not targets:
        raise DataError("target query needs at least one target variable")
    n = int(targets[-1][1:])
    if targets != [f"s{i}" for i in range(1, n + 1)]:
        raise DataError("target variables must be s1..sn without gaps")
    resolved = []
    for a in atoms:
        if not kb.has_relation(a.relation):
            return set()
        rel = kb.relation_id(a.relation)
        if kb.arities[rel] != len(a.terms):
            raise DataError(f"relation {a.relation!r} has arity {kb.arities[rel]}")
        terms = []
        for t in a.terms:
            if isinstance(t, Const):
                if not kb.has_object(t.name):
                    return set()
                terms.append(kb.object_id(t.name))
            else:
                terms.append(t.name)
        resolved.append((rel, tuple(terms)))
    out = set()
    _join(kb, resolved, {}, out, targets)
    return out


def _join(kb, pending, env, out, targets):
    if not pending:
        out.add(tuple(env[v] for v in targets))
        return
    # most-constrained atom first: fewest candidate facts from the best index
    best = None
    for idx, (rel, terms) in enumerate(pending):
        cands = None
        for pos, t in enumerate(terms):
            obj = t if isinstance(t, int) else env.get(t)
            if obj is not None:
                hits = kb.facts_at(rel, pos, obj)
                if cands is None or len(hits) < len(cands):
                    cands = hits
        if cands is None:
            cands = kb.facts_of(rel)
        if best is None or len(cands) < len(best[1]):
            best = (idx, cands)
    idx, cands = best
    rel, terms = pending[idx]
    rest = pending[:idx] + pending[idx + 1:]
    for f in cands:
        added = []
        ok = True
        for t, a in zip(terms, f.args):
            if isinstance(t, int):
                ok = t == a
            elif t in env:
                ok = env[t] == a
            else:
                env[t] = a
                added.append(t)
            if not ok:
                break
        if ok:
            _join(kb, rest, env, out, targets)
        for t in added:
            del env[t]
