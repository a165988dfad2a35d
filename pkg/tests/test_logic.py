import pytest
from hypothesis import given, settings, strategies as st

from gaifman.errors import DataError, ParseError
from gaifman.graph import build_gaifman_graph, neighborhood
from gaifman.kb import KnowledgeBase, induce, load_triples
from gaifman.logic import (And, Atom, Const, Exists, Forall, Implies, Not, Or, Var, count,
                           counting_variables, default_feature_set, evaluate, free_variables,
                           load_feature_file, parse, parse_feature_text, path_features,
                           quantifier_depth, relation_union_features, relativized_evaluate,
                           result_set, to_text, union, write_feature_file)
from gaifman.logic.ast import encoding_size

from conftest import small_kbs
from formulas import formulas, ground_count, ground_truth

S1, S2, X = Var("s1"), Var("s2"), Var("x")


# -- parser ------------------------------------------------------------------


def test_parse_path_feature():
    phi = parse("exists x . r1(s1, x) & r2(x, s2)")
    assert phi == Exists("x", And((Atom("r1", (S1, X)), Atom("r2", (X, S2)))))


def test_precedence():
    phi = parse("a(s1) | b(s1) & !c(s1) => d(s1)")
    assert phi == Implies(Or((Atom("a", (S1,)), And((Atom("b", (S1,)), Not(Atom("c", (S1,))))))),
                          Atom("d", (S1,)))


def test_multi_variable_quantifier_nests():
    assert parse("forall x, y . r(x, y)") == Forall("x", Forall("y", Atom("r", (X, Var("y")))))


def test_quantifier_body_extends_right():
    phi = parse("exists x . r(s1, x) | q(x, s2)")
    assert isinstance(phi, Exists) and isinstance(phi.body, Or)


def test_backquoted_names():
    phi = parse("`/film/film/genre`(s1, `drama`)")
    assert phi == Atom("/film/film/genre", (S1, Const("drama")))


@pytest.mark.parametrize("text, fragment", [
    ("exists s1 . r(s1, s1)", "target variable"),
    ("exists u1 . r(u1, s1)", "counting variable"),
    ("r(s1, x)", "unbound variable"),
    ("r(s1, s2) & r(s1)", "arity"),
    ("r(s1, s2", r"expected '\)'"),
    ("r(s1, s2) r", "unexpected"),
    ("count(s1)", "expected an atom"),
    ("exists count . r(count, s1)", "reserved"),
    ("r(s1, $)", "unexpected character"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError, match=fragment):
        parse(text)


def test_parse_error_position():
    with pytest.raises(ParseError) as info:
        parse("r(s1, s2) &\n  q(s1, y)")
    assert (info.value.line, info.value.column) == (2, 9)
    assert "line 2, column 9" in str(info.value)


def test_kb_checks(family_kb):
    assert parse("parent(s1, `bob`)", family_kb)
    with pytest.raises(ParseError, match="unknown relation"):
        parse("sibling(s1, s2)", family_kb)
    with pytest.raises(ParseError, match="unknown object"):
        parse("parent(s1, `zed`)", family_kb)
    with pytest.raises(ParseError, match="arity"):
        parse("parent(s1)", family_kb)


def test_variable_helpers():
    phi = parse("exists x . r(s1, x) & q(x, u1) & r(s2, u2)")
    assert free_variables(phi) == {"s1", "s2", "u1", "u2"}
    assert counting_variables(phi) == ["u1", "u2"]
    assert quantifier_depth(parse("exists x . forall y . r(x, y) | exists z . r(z, s1)")) == 3
    assert quantifier_depth(parse("(exists x . forall y . r(x, y)) | exists z . r(z, s1)")) == 2
    assert encoding_size(parse("r(s1, s2)")) < encoding_size(parse("r(s1, s2) & r(s2, s1)"))


@given(st.data())
def test_print_parse_round_trip(data):
    kb = KnowledgeBase()
    kb.add("r", "a", "b")
    kb.add("t", "a", "b", "c")
    kb.add("u", "c")
    kb.add("/odd name", "a", "weird object")
    phi = data.draw(formulas(kb, counting=("u1",)))
    assert parse(to_text(phi)) == phi


# -- evaluation ---------------------------------------------------------------


def test_evaluate_examples():
    kb = load_triples(b"a\tr\tb\nb\tr\tc\n")
    sub = induce(kb, range(kb.n_objects))
    phi = parse("exists x . r(s1, x) & r(x, s2)")
    a, c = kb.object_id("a"), kb.object_id("c")
    assert evaluate(sub, phi, (a, c))
    assert not evaluate(sub, phi, (c, a))
    assert count(sub, parse("r(s1, u1)"), (a,)) == 1
    assert count(sub, parse("exists x . r(u1, x)"), ()) == 2


def test_evaluate_outside_carrier_is_false():
    kb = load_triples(b"a\tr\tb\n")
    sub = induce(kb, [0])
    assert not evaluate(sub, parse("r(s1, s2)"), (0, 1))


def test_unbound_target_raises():
    kb = load_triples(b"a\tr\tb\n")
    sub = induce(kb, [0, 1])
    with pytest.raises(DataError, match="unbound"):
        evaluate(sub, parse("r(s1, s2)"), (0,))
    with pytest.raises(ValueError):
        count(sub, parse("r(s1, s2)"), (0, 1))


def test_unknown_relation_is_false():
    kb = load_triples(b"a\tr\tb\n")
    sub = induce(kb, [0, 1])
    assert not evaluate(sub, parse("nope(s1, s2)"), (0, 1))
    assert evaluate(sub, parse("!nope(s1, s2)"), (0, 1))


@settings(max_examples=300)
@given(small_kbs(max_objects=8, max_relations=3), st.data())
def test_evaluation_matches_grounding(kb, data):
    carrier = data.draw(st.lists(st.integers(0, kb.n_objects - 1), min_size=1, max_size=8, unique=True))
    sub = induce(kb, carrier)
    phi = data.draw(formulas(kb, max_depth=3))
    binding = data.draw(st.tuples(st.sampled_from(carrier), st.sampled_from(carrier)))
    facts = {(f.relation, f.args) for f in sub.facts}
    env = {"s1": binding[0], "s2": binding[1]}
    assert evaluate(sub, phi, binding) == ground_truth(kb, carrier, facts, phi, env)


@settings(max_examples=150)
@given(small_kbs(max_objects=6, max_relations=3), st.data())
def test_counting_matches_grounding(kb, data):
    carrier = data.draw(st.lists(st.integers(0, kb.n_objects - 1), min_size=1, max_size=6, unique=True))
    sub = induce(kb, carrier)
    phi = data.draw(formulas(kb, targets=("s1",), counting=("u1", "u2"), max_depth=2))
    if not counting_variables(phi):
        phi = And((phi, Atom(kb.relations[0], (Var("u1"),) * kb.arities[0])))
    us = counting_variables(phi)
    s1 = data.draw(st.sampled_from(carrier))
    facts = {(f.relation, f.args) for f in sub.facts}
    assert count(sub, phi, (s1,)) == ground_count(kb, carrier, facts, phi, {"s1": s1}, us)


@settings(max_examples=300)
@given(small_kbs(max_objects=12, max_relations=3), st.integers(0, 3), st.data())
def test_locality(kb, r, data):
    g = build_gaifman_graph(kb)
    phi = data.draw(formulas(kb, max_depth=2))
    binding = data.draw(st.tuples(*[st.integers(0, kb.n_objects - 1)] * 2))
    sub = induce(kb, neighborhood(g, binding, r).members)
    assert relativized_evaluate(kb, g, phi, binding, r) == evaluate(sub, phi, binding)


# -- conjunctive queries -----------------------------------------------------


def test_result_set_join(family_kb):
    kb = family_kb
    q = parse("exists x . parent(s1, x) & parent(x, s2)")
    got = {(kb.objects[a], kb.objects[b]) for a, b in result_set(kb, q)}
    assert got == {("ann", "cat")}


def test_result_set_rejects_non_conjunctive(family_kb):
    with pytest.raises(DataError, match="conjunctive"):
        result_set(family_kb, parse("parent(s1, s2) | likes(s1, s2)"))
    with pytest.raises(DataError, match="without gaps"):
        result_set(family_kb, parse("parent(s1, s3)"))
    with pytest.raises(DataError, match="counting"):
        result_set(family_kb, parse("parent(s1, u1)"))


def test_result_set_unknown_relation_is_empty(family_kb):
    assert result_set(family_kb, parse("sibling(s1, s2)")) == set()


@st.composite
def conjunctive(draw, kb):
    n_atoms = draw(st.integers(1, 3))
    names = ["s1", "s2", "x", "y"]
    atoms = []
    for _ in range(n_atoms):
        rel = draw(st.integers(0, kb.n_relations - 1))
        atoms.append(Atom(kb.relations[rel], tuple(Var(draw(st.sampled_from(names)))
                                                   for _ in range(kb.arities[rel]))))
    used = {t.name for a in atoms for t in a.terms}
    # targets must be s1..sn without gaps
    if "s2" in used and "s1" not in used:
        atoms.append(Atom(kb.relations[0], (Var("s1"),) * kb.arities[0]))
        used.add("s1")
    if "s1" not in used:
        atoms.append(Atom(kb.relations[0], (Var("s1"),) * kb.arities[0]))
    body = atoms[0] if len(atoms) == 1 else And(tuple(atoms))
    for v in ("y", "x"):
        if any(t.name == v for a in atoms for t in a.terms):
            body = Exists(v, body)
    return body


@settings(max_examples=300)
@given(small_kbs(max_objects=7, max_relations=3), st.data())
def test_result_set_matches_nested_loops(kb, data):
    q = data.draw(conjunctive(kb))
    n = 2 if "s2" in free_variables(q) else 1
    facts = {(f.relation, f.args) for f in kb.facts}
    domain = list(range(kb.n_objects))
    expected = set()
    for values in __import__("itertools").product(domain, repeat=n):
        env = dict(zip(("s1", "s2"), values))
        if ground_truth(kb, domain, facts, q, env):
            expected.add(values)
    assert result_set(kb, q) == expected


# -- feature sets ------------------------------------------------------------


def test_default_feature_set_shape(family_kb):
    fs = default_feature_set(family_kb)
    assert len(fs) == 8 * family_kb.n_relations
    assert fs.arity() == 2
    assert to_text(fs[0]) == "parent(s1, s2)"
    assert to_text(fs[6]) == "exists x . parent(s1, x) & parent(x, s2)"


def test_default_rejects_non_binary():
    with pytest.raises(DataError):
        default_feature_set([("t", 3)])


def test_union_and_paths_deduplicate():
    base = default_feature_set(["a", "b"])
    paths = path_features(["a", "b"])
    assert len(paths) == 8
    merged = union(base, paths)
    # the two same-relation paths per relation are already in the default set
    assert len(merged) == 16 + 8 - 4


def test_feature_file_round_trip(tmp_path, family_kb):
    fs = default_feature_set(family_kb)
    path = tmp_path / "phi.txt"
    write_feature_file(fs, path)
    again = load_feature_file(path, family_kb)
    assert again.formulas == fs.formulas
    assert again.digest() == fs.digest()


def test_feature_text_comments():
    fs = parse_feature_text("# header\nr(s1, s2)  # trailing\n\n`a#b`(s1, s2)\n")
    assert [to_text(f) for f in fs] == ["r(s1, s2)", "`a#b`(s1, s2)"]


def test_feature_text_reports_line():
    with pytest.raises(ParseError) as info:
        parse_feature_text("r(s1, s2)\nr(s1,\n")
    assert info.value.line == 2


def test_relation_union_features():
    fs = relation_union_features(["a", "b"])
    assert [to_text(f) for f in fs] == ["a(s1, s2)", "a(s2, s1)", "b(s1, s2)", "b(s2, s1)"]


def test_check_targets():
    fs = parse_feature_text("r(s1, s2)\n")
    with pytest.raises(DataError):
        fs.check_targets(1)
