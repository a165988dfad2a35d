"""Recursive-descent parser for the feature DSL.

Grammar::

    formula := quant | impl
    impl    := disj ("=>" disj)?
    disj    := conj ("|" conj)*
    conj    := unary ("&" unary)*
    unary   := "!" unary | "(" formula ")" | quant | atom
    quant   := ("exists" | "forall") IDENT ("," IDENT)* "." formula
    atom    := NAME "(" term ("," term)* ")"

A quantifier body extends as far to the right as possible. Relation names
that are not plain identifiers (e.g. ``/film/film/genre``) are back-quoted;
a back-quoted name in argument position is an object constant.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import ParseError
from .ast import (KEYWORDS, RESERVED, And, Atom, Const, Exists, Forall, Implies, Not,
                  Or, Var, is_counting, is_target)

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<quoted>`[^`\n]*`)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>=>|[()&|!,.])
""", re.VERBOSE)


@dataclass
class Token:
    kind: str  # ident, quoted, op, eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        else:
            for i, ch in enumerate(m.group()):
                if ch == "\n":
                    line += 1
                    line_start = pos + i + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class Parser:
    def __init__(self, text: str, kb=None):
        self.tokens = tokenize(text)
        self.pos = 0
        self.kb = kb
        self.scope: list[str] = []
        self.arity: dict[str, int] = {}

    # -- token helpers ---------------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind in ("op", "ident") and tok.text == text

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if not self.at(text):
            self.fail(f"expected {text!r} but found {tok.text or 'end of input'!r}", tok)
        return self.advance()

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.col)

    # -- grammar ---------------------------------------------------------

    def parse(self):
        phi = self.formula()
        if self.peek().kind != "eof":
            self.fail(f"unexpected {self.peek().text!r}")
        return phi

    def formula(self):
        if self.at("exists") or self.at("forall"):
            return self.quant()
        return self.impl()

    def impl(self):
        left = self.disj()
        if self.at("=>"):
            self.advance()
            return Implies(left, self.disj())
        return left

    def disj(self):
        parts = [self.conj()]
        while self.at("|"):
            self.advance()
            parts.append(self.conj())
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def conj(self):
        parts = [self.unary()]
        while self.at("&"):
            self.advance()
            parts.append(self.unary())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def unary(self):
        if self.at("!"):
            self.advance()
            return Not(self.unary())
        if self.at("("):
            self.advance()
            phi = self.formula()
            self.expect(")")
            return phi
        if self.at("exists") or self.at("forall"):
            return self.quant()
        return self.atom()

    def quant(self):
        kind = self.advance().text
        names = [self.bound_name()]
        while self.at(","):
            self.advance()
            names.append(self.bound_name())
        self.expect(".")
        self.scope.extend(names)
        body = self.formula()
        del self.scope[len(self.scope) - len(names):]
        node = Exists if kind == "exists" else Forall
        for name in reversed(names):
            body = node(name, body)
        return body

    def bound_name(self) -> str:
        tok = self.peek()
        if tok.kind != "ident" or tok.text in KEYWORDS:
            self.fail(f"expected a variable name, found {tok.text or 'end of input'!r}")
        if is_target(tok.text):
            self.fail(f"target variable {tok.text} cannot be quantified")
        if is_counting(tok.text):
            self.fail(f"counting variable {tok.text} cannot be quantified")
        if tok.text in RESERVED:
            self.fail(f"{tok.text!r} is reserved")
        return self.advance().text

    def atom(self):
        tok = self.peek()
        if tok.kind == "quoted":
            name = tok.text[1:-1]
        elif tok.kind == "ident" and tok.text not in KEYWORDS and tok.text not in RESERVED:
            name = tok.text
        else:
            self.fail(f"expected an atom, found {tok.text or 'end of input'!r}")
        self.advance()
        self.expect("(")
        terms = [self.term()]
        while self.at(","):
            self.advance()
            terms.append(self.term())
        self.expect(")")
        self.check_relation(name, len(terms), tok)
        return Atom(name, tuple(terms))

    def term(self):
        tok = self.peek()
        if tok.kind == "quoted":
            self.advance()
            name = tok.text[1:-1]
            if self.kb is not None and not self.kb.has_object(name):
                self.fail(f"unknown object {name!r}", tok)
            return Const(name)
        if tok.kind != "ident" or tok.text in KEYWORDS:
            self.fail(f"expected a term, found {tok.text or 'end of input'!r}")
        self.advance()
        name = tok.text
        if not (is_target(name) or is_counting(name)) and name not in self.scope:
            self.fail(f"unbound variable {name!r}", tok)
        return Var(name)

    def check_relation(self, name: str, arity: int, tok: Token):
        if self.kb is not None:
            if not self.kb.has_relation(name):
                self.fail(f"unknown relation {name!r}", tok)
            expected = self.kb.arities[self.kb.relation_id(name)]
        else:
            expected = self.arity.setdefault(name, arity)
        if expected != arity:
            self.fail(f"relation {name!r} has arity {expected}, used with {arity}", tok)


def parse(text: str, kb=None):
    """Parse one formula. With ``kb`` given, relation and object names are checked."""
    return Parser(text, kb).parse()
