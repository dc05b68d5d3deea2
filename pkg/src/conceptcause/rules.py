"""Boolean rule expressions over feature slots.

Grammar::

    expr      := term ('|' term)*
    term      := factor ('&' factor)*
    factor    := '!' factor | '(' expr ')' | predicate
    predicate := IDENT '=' VALUE

Binary operators associate to the left.
"""

from __future__ import annotations

import re
from collections.abc import Callable, Mapping
from dataclasses import dataclass

from conceptcause.errors import ModelError


class RuleSyntaxError(ModelError):
    def __init__(self, message: str, column: int, text: str):
        super().__init__(f"{message} at column {column}: {text!r}")
        self.column = column


@dataclass(frozen=True)
class Pred:
    name: str
    value: str


@dataclass(frozen=True)
class Not:
    operand: "Rule"


@dataclass(frozen=True)
class And:
    left: "Rule"
    right: "Rule"


@dataclass(frozen=True)
class Or:
    left: "Rule"
    right: "Rule"


Rule = Pred | Not | And | Or

_TOKEN = re.compile(r"\s*(?:(?P<op>[&|!()=])|(?P<word>[A-Za-z0-9_.\-]+))")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            col = pos + len(text[pos:]) - len(text[pos:].lstrip()) + 1
            raise RuleSyntaxError("unexpected character", col, text)
        kind = "op" if m.group("op") else "word"
        tokens.append((kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    tokens.append(("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, tok, col = self.take()
        if tok != value or kind == "end":
            raise RuleSyntaxError(f"expected {value!r}, found {tok or 'end of rule'!r}", col, self.text)

    def expr(self) -> Rule:
        node = self.term()
        while self.peek()[1] == "|" and self.peek()[0] == "op":
            self.take()
            node = Or(node, self.term())
        return node

    def term(self) -> Rule:
        node = self.factor()
        while self.peek()[1] == "&" and self.peek()[0] == "op":
            self.take()
            node = And(node, self.factor())
        return node

    def factor(self) -> Rule:
        kind, tok, col = self.peek()
        if kind == "op" and tok == "!":
            self.take()
            return Not(self.factor())
        if kind == "op" and tok == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "word":
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok):
                raise RuleSyntaxError(f"invalid slot name {tok!r}", col, self.text)
            self.take()
            self.expect("=")
            vkind, value, vcol = self.take()
            if vkind != "word":
                raise RuleSyntaxError(f"expected a value, found {value or 'end of rule'!r}", vcol, self.text)
            return Pred(tok, value)
        raise RuleSyntaxError(f"expected a predicate, '!' or '(', found {tok or 'end of rule'!r}", col, self.text)


def parse_rule(text: str) -> Rule:
    parser = _Parser(text)
    node = parser.expr()
    kind, tok, col = parser.peek()
    if kind != "end":
        raise RuleSyntaxError(f"unexpected {tok!r}", col, text)
    return node


def predicates(rule: Rule) -> list[Pred]:
    if isinstance(rule, Pred):
        return [rule]
    if isinstance(rule, Not):
        return predicates(rule.operand)
    return predicates(rule.left) + predicates(rule.right)


def evaluate_rule(rule: Rule, holds: Callable[[Pred], bool]) -> bool:
    if isinstance(rule, Pred):
        return holds(rule)
    if isinstance(rule, Not):
        return not evaluate_rule(rule.operand, holds)
    if isinstance(rule, And):
        return evaluate_rule(rule.left, holds) and evaluate_rule(rule.right, holds)
    return evaluate_rule(rule.left, holds) or evaluate_rule(rule.right, holds)


def format_rule(rule: Rule) -> str:
    """Render back to text; parsing the result yields an equal tree."""
    if isinstance(rule, Pred):
        return f"{rule.name}={rule.value}"
    if isinstance(rule, Not):
        return f"!{format_rule(rule.operand)}"
    op = " & " if isinstance(rule, And) else " | "
    return f"({format_rule(rule.left)}{op}{format_rule(rule.right)})"
