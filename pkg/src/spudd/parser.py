"""Reader and writer for the s-expression MDP format.

::

    (variables C P)
    (action paint
      (P (C (true (0.9)) (false (P (true (1.0)) (false (0.0)))))))
    (reward (C (true (10)) (false (0))))
    (discount 0.9)

A CPT gives ``P(X' = true | current state)`` as a decision tree; variables an
action does not mention keep their value.  ``;`` starts a comment that runs
to the end of the line.  Trees are reduced to canonical diagrams on input.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .add import DiagramError, DiagramRef, DiagramStore, VarId
from .model import ActionSpec, MdpSpec, persistence

KEYWORDS = ("variables", "action", "reward", "discount", "true", "false")

_TOKEN = re.compile(
    r"""
    (?P<space>\s+|;[^\n]*)
  | (?P<open>\()
  | (?P<close>\))
  | (?P<real>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?(?![A-Za-z0-9_.]))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class SourceSpan:
    """Byte offsets ``[start, end)`` of a token or production."""

    start: int
    end: int

    def line_col(self, text: str) -> tuple[int, int]:
        """1-based line and column of ``start``."""
        line = text.count("\n", 0, self.start) + 1
        col = self.start - (text.rfind("\n", 0, self.start) + 1) + 1
        return line, col


class ParseError(ValueError):
    def __init__(self, message: str, span: SourceSpan, text: str | None = None):
        self.message = message
        self.span = span
        if text is not None:
            line, col = span.line_col(text)
            where = f"line {line}, column {col}"
        else:
            where = f"offset {span.start}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    span: SourceSpan


def tokenize(text: str) -> list[_Token]:
    if not text.isascii():
        bad = next(i for i, ch in enumerate(text) if not ch.isascii())
        raise ParseError("non-ASCII character", SourceSpan(bad, bad + 1), text)
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            end = pos + 1
            while end < len(text) and not text[end].isspace() and text[end] not in "();":
                end += 1
            raise ParseError(f"unexpected {text[pos:end]!r}", SourceSpan(pos, end), text)
        if m.lastgroup != "space":
            out.append(_Token(m.lastgroup, m.group(), SourceSpan(m.start(), m.end())))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str, store: DiagramStore):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0
        self.store = store
        self.known: dict[str, VarId] = {}

    def error(self, message: str, span: SourceSpan) -> ParseError:
        return ParseError(message, span, self.text)

    def peek(self, offset: int = 0) -> _Token | None:
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else None

    def eof_span(self) -> SourceSpan:
        n = len(self.text)
        return SourceSpan(max(n - 1, 0), n)

    def next(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok is None:
            raise self.error(f"expected {what}, found end of input", self.eof_span())
        if tok.kind != kind:
            raise self.error(f"expected {what}, found {tok.text!r}", tok.span)
        self.pos += 1
        return tok

    def keyword(self, word: str) -> _Token:
        tok = self.next("ident", f"'{word}'")
        if tok.text != word:
            raise self.error(f"expected '{word}', found {tok.text!r}", tok.span)
        return tok

    def at_section(self, word: str) -> bool:
        a, b = self.peek(), self.peek(1)
        return a is not None and a.kind == "open" and b is not None and b.kind == "ident" and b.text == word

    def real(self) -> tuple[float, SourceSpan]:
        tok = self.next("real", "a number")
        value = float(tok.text)
        if not math.isfinite(value):
            raise self.error(f"number {tok.text} is out of range", tok.span)
        return value, tok.span

    # -- productions ---------------------------------------------------

    def spec(self) -> MdpSpec:
        variables = self.variables()
        actions: dict[str, ActionSpec] = {}
        if not self.at_section("action"):
            tok = self.peek()
            raise self.error("expected at least one action", tok.span if tok else self.eof_span())
        while self.at_section("action"):
            name, span, action = self.action(variables)
            if name in actions:
                raise self.error(f"duplicate action {name!r}", span)
            actions[name] = action
        reward = self.reward()
        discount = self.discount()
        tok = self.peek()
        if tok is not None:
            raise self.error(f"unexpected {tok.text!r} after the discount", tok.span)
        return MdpSpec(self.store, variables, actions, reward, discount)

    def variables(self) -> list[VarId]:
        self.next("open", "'('")
        self.keyword("variables")
        names: list[_Token] = []
        while (tok := self.peek()) is not None and tok.kind == "ident":
            if tok.text in KEYWORDS:
                raise self.error(f"{tok.text!r} is reserved and cannot name a variable", tok.span)
            if any(t.text == tok.text for t in names):
                raise self.error(f"variable {tok.text!r} declared twice", tok.span)
            names.append(tok)
            self.pos += 1
        if not names:
            tok = self.peek()
            raise self.error("expected at least one variable name", tok.span if tok else self.eof_span())
        self.next("close", "')'")
        out = []
        for tok in names:
            if tok.text in self.store.names:
                v = self.store.var(tok.text)
            else:
                (v,) = self.store.declare(tok.text)
            self.known[tok.text] = v
            out.append(v)
        return out

    def action(self, variables: list[VarId]) -> tuple[str, SourceSpan, ActionSpec]:
        self.next("open", "'('")
        self.keyword("action")
        name = self.next("ident", "an action name")
        cpts: dict[VarId, DiagramRef] = {}
        if (tok := self.peek()) is None or tok.kind != "open":
            raise self.error(f"action {name.text!r} needs at least one CPT", tok.span if tok else self.eof_span())
        while (tok := self.peek()) is not None and tok.kind == "open":
            self.pos += 1
            head = self.next("ident", "a variable name")
            v = self.lookup(head)
            if v in cpts:
                raise self.error(f"duplicate CPT for {head.text!r} in action {name.text!r}", head.span)
            cpts[v] = self.tree(frozenset(), probability=True)
            self.next("close", "')'")
        self.next("close", "')'")
        for v in variables:
            cpts.setdefault(v, persistence(self.store, v))
        return name.text, name.span, ActionSpec({v: cpts[v] for v in variables})

    def reward(self) -> DiagramRef:
        self.next("open", "'('")
        self.keyword("reward")
        r = self.tree(frozenset(), probability=False)
        self.next("close", "')'")
        return r

    def discount(self) -> float:
        self.next("open", "'('")
        self.keyword("discount")
        value, span = self.real()
        if not 0.0 <= value < 1.0:
            raise self.error(f"discount {value!r} outside [0, 1)", span)
        self.next("close", "')'")
        return value

    def lookup(self, tok: _Token) -> VarId:
        v = self.known.get(tok.text)
        if v is None:
            raise self.error(f"unknown variable {tok.text!r}", tok.span)
        return v

    def tree(self, path: frozenset, probability: bool) -> DiagramRef:
        self.next("open", "'('")
        tok = self.peek()
        if tok is not None and tok.kind == "real":
            value, span = self.real()
            if probability and not 0.0 <= value <= 1.0:
                raise self.error(f"probability {value!r} outside [0, 1]", span)
            self.next("close", "')'")
            return self.store.mk_terminal(value)
        head = self.next("ident", "a variable name or a number")
        v = self.lookup(head)
        if v in path:
            raise self.error(f"variable {head.text!r} tested twice on one path", head.span)
        inner = path | {v}
        self.next("open", "'('")
        self.keyword("true")
        then_ = self.tree(inner, probability)
        self.next("close", "')'")
        self.next("open", "'('")
        self.keyword("false")
        else_ = self.tree(inner, probability)
        self.next("close", "')'")
        self.next("close", "')'")
        return self.store.branch(v, then_, else_)


def parse(text: str, store: DiagramStore | None = None) -> MdpSpec:
    """Read an MDP, building its diagrams in ``store`` (a fresh one by default).

    Variable names already declared in ``store`` are reused.
    """
    store = store if store is not None else DiagramStore()
    try:
        return _Parser(text, store).spec()
    except DiagramError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc), SourceSpan(0, len(text)), text) from exc


def parse_file(path, store: DiagramStore | None = None) -> MdpSpec:
    with open(path, encoding="ascii", errors="replace") as fh:
        return parse(fh.read(), store)


def format_real(x: float) -> str:
    """Shortest decimal text that reads back as exactly ``x``."""
    x = float(x) + 0.0
    return repr(x)


def _emit_tree(store: DiagramStore, f: DiagramRef, depth: int, out: list[str]) -> None:
    if store.is_terminal(f):
        out.append(f"({format_real(store.value(f))})")
        return
    pad = "  " * (depth + 1)
    out.append(f"({store.name_of(store.top_var(f))}\n{pad}(true ")
    _emit_tree(store, store.then_child(f), depth + 1, out)
    out.append(f")\n{pad}(false ")
    _emit_tree(store, store.else_child(f), depth + 1, out)
    out.append("))")


def emit_tree(store: DiagramStore, f: DiagramRef, depth: int = 0) -> str:
    """``f`` written as a decision tree; shared subdiagrams are repeated."""
    out: list[str] = []
    _emit_tree(store, f, depth, out)
    return "".join(out)


def emit(spec: MdpSpec) -> str:
    """Text form of ``spec``.  CPTs that keep their variable unchanged are left out."""
    store = spec.store
    for v in store.support(spec.reward):
        if v.primed:
            raise DiagramError("the reward mentions a post-action variable")
    lines = ["(variables " + " ".join(store.name_of(v) for v in spec.variables) + ")"]
    for name, action in spec.actions.items():
        written = [
            v for v in spec.variables if v in action.cpts and action.cpts[v] != persistence(store, v)
        ]
        # the grammar needs one CPT per action, so a do-nothing action spells out its first
        written = written or spec.variables[:1]
        lines.append(f"(action {name}")
        for v in written:
            cpt = action.cpts.get(v, persistence(store, v))
            lines.append(f"  ({store.name_of(v)} {emit_tree(store, cpt, 1)})")
        lines[-1] += ")"
    lines.append(f"(reward {emit_tree(store, spec.reward, 0)})")
    lines.append(f"(discount {format_real(spec.discount)})")
    return "\n".join(lines) + "\n"


__all__ = ["KEYWORDS", "ParseError", "SourceSpan", "emit", "emit_tree", "format_real", "parse", "parse_file"]
