"""Surface syntax: formulas, policies and JSON trace documents.

Formula grammar (loosest binding first)::

    formula  := 'forall' x '.' formula | 'forall' x ':' D '[' time ']' '.' formula
              | 'exists' ... | 'always' t '.' formula | 'eventually' t '.' formula
              | disj ('=>' formula)?
    disj     := conj ('||' disj)?
    conj     := unary ('&&' conj)?
    unary    := '!' unary | 'K' '[' time ',' agent ']' unary | 'B' ... | 'S'/'E' '[' time ',' '{' agents '}' ']' unary
              | 'learn'/'accept'/'forget'/'reject' '[' time ',' agent ']' unary | primary
    primary  := '(' formula ')' | 'false' | 'true' | time cmp time
              | 'occ' '[' time ']' '(' event ')' | 'P' '[' time ',' agent ',' agent ']' action
              | name '[' time ']' ( '(' terms ')' )?

Policies: ``policy[owner, start] { item (';' item)* }`` where an item is a
policy-level ``forall``, a braced group, or ``[guard =>] deny alpha``.
"""
from __future__ import annotations

import json
import re
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping

from .core import (
    COMPARISONS, FALSE, TIMED_CHANGE_KINDS, Act, AnyEvent, App, And, Believes, Conn,
    Const, EnterEvent, Event, Falsum, ForallDomain, ForallTime, Formula, GroupKnows,
    Knows, Not, Occ, Permitted, Policy, PolicyAnd, PolicyBody, PolicyForall, PolicyRule,
    Pred, Temporal, Term, TimeCompare, TimedChange, TimeExpr, Var, exists_domain,
    exists_time, expand_macros, implies, disjunction, split_implication, )

# --------------------------------------------------------------------------
# Errors and spans


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    start: int
    end: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class ParseError(ValueError):
    def __init__(self, message: str, span: SourceSpan | None = None, text: str | None = None):
        self.message = message
        self.span = span
        self.text = text
        super().__init__(self.render())

    def render(self) -> str:
        if self.span is None:
            return self.message
        out = f"{self.span}: {self.message}"
        if self.text is not None:
            lines = self.text.splitlines() or [""]
            line = lines[min(self.span.line, len(lines)) - 1]
            out += f"\n  {line}\n  {' ' * (self.span.column - 1)}^"
        return out


class PolicyLayerError(ParseError):
    """The policy body breaks the deny/restriction layering."""


def _span(text: str, start: int, end: int) -> SourceSpan:
    line = text.count("\n", 0, start) + 1
    col = start - (text.rfind("\n", 0, start) + 1) + 1
    return SourceSpan(line, col, start, max(start, end))


# --------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<clock>\d{1,2}:\d{2}(?!\d))
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\n]*"|'[^'\n]*')
  | (?P<sym>=>|&&|\|\||<=|>=|==|!=|[<>!()\[\]{},.:;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    start: int
    end: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", _span(text, pos, pos + 1), text)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), m.start(), m.end()))
        pos = m.end()
    tokens.append(Token("eof", "", len(text), len(text)))
    return tokens


KEYWORDS = {"forall", "exists", "always", "eventually", "K", "B", "S", "E", "P",
            "occ", "enter", "false", "true", "deny", "policy", *TIMED_CHANGE_KINDS}


# --------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, text: str, *, connections: Iterable[str] = (), actions: Iterable[str] = (),
                 time_labels: Mapping[str, int] | None = None, allow_bare_domains: bool = False):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0
        self.connections = frozenset(connections)
        self.actions = frozenset(actions)
        self.time_labels = dict(time_labels or {})
        self.allow_bare_domains = allow_bare_domains
        self.time_vars: list[str] = []
        self.term_vars: list[str] = []
        self.arities: dict[str, int] = {}

    # token helpers
    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, _span(self.text, tok.start, tok.end), self.text)

    def at(self, value: str) -> bool:
        return self.tok.kind in ("sym", "ident") and self.tok.value == value

    def accept(self, value: str) -> bool:
        if self.at(value):
            self.pos += 1
            return True
        return False

    def expect(self, value: str) -> Token:
        if not self.at(value):
            found = self.tok.value or "end of input"
            raise self.error(f"expected {value!r}, found {found!r}")
        tok = self.tok
        self.pos += 1
        return tok

    def ident(self, what: str = "identifier") -> str:
        if self.tok.kind != "ident" or self.tok.value in KEYWORDS:
            raise self.error(f"expected {what}")
        value = self.tok.value
        self.pos += 1
        return value

    def finish(self) -> None:
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.value!r}")

    # times and terms
    def clock(self, tok: Token) -> int:
        if tok.value in self.time_labels:
            return self.time_labels[tok.value]
        hours, minutes = tok.value.split(":")
        if int(minutes) >= 60:
            raise self.error(f"bad clock time {tok.value!r}", tok)
        return int(hours) * 60 + int(minutes)

    def time(self) -> TimeExpr:
        tok = self.tok
        if tok.kind == "int":
            self.pos += 1
            return int(tok.value)
        if tok.kind == "clock":
            self.pos += 1
            return self.clock(tok)
        if tok.kind == "ident" and tok.value not in KEYWORDS:
            self.pos += 1
            if tok.value in self.time_labels:
                return self.time_labels[tok.value]
            if tok.value not in self.time_vars:
                raise self.error(f"unbound time variable {tok.value!r}", tok)
            return tok.value
        raise self.error("expected a timestamp")

    def term(self) -> Term:
        tok = self.tok
        if tok.kind == "string":
            self.pos += 1
            return Const(tok.value[1:-1])
        if tok.kind in ("int", "clock"):
            self.pos += 1
            return Const(tok.value)
        if tok.kind != "ident":
            raise self.error("expected a term")
        self.pos += 1
        if self.at("("):
            args = self.term_list()
            self.check_arity(f"function {tok.value}", len(args), tok)
            return App(tok.value, tuple(args))
        if tok.value in self.term_vars or tok.value in self.time_vars:
            return Var(tok.value)
        return Const(tok.value)

    def term_list(self) -> list[Term]:
        self.expect("(")
        args: list[Term] = []
        if not self.at(")"):
            args.append(self.term())
            while self.accept(","):
                args.append(self.term())
        self.expect(")")
        return args

    def check_arity(self, key: str, n: int, tok: Token) -> None:
        known = self.arities.setdefault(key, n)
        if known != n:
            raise self.error(f"arity mismatch for {key.split()[-1]}: expected {known}, got {n}", tok)

    # binders
    @contextmanager
    def bound(self, stack: list[str], name: str) -> Iterator[None]:
        stack.append(name)
        try:
            yield
        finally:
            stack.pop()

    def binder_head(self) -> tuple[str, str | None, TimeExpr | None]:
        var = self.ident("variable")
        domain: str | None = None
        time: TimeExpr | None = None
        if self.accept(":"):
            domain = self.ident("domain name")
            if self.accept("["):
                time = self.time()
                self.expect("]")
            elif not self.allow_bare_domains:
                raise self.error(f"domain {domain!r} needs a timestamp, e.g. {domain}[t]")
        self.expect(".")
        return var, domain, time

    # formulas
    def formula(self) -> Formula:
        tok = self.tok
        if tok.kind == "ident" and tok.value in ("forall", "exists"):
            self.pos += 1
            var, domain, time = self.binder_head()
            stack = self.time_vars if domain is None else self.term_vars
            with self.bound(stack, var):
                body = self.formula()
            if domain is None:
                return ForallTime(var, body) if tok.value == "forall" else exists_time(var, body)
            if tok.value == "forall":
                return ForallDomain(var, domain, time, body)
            return exists_domain(var, domain, time, body)
        if tok.kind == "ident" and tok.value in ("always", "eventually"):
            self.pos += 1
            var = self.ident("time variable")
            self.expect(".")
            with self.bound(self.time_vars, var):
                body = self.formula()
            return Temporal(tok.value, var, body)
        left = self.disjunction()
        if self.at("=>") and not (self.peek().kind == "ident" and self.peek().value == "deny"):
            self.pos += 1
            return implies(left, self.formula())
        return left

    def disjunction(self) -> Formula:
        left = self.conjunction()
        if self.accept("||"):
            return disjunction(left, self.disjunction())
        return left

    def conjunction(self) -> Formula:
        left = self.unary()
        if self.accept("&&"):
            return And(left, self.conjunction())
        return left

    def unary(self) -> Formula:
        tok = self.tok
        if self.accept("!"):
            return Not(self.unary())
        if tok.kind == "ident" and tok.value in ("forall", "exists", "always", "eventually"):
            return self.formula()
        if tok.kind == "ident" and self.peek().value == "[":
            if tok.value in ("K", "B"):
                self.pos += 2
                time = self.time()
                self.expect(",")
                agent = self.term()
                self.expect("]")
                body = self.unary()
                return Knows(time, agent, body) if tok.value == "K" else Believes(time, agent, body)
            if tok.value in ("S", "E"):
                self.pos += 2
                time = self.time()
                self.expect(",")
                self.expect("{")
                group: list[Term] = []
                if not self.at("}"):
                    group.append(self.term())
                    while self.accept(","):
                        group.append(self.term())
                self.expect("}")
                self.expect("]")
                if not group:
                    raise self.error("group modality over an empty group", tok)
                return GroupKnows(tok.value, time, tuple(group), self.unary())
            if tok.value in TIMED_CHANGE_KINDS:
                self.pos += 2
                time = self.time()
                self.expect(",")
                agent = self.term()
                self.expect("]")
                return TimedChange(tok.value, time, agent, self.unary())
        return self.primary()

    def primary(self) -> Formula:
        tok = self.tok
        if self.accept("("):
            inner = self.formula()
            self.expect(")")
            return inner
        if tok.kind == "ident" and tok.value == "false":
            self.pos += 1
            return FALSE
        if tok.kind == "ident" and tok.value == "true":
            self.pos += 1
            return Not(FALSE)
        if tok.kind in ("int", "clock") or (
            tok.kind == "ident" and self.peek().kind == "sym" and self.peek().value in COMPARISONS
        ):
            left = self.time()
            op = self.tok
            if op.value not in COMPARISONS:
                raise self.error("expected a comparison operator")
            self.pos += 1
            return TimeCompare(op.value, left, self.time())
        if tok.kind == "ident" and tok.value == "occ":
            self.pos += 1
            self.expect("[")
            time = self.time()
            self.expect("]")
            self.expect("(")
            event = self.event()
            self.expect(")")
            return Occ(time, event)
        if tok.kind == "ident" and tok.value == "P" and self.peek().value == "[":
            self.pos += 2
            time = self.time()
            self.expect(",")
            source = self.term()
            self.expect(",")
            target = self.term()
            self.expect("]")
            return Permitted(self.ident("action name"), time, source, target)
        if tok.kind == "ident" and tok.value not in KEYWORDS:
            name = self.ident()
            self.expect("[")
            time = self.time()
            self.expect("]")
            args: list[Term] = self.term_list() if self.at("(") else []
            if name in self.connections or name in self.actions:
                if len(args) != 2:
                    raise self.error(f"{name} relates exactly two agents", tok)
                cls = Conn if name in self.connections else Act
                return cls(name, time, args[0], args[1])
            self.check_arity(f"predicate {name}", len(args), tok)
            return Pred(name, time, tuple(args))
        raise self.error(f"unexpected {tok.value or 'end of input'!r}")

    def event(self) -> AnyEvent:
        tok = self.tok
        if tok.kind == "ident" and tok.value == "enter":
            self.pos += 1
            self.expect("(")
            belief = self.formula()
            self.expect(")")
            if not isinstance(belief, Believes):
                raise self.error("enter(...) takes a B-rooted formula", tok)
            return EnterEvent(belief)
        name = self.ident("event name")
        return Event(name, tuple(self.term_list()))

    # policies
    def policy(self, agents: Iterable[str] | None) -> Policy:
        self.expect("policy")
        self.expect("[")
        owner_tok = self.tok
        owner = self.ident("policy owner")
        if agents is not None and owner not in set(agents):
            raise self.error(f"unknown agent {owner!r}", owner_tok)
        self.expect(",")
        start_tok = self.tok
        start = self.time()
        if not isinstance(start, int):
            raise self.error("policy start must be a literal timestamp", start_tok)
        self.expect("]")
        self.expect("{")
        body = self.policy_body()
        self.expect("}")
        return Policy(owner, start, body)

    def policy_body(self) -> PolicyBody:
        left = self.policy_item()
        if self.accept(";"):
            if self.at("}"):
                return left
            return PolicyAnd(left, self.policy_body())
        return left

    def policy_item(self) -> PolicyBody:
        if self.at("{"):
            self.pos += 1
            body = self.policy_body()
            self.expect("}")
            return body
        # A leading forall is always a policy-level binder; parenthesize
        # quantified guards.
        if self.at("forall"):
            self.pos += 1
            var, domain, time = self.binder_head()
            stack = self.time_vars if domain is None else self.term_vars
            with self.bound(stack, var):
                body = self.policy_item()
            return PolicyForall(var, domain, time, body)
        guard: Formula | None = None
        if not self.at("deny"):
            guard = self.formula()
            self.expect("=>")
        deny = self.expect("deny")
        restriction = self.formula()
        validate_restriction(restriction, self, deny)
        return PolicyRule(guard, restriction)


def validate_restriction(alpha: Formula, parser: _Parser | None = None, tok: Token | None = None) -> None:
    """Check that a denied restriction fits the alpha layer.

    Allowed at the top: conjunctions, quantifiers (exists as !forall!), and
    connection/action/occurrence atoms or K/B modalities.  Anything goes
    under a modality.
    """

    def fail(message: str) -> None:
        if parser is not None:
            raise PolicyLayerError(message, _span(parser.text, tok.start, tok.end), parser.text)
        raise PolicyLayerError(message)

    def go(f: Formula) -> None:
        if isinstance(f, (Knows, Believes, Conn, Act, Occ)):
            return
        if isinstance(f, And):
            go(f.left)
            go(f.right)
            return
        if isinstance(f, (ForallTime, ForallDomain)):
            go(f.body)
            return
        if isinstance(f, Not) and isinstance(f.body, (ForallTime, ForallDomain)) and isinstance(f.body.body, Not):
            go(f.body.body.body)
            return
        if isinstance(f, Pred):
            fail(f"predicate {f.name} must sit under K or B in a restriction")
        if isinstance(f, Not):
            fail("negation is only allowed under K or B in a restriction")
        fail(f"{type(f).__name__} is not allowed in a restriction")

    go(alpha)


def parse_formula(text: str, *, connections: Iterable[str] = (), actions: Iterable[str] = (),
                  time_labels: Mapping[str, int] | None = None, allow_bare_domains: bool = False,
                  trace_timestamps: Iterable[int] | None = None) -> Formula:
    """Parse a closed formula and expand derived operators."""
    parser = _Parser(text, connections=connections, actions=actions, time_labels=time_labels,
                     allow_bare_domains=allow_bare_domains)
    formula = parser.formula()
    parser.finish()
    return expand_macros(formula, trace_timestamps)


def parse_formula_raw(text: str, **kwargs: Any) -> Formula:
    """Parse without expanding macros (used for printing tests)."""
    parser = _Parser(text, **kwargs)
    formula = parser.formula()
    parser.finish()
    return formula


def parse_policy(text: str, *, agents: Iterable[str] | None = None, connections: Iterable[str] = (),
                 actions: Iterable[str] = (), time_labels: Mapping[str, int] | None = None) -> Policy:
    parser = _Parser(text, connections=connections, actions=actions, time_labels=time_labels,
                     allow_bare_domains=True)
    policy = parser.policy(agents)
    parser.finish()
    from .core import map_policy

    return Policy(policy.owner, policy.start, map_policy(policy.body, expand_macros))


def parse_event(text: str, *, connections: Iterable[str] = (), actions: Iterable[str] = (),
                time_labels: Mapping[str, int] | None = None, default_time: int | None = None) -> AnyEvent:
    """Parse a trace event: ``name(args)`` or ``enter(agent, '<formula>')``."""
    parser = _Parser(text, connections=connections, actions=actions, time_labels=time_labels)
    if parser.at("enter") and parser.peek(2).kind == "ident" and parser.peek(3).value == ",":
        parser.pos += 2
        agent = parser.ident("agent")
        parser.expect(",")
        body_tok = parser.tok
        if body_tok.kind != "string":
            raise parser.error("expected the quoted belief formula")
        parser.pos += 1
        parser.expect(")")
        parser.finish()
        inner = parse_formula(body_tok.value[1:-1], connections=connections, actions=actions,
                              time_labels=time_labels)
        if isinstance(inner, Believes):
            if inner.agent != Const(agent):
                raise parser.error(f"belief is about {format_term(inner.agent)}, not {agent}", body_tok)
            return EnterEvent(inner)
        if default_time is None:
            raise parser.error("a bare belief needs the step time", body_tok)
        return EnterEvent(Believes(default_time, Const(agent), inner))
    event = parser.event()
    parser.finish()
    for arg in getattr(event, "args", ()):
        if not isinstance(arg, Const):
            raise ParseError(f"event arguments must be constants: {text}")
    return event


# --------------------------------------------------------------------------
# Printing

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_PREC_QUANT, _PREC_IMP, _PREC_OR, _PREC_AND, _PREC_UNARY = 0, 1, 2, 3, 4


def format_time(t: TimeExpr) -> str:
    return str(t)


def format_term(term: Term) -> str:
    if isinstance(term, Var):
        return term.name
    if isinstance(term, App):
        return f"{term.fn}({', '.join(format_term(a) for a in term.args)})"
    if (_IDENT_RE.match(term.name) and term.name not in KEYWORDS) or term.name.isdigit():
        return term.name
    return json.dumps(term.name)


def format_event(event: AnyEvent) -> str:
    if isinstance(event, EnterEvent):
        return f"enter({format_formula(event.belief)})"
    return f"{event.name}({', '.join(format_term(a) for a in event.args)})"


def _binder(var: str, domain: str | None, time: TimeExpr | None) -> str:
    if domain is None:
        return var
    if time is None:
        return f"{var}:{domain}"
    return f"{var}:{domain}[{format_time(time)}]"


def _fmt(f: Formula, ctx: int) -> str:
    text, prec = _fmt_prec(f)
    return f"({text})" if prec < ctx else text


def _fmt_prec(f: Formula) -> tuple[str, int]:
    if isinstance(f, Falsum):
        return "false", 5
    if isinstance(f, Not):
        body = f.body
        if isinstance(body, Falsum):
            return "true", 5
        if isinstance(body, And) and isinstance(body.left, Not) and isinstance(body.right, Not):
            return f"{_fmt(body.left.body, _PREC_AND)} || {_fmt(body.right.body, _PREC_OR)}", _PREC_OR
        pair = split_implication(f)
        if pair is not None:
            return f"{_fmt(pair[0], _PREC_OR)} => {_fmt(pair[1], _PREC_IMP)}", _PREC_IMP
        if isinstance(body, ForallTime) and isinstance(body.body, Not):
            return f"exists {body.var} . {_fmt(body.body.body, _PREC_QUANT)}", _PREC_QUANT
        if isinstance(body, ForallDomain) and isinstance(body.body, Not):
            head = _binder(body.var, body.domain, body.time)
            return f"exists {head} . {_fmt(body.body.body, _PREC_QUANT)}", _PREC_QUANT
        return f"!{_fmt(body, _PREC_UNARY)}", _PREC_UNARY
    if isinstance(f, And):
        return f"{_fmt(f.left, _PREC_UNARY)} && {_fmt(f.right, _PREC_AND)}", _PREC_AND
    if isinstance(f, ForallTime):
        return f"forall {f.var} . {_fmt(f.body, _PREC_QUANT)}", _PREC_QUANT
    if isinstance(f, ForallDomain):
        return f"forall {_binder(f.var, f.domain, f.time)} . {_fmt(f.body, _PREC_QUANT)}", _PREC_QUANT
    if isinstance(f, Temporal):
        return f"{f.kind} {f.var} . {_fmt(f.body, _PREC_QUANT)}", _PREC_QUANT
    if isinstance(f, Knows):
        return f"K[{format_time(f.time)}, {format_term(f.agent)}] {_fmt(f.body, _PREC_UNARY)}", _PREC_UNARY
    if isinstance(f, Believes):
        return f"B[{format_time(f.time)}, {format_term(f.agent)}] {_fmt(f.body, _PREC_UNARY)}", _PREC_UNARY
    if isinstance(f, GroupKnows):
        group = ", ".join(format_term(g) for g in f.group)
        return f"{f.kind}[{format_time(f.time)}, {{{group}}}] {_fmt(f.body, _PREC_UNARY)}", _PREC_UNARY
    if isinstance(f, TimedChange):
        return f"{f.kind}[{format_time(f.time)}, {format_term(f.agent)}] {_fmt(f.body, _PREC_UNARY)}", _PREC_UNARY
    if isinstance(f, Pred):
        return f"{f.name}[{format_time(f.time)}]({', '.join(format_term(a) for a in f.args)})", 5
    if isinstance(f, (Conn, Act)):
        return f"{f.name}[{format_time(f.time)}]({format_term(f.source)}, {format_term(f.target)})", 5
    if isinstance(f, Permitted):
        return (f"P[{format_time(f.time)}, {format_term(f.source)}, {format_term(f.target)}] {f.action}", 5)
    if isinstance(f, Occ):
        return f"occ[{format_time(f.time)}]({format_event(f.event)})", 5
    if isinstance(f, TimeCompare):
        return f"{format_time(f.left)} {f.op} {format_time(f.right)}", 5
    raise TypeError(f"cannot print {f!r}")


def format_formula(f: Formula) -> str:
    return _fmt(f, _PREC_QUANT)


def _format_policy_body(body: PolicyBody, top: bool) -> str:
    if isinstance(body, PolicyRule):
        deny = f"deny {format_formula(body.restriction)}"
        return deny if body.guard is None else f"{format_formula(body.guard)} => {deny}"
    if isinstance(body, PolicyForall):
        return f"forall {_binder(body.var, body.domain, body.time)} . {_format_policy_body(body.body, False)}"
    text = f"{_format_policy_body(body.left, False)}; {_format_policy_body(body.right, True)}"
    return text if top else f"{{ {text} }}"


def format_policy(policy: Policy) -> str:
    return f"policy[{policy.owner}, {policy.start}] {{ {_format_policy_body(policy.body, True)} }}"


# --------------------------------------------------------------------------
# Trace documents

TRACE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["steps"],
    "additionalProperties": False,
    "properties": {
        "semantics": {"type": ["string", "null"]},
        "functional_predicates": {"type": "array", "items": {"type": "string"}},
        "time_labels": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
        "steps": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["time"],
                "additionalProperties": False,
                "properties": {
                    "time": {"anyOf": [{"type": "integer", "minimum": 0}, {"type": "string"}]},
                    "events": {"type": "array", "items": {"type": "string"}},
                    "agents": {"type": "array", "items": {"type": "string"}},
                    "environment": {"type": "string"},
                    "connections": {"$ref": "#/$defs/relations"},
                    "permissions": {"$ref": "#/$defs/relations"},
                    "domains": {"type": "object", "additionalProperties": {
                        "type": "array", "items": {"type": "string"}}},
                    "ekbs": {"type": "object", "additionalProperties": {
                        "type": "array", "items": {"type": "string"}}},
                    "env_facts": {"type": "array", "items": {"type": "string"}},
                    "policies": {"type": "object", "additionalProperties": {
                        "type": "array", "items": {"type": "string"}}},
                },
            },
        },
    },
    "$defs": {
        "relations": {
            "type": "object",
            "additionalProperties": {
                "type": "array",
                "items": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
            },
        },
    },
}


def _time_value(raw: int | str, labels: Mapping[str, int]) -> int:
    if isinstance(raw, int):
        return raw
    if raw in labels:
        return labels[raw]
    m = re.fullmatch(r"(\d{1,2}):(\d{2})", raw)
    if m and int(m.group(2)) < 60:
        return int(m.group(1)) * 60 + int(m.group(2))
    if raw.isdigit():
        return int(raw)
    raise ParseError(f"unknown time label {raw!r}")


def parse_trace(document: str | Mapping[str, Any], *, check_order: bool = True):
    """Load a JSON trace document into a :class:`~kblrt.snm.Trace`.

    Steps inherit agents, environment, relations, domains and policies from
    the previous step when those keys are omitted; events, EKBs and
    environment facts default to empty.  EKB entries are unfolded against
    the trace at load time.
    """
    import jsonschema

    from . import ekb as ekb_mod
    from .snm import OrderedTimestampsViolated, SocialNetworkModel, Step, Trace

    if isinstance(document, str):
        try:
            data = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", SourceSpan(exc.lineno, exc.colno, exc.pos, exc.pos + 1),
                             document) from None
    else:
        data = document
    try:
        jsonschema.validate(data, TRACE_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ParseError(f"schema violation at {where}: {exc.message}") from None

    labels: dict[str, int] = dict(data.get("time_labels", {}))
    raw_steps = data["steps"]
    times = [_time_value(s["time"], labels) for s in raw_steps]
    if check_order:
        for prev, cur in zip(times, times[1:]):
            if cur <= prev:
                raise OrderedTimestampsViolated(f"timestamps must strictly increase: {prev} then {cur}")

    connection_names = set()
    action_names = set()
    for s in raw_steps:
        connection_names.update(s.get("connections", {}))
        action_names.update(s.get("permissions", {}))
    vocab = dict(connections=connection_names, actions=action_names, time_labels=labels)

    def pairs(rel: Mapping[str, list[list[str]]]) -> dict[str, frozenset[tuple[str, str]]]:
        return {name: frozenset((a, b) for a, b in items) for name, items in rel.items()}

    # First pass: structure per step, so unfolding can see every domain.
    skeleton: list[dict[str, Any]] = []
    prev: dict[str, Any] = {"agents": None, "environment": "env", "connections": {}, "permissions": {},
                            "domains": {}, "policies": {}}
    for raw, t in zip(raw_steps, times):
        cur = dict(prev)
        for key in ("agents", "environment", "connections", "permissions", "domains", "policies"):
            if key in raw:
                cur[key] = raw[key]
        if cur["agents"] is None:
            raise ParseError(f"step {t}: no agents declared")
        skeleton.append(cur)
        prev = cur

    facts_per_step: list[frozenset[Formula]] = []
    for raw, t in zip(raw_steps, times):
        facts = set()
        for text in raw.get("env_facts", []):
            fact = parse_formula(text, **vocab)
            if not isinstance(fact, (Pred, Conn, Act)):
                raise ParseError(f"step {t}: environment facts must be ground atoms: {text!r}")
            facts.add(fact)
        facts_per_step.append(frozenset(facts))

    known_agents = set()
    for cur in skeleton:
        known_agents.update(cur["agents"])

    steps = []
    for raw, t, cur, facts in zip(raw_steps, times, skeleton, facts_per_step):
        domains = {name: frozenset(vals) for name, vals in cur["domains"].items()}
        agents = frozenset(cur["agents"]) | domains.get("Ag", frozenset())
        domains["Ag"] = agents
        policies = {
            owner: tuple(parse_policy(p, **vocab) for p in texts) for owner, texts in cur["policies"].items()
        }
        events = tuple(parse_event(e, **vocab, default_time=t) for e in raw.get("events", []))
        snm = SocialNetworkModel(
            agents=agents, environment=cur["environment"], connections=pairs(cur["connections"]),
            permissions=pairs(cur["permissions"]), domains=domains, ekbs={}, env_facts=facts,
            policies=policies,
        )
        steps.append((snm, events, t, raw.get("ekbs", {})))

    trace = Trace(tuple(Step(snm, events, t) for snm, events, t, _ in steps),
                  semantics=data.get("semantics"),
                  functional_predicates=frozenset(data.get("functional_predicates", [])),
                  time_labels=labels, connection_names=frozenset(connection_names),
                  action_names=frozenset(action_names))
    raw_ekbs = {t: {agent: [parse_formula(text, **vocab) for text in texts] for agent, texts in ekbs.items()}
                for _, _, t, ekbs in steps}
    return ekb_mod.load_ekbs(trace, raw_ekbs, known_agents=known_agents)
