"""Terms, formulas, events and policies of the timed knowledge-based logic.

Every value here is an immutable, hashable dataclass.  Timestamps are plain
non-negative integers; inside a formula a timestamp position holds either an
``int`` or the name of a bound time variable.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Iterator, Sequence, Union

TimeExpr = Union[int, str]
INFINITE = math.inf


class LogicError(ValueError):
    """Base class for errors raised while building or rewriting formulas."""


class MacroError(LogicError):
    pass


class TimestampError(LogicError):
    pass


class UnknownTimestamp(TimestampError):
    """A ground timestamp that is not a step of the trace."""


# --------------------------------------------------------------------------
# Terms


@dataclass(frozen=True, slots=True)
class Const:
    name: str


@dataclass(frozen=True, slots=True)
class Var:
    name: str


@dataclass(frozen=True, slots=True)
class App:
    fn: str
    args: tuple["Term", ...]


Term = Union[Const, Var, App]


def const(name: str) -> Const:
    return Const(name)


# --------------------------------------------------------------------------
# Formulas


class _Node:
    __slots__ = ()

    def __str__(self) -> str:
        from .parser import format_formula

        return format_formula(self)


@dataclass(frozen=True, slots=True)
class Pred(_Node):
    name: str
    time: TimeExpr
    args: tuple[Term, ...] = ()


@dataclass(frozen=True, slots=True)
class Conn(_Node):
    """Connection atom c^t(i, j); ``name`` belongs to the connection vocabulary."""

    name: str
    time: TimeExpr
    source: Term
    target: Term


@dataclass(frozen=True, slots=True)
class Act(_Node):
    """Permission/action atom a^t(i, j)."""

    name: str
    time: TimeExpr
    source: Term
    target: Term


@dataclass(frozen=True, slots=True)
class Event:
    name: str
    args: tuple[Term, ...] = ()

    def __str__(self) -> str:
        from .parser import format_event

        return format_event(self)


@dataclass(frozen=True, slots=True)
class EnterEvent:
    """A belief entering an agent's knowledge base."""

    belief: "Believes"

    def __post_init__(self) -> None:
        if not isinstance(self.belief, Believes):
            raise LogicError("enter events carry exactly one B-rooted formula")

    @property
    def agent(self) -> Term:
        return self.belief.agent

    def __str__(self) -> str:
        from .parser import format_event

        return format_event(self)


AnyEvent = Union[Event, EnterEvent]


@dataclass(frozen=True, slots=True)
class Occ(_Node):
    time: TimeExpr
    event: AnyEvent


@dataclass(frozen=True, slots=True)
class Not(_Node):
    body: "Formula"


@dataclass(frozen=True, slots=True)
class And(_Node):
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True, slots=True)
class ForallTime(_Node):
    var: str
    body: "Formula"


@dataclass(frozen=True, slots=True)
class ForallDomain(_Node):
    """``forall var : domain[time] . body``; ``time`` None means every step."""

    var: str
    domain: str
    time: TimeExpr | None
    body: "Formula"


@dataclass(frozen=True, slots=True)
class Knows(_Node):
    time: TimeExpr
    agent: Term
    body: "Formula"


@dataclass(frozen=True, slots=True)
class Believes(_Node):
    time: TimeExpr
    agent: Term
    body: "Formula"


@dataclass(frozen=True, slots=True)
class Falsum(_Node):
    pass


@dataclass(frozen=True, slots=True)
class TimeCompare(_Node):
    op: str
    left: TimeExpr
    right: TimeExpr


# Sugar nodes.  The parser builds these and ``expand_macros`` removes them.


@dataclass(frozen=True, slots=True)
class GroupKnows(_Node):
    """S (someone) or E (everyone) in ``group`` knows ``body`` at ``time``."""

    kind: str
    time: TimeExpr
    group: tuple[Term, ...]
    body: "Formula"


@dataclass(frozen=True, slots=True)
class Permitted(_Node):
    """P^j_i a^t: agent ``source`` may perform ``action`` towards ``target``."""

    action: str
    time: TimeExpr
    source: Term
    target: Term


@dataclass(frozen=True, slots=True)
class Temporal(_Node):
    """Box (``always``) / diamond (``eventually``) over trace timestamps."""

    kind: str
    var: str
    body: "Formula"


@dataclass(frozen=True, slots=True)
class TimedChange(_Node):
    """Learn / accept / forget / reject at ``time``; needs the trace timestamps."""

    kind: str
    time: TimeExpr
    agent: Term
    body: "Formula"


Formula = Union[
    Pred, Conn, Act, Occ, Not, And, ForallTime, ForallDomain, Knows, Believes,
    Falsum, TimeCompare, GroupKnows, Permitted, Temporal, TimedChange,
]

FALSE = Falsum()
TRUE = Not(FALSE)

ATOMS = (Pred, Conn, Act, Occ)
SUGAR = (GroupKnows, Permitted, Temporal, TimedChange)
TIMED_CHANGE_KINDS = ("learn", "accept", "forget", "reject")
COMPARISONS: dict[str, Callable[[int, int], bool]] = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def implies(antecedent: Formula, consequent: Formula) -> Formula:
    return Not(And(antecedent, Not(consequent)))


def disjunction(left: Formula, right: Formula) -> Formula:
    return Not(And(Not(left), Not(right)))


def conjunction(items: Iterable[Formula]) -> Formula:
    """Right-nested conjunction; the empty conjunction is ``!false``."""
    items = list(items)
    if not items:
        return TRUE
    result = items[-1]
    for item in reversed(items[:-1]):
        result = And(item, result)
    return result


def exists_time(var: str, body: Formula) -> Formula:
    return Not(ForallTime(var, Not(body)))


def exists_domain(var: str, domain: str, time: TimeExpr | None, body: Formula) -> Formula:
    return Not(ForallDomain(var, domain, time, Not(body)))


def split_implication(formula: Formula) -> tuple[Formula, Formula] | None:
    """Return (antecedent, consequent) if ``formula`` has the shape !(a && !b)."""
    if isinstance(formula, Not) and isinstance(formula.body, And):
        right = formula.body.right
        if isinstance(right, Not):
            return formula.body.left, right.body
    return None


def conjuncts(formula: Formula) -> Iterator[Formula]:
    while isinstance(formula, And):
        yield from conjuncts(formula.left)
        formula = formula.right
    yield formula


# --------------------------------------------------------------------------
# Generic traversal


def children(formula: Formula) -> tuple[Formula, ...]:
    if isinstance(formula, And):
        return (formula.left, formula.right)
    if isinstance(formula, (Not, ForallTime, ForallDomain, Knows, Believes,
                            GroupKnows, Temporal, TimedChange)):
        return (formula.body,)
    return ()


def subformulas(formula: Formula) -> Iterator[Formula]:
    """Pre-order walk, including belief formulas carried by enter events."""
    stack = [formula]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Occ) and isinstance(node.event, EnterEvent):
            stack.append(node.event.belief)
        stack.extend(reversed(children(node)))


def size(formula: Formula) -> int:
    return sum(1 for _ in subformulas(formula))


def quantifier_depth(formula: Formula) -> int:
    inner = max((quantifier_depth(c) for c in children(formula)), default=0)
    if isinstance(formula, (ForallTime, ForallDomain, Temporal)):
        return inner + 1
    return inner


def modal_depth(formula: Formula) -> int:
    inner = max((modal_depth(c) for c in children(formula)), default=0)
    if isinstance(formula, (Knows, Believes, GroupKnows, TimedChange)):
        return inner + 1
    return inner


def is_quantifier_free(formula: Formula) -> bool:
    return not any(isinstance(f, (ForallTime, ForallDomain, Temporal)) for f in subformulas(formula))


def is_core(formula: Formula) -> bool:
    return not any(isinstance(f, SUGAR) for f in subformulas(formula))


def _time_fields(formula: Formula) -> Iterator[TimeExpr]:
    if isinstance(formula, (Pred, Conn, Act, Occ, Knows, Believes, GroupKnows,
                            Permitted, TimedChange)):
        yield formula.time
    elif isinstance(formula, TimeCompare):
        yield formula.left
        yield formula.right
    elif isinstance(formula, ForallDomain) and formula.time is not None:
        yield formula.time


def timestamps(formula: Formula) -> set[int]:
    """All literal timestamps mentioned anywhere in ``formula``."""
    found: set[int] = set()
    for node in subformulas(formula):
        found.update(t for t in _time_fields(node) if isinstance(t, int))
    return found


def agents(formula: Formula) -> set[str]:
    """Constant agents that index a K or B modality in ``formula``."""
    found: set[str] = set()
    for node in subformulas(formula):
        if isinstance(node, (Knows, Believes)) and isinstance(node.agent, Const):
            found.add(node.agent.name)
    return found


def term_constants(formula: Formula) -> set[str]:
    """Constant names used as arguments of atoms and events."""
    found: set[str] = set()

    def visit(term: Term) -> None:
        if isinstance(term, Const):
            found.add(term.name)
        elif isinstance(term, App):
            for arg in term.args:
                visit(arg)

    for node in subformulas(formula):
        if isinstance(node, Pred):
            for arg in node.args:
                visit(arg)
        elif isinstance(node, (Conn, Act)):
            visit(node.source)
            visit(node.target)
        elif isinstance(node, Occ) and isinstance(node.event, Event):
            for arg in node.event.args:
                visit(arg)
    return found


def map_times(formula: Formula, fn: Callable[[TimeExpr], TimeExpr]) -> Formula:
    """Rebuild ``formula`` with every timestamp position passed through ``fn``."""

    def go(f: Formula) -> Formula:
        if isinstance(f, Pred):
            return Pred(f.name, fn(f.time), f.args)
        if isinstance(f, Conn):
            return Conn(f.name, fn(f.time), f.source, f.target)
        if isinstance(f, Act):
            return Act(f.name, fn(f.time), f.source, f.target)
        if isinstance(f, Occ):
            event = f.event
            if isinstance(event, EnterEvent):
                event = EnterEvent(go(event.belief))
            return Occ(fn(f.time), event)
        if isinstance(f, Not):
            return Not(go(f.body))
        if isinstance(f, And):
            return And(go(f.left), go(f.right))
        if isinstance(f, ForallTime):
            return ForallTime(f.var, go(f.body))
        if isinstance(f, ForallDomain):
            return ForallDomain(f.var, f.domain, None if f.time is None else fn(f.time), go(f.body))
        if isinstance(f, Knows):
            return Knows(fn(f.time), f.agent, go(f.body))
        if isinstance(f, Believes):
            return Believes(fn(f.time), f.agent, go(f.body))
        if isinstance(f, TimeCompare):
            return TimeCompare(f.op, fn(f.left), fn(f.right))
        if isinstance(f, GroupKnows):
            return GroupKnows(f.kind, fn(f.time), f.group, go(f.body))
        if isinstance(f, Permitted):
            return Permitted(f.action, fn(f.time), f.source, f.target)
        if isinstance(f, Temporal):
            return Temporal(f.kind, f.var, go(f.body))
        if isinstance(f, TimedChange):
            return TimedChange(f.kind, fn(f.time), f.agent, go(f.body))
        return f

    return go(formula)


# --------------------------------------------------------------------------
# Substitution


def _subst_term(term: Term, var: str, value: Term) -> Term:
    if isinstance(term, Var) and term.name == var:
        return value
    if isinstance(term, App):
        return App(term.fn, tuple(_subst_term(a, var, value) for a in term.args))
    return term


def substitute(formula: Formula, var: str, value: int | str) -> Formula:
    """Replace free occurrences of ``var``.

    An ``int`` value instantiates a time variable (and any term use of it, as a
    numeral constant); a ``str`` value instantiates a domain variable.
    """
    term_value = Const(str(value))

    def time(t: TimeExpr) -> TimeExpr:
        if t == var and isinstance(value, int):
            return value
        return t

    def term(s: Term) -> Term:
        return _subst_term(s, var, term_value)

    def go(f: Formula) -> Formula:
        if isinstance(f, Pred):
            return Pred(f.name, time(f.time), tuple(term(a) for a in f.args))
        if isinstance(f, Conn):
            return Conn(f.name, time(f.time), term(f.source), term(f.target))
        if isinstance(f, Act):
            return Act(f.name, time(f.time), term(f.source), term(f.target))
        if isinstance(f, Occ):
            event = f.event
            if isinstance(event, EnterEvent):
                event = EnterEvent(go(event.belief))
            else:
                event = Event(event.name, tuple(term(a) for a in event.args))
            return Occ(time(f.time), event)
        if isinstance(f, Not):
            return Not(go(f.body))
        if isinstance(f, And):
            return And(go(f.left), go(f.right))
        if isinstance(f, (ForallTime, Temporal)):
            if f.var == var:
                return f
            return type(f)(f.var, go(f.body)) if isinstance(f, ForallTime) else Temporal(f.kind, f.var, go(f.body))
        if isinstance(f, ForallDomain):
            domain_time = None if f.time is None else time(f.time)
            if f.var == var:
                return ForallDomain(f.var, f.domain, domain_time, f.body)
            return ForallDomain(f.var, f.domain, domain_time, go(f.body))
        if isinstance(f, Knows):
            return Knows(time(f.time), term(f.agent), go(f.body))
        if isinstance(f, Believes):
            return Believes(time(f.time), term(f.agent), go(f.body))
        if isinstance(f, TimeCompare):
            return TimeCompare(f.op, time(f.left), time(f.right))
        if isinstance(f, GroupKnows):
            return GroupKnows(f.kind, time(f.time), tuple(term(g) for g in f.group), go(f.body))
        if isinstance(f, Permitted):
            return Permitted(f.action, time(f.time), term(f.source), term(f.target))
        if isinstance(f, TimedChange):
            return TimedChange(f.kind, time(f.time), term(f.agent), go(f.body))
        return f

    return go(formula)


def is_ground(formula: Formula) -> bool:
    """No variables anywhere: every timestamp literal, every term constant."""

    def ground_term(term: Term) -> bool:
        if isinstance(term, Var):
            return False
        if isinstance(term, App):
            return all(ground_term(a) for a in term.args)
        return True

    for node in subformulas(formula):
        if isinstance(node, (ForallTime, ForallDomain, Temporal)):
            return False
        if any(not isinstance(t, int) for t in _time_fields(node)):
            return False
        terms: Sequence[Term] = ()
        if isinstance(node, Pred):
            terms = node.args
        elif isinstance(node, (Conn, Act, Permitted)):
            terms = (node.source, node.target)
        elif isinstance(node, (Knows, Believes, TimedChange)):
            terms = (node.agent,)
        elif isinstance(node, GroupKnows):
            terms = node.group
        elif isinstance(node, Occ) and isinstance(node.event, Event):
            terms = node.event.args
        if not all(ground_term(t) for t in terms):
            return False
    return True


# --------------------------------------------------------------------------
# pred / next over an ordered timestamp set


def _sorted_unique(ts: Iterable[int]) -> list[int]:
    return sorted(set(ts))


def pred_time(t: int, ts: Iterable[int]) -> int:
    """Largest element of ``ts`` below ``t``; the minimum maps to itself."""
    ordered = _sorted_unique(ts)
    idx = bisect.bisect_left(ordered, t)
    if idx == len(ordered) or ordered[idx] != t:
        raise UnknownTimestamp(f"timestamp {t} is not in the trace")
    return ordered[idx - 1] if idx > 0 else t


def next_time(t: int, ts: Iterable[int]) -> int:
    """Smallest element of ``ts`` above ``t``; the maximum maps to itself."""
    ordered = _sorted_unique(ts)
    idx = bisect.bisect_left(ordered, t)
    if idx == len(ordered) or ordered[idx] != t:
        raise UnknownTimestamp(f"timestamp {t} is not in the trace")
    return ordered[idx + 1] if idx + 1 < len(ordered) else t


# --------------------------------------------------------------------------
# Macro expansion


def expand_macros(formula: Formula, trace_timestamps: Iterable[int] | None = None) -> Formula:
    """Rewrite derived operators into the core grammar.

    Group modalities, permission sugar and box/diamond always expand.  The
    learn/accept/forget/reject operators need ``pred`` over the trace
    timestamps, so they expand only when ``trace_timestamps`` is given and
    their time is a literal; otherwise they are left in place.
    """
    ts = None if trace_timestamps is None else _sorted_unique(trace_timestamps)

    def go(f: Formula) -> Formula:
        if isinstance(f, GroupKnows):
            if not f.group:
                raise MacroError("group modality over an empty group")
            body = go(f.body)
            members = [Knows(f.time, agent, body) for agent in f.group]
            if f.kind == "E":
                return conjunction(members)
            if f.kind == "S":
                result = members[-1]
                for member in reversed(members[:-1]):
                    result = disjunction(member, result)
                return result
            raise MacroError(f"unknown group modality {f.kind!r}")
        if isinstance(f, Permitted):
            return Act(f.action, f.time, f.source, f.target)
        if isinstance(f, Temporal):
            body = go(f.body)
            if f.kind == "always":
                return ForallTime(f.var, body)
            if f.kind == "eventually":
                return exists_time(f.var, body)
            raise MacroError(f"unknown temporal modality {f.kind!r}")
        if isinstance(f, TimedChange):
            if f.kind not in TIMED_CHANGE_KINDS:
                raise MacroError(f"unknown macro {f.kind!r}")
            body = go(f.body)
            if ts is None or not isinstance(f.time, int):
                return TimedChange(f.kind, f.time, f.agent, body)
            before = pred_time(f.time, ts)
            modality = Knows if f.kind in ("learn", "forget") else Believes
            earlier = modality(before, f.agent, body)
            now = modality(f.time, f.agent, body)
            if f.kind in ("learn", "accept"):
                return And(Not(earlier), now)
            return And(earlier, Not(now))
        if isinstance(f, Not):
            return Not(go(f.body))
        if isinstance(f, And):
            return And(go(f.left), go(f.right))
        if isinstance(f, ForallTime):
            return ForallTime(f.var, go(f.body))
        if isinstance(f, ForallDomain):
            return ForallDomain(f.var, f.domain, f.time, go(f.body))
        if isinstance(f, Knows):
            return Knows(f.time, f.agent, go(f.body))
        if isinstance(f, Believes):
            return Believes(f.time, f.agent, go(f.body))
        if isinstance(f, Occ) and isinstance(f.event, EnterEvent):
            return Occ(f.time, EnterEvent(go(f.event.belief)))
        return f

    if is_core(formula):
        return formula
    return go(formula)


# --------------------------------------------------------------------------
# Policies


@dataclass(frozen=True, slots=True)
class PolicyRule:
    """A bracketed restriction: ``guard => !restriction`` or just ``!restriction``."""

    guard: Formula | None
    restriction: Formula

    def as_formula(self) -> Formula:
        denied = Not(self.restriction)
        return denied if self.guard is None else implies(self.guard, denied)


@dataclass(frozen=True, slots=True)
class PolicyAnd:
    left: "PolicyBody"
    right: "PolicyBody"


@dataclass(frozen=True, slots=True)
class PolicyForall:
    """Policy-level quantifier.  ``domain`` None quantifies over timestamps."""

    var: str
    domain: str | None
    time: TimeExpr | None
    body: "PolicyBody"


PolicyBody = Union[PolicyRule, PolicyAnd, PolicyForall]


@dataclass(frozen=True, slots=True)
class Policy:
    owner: str
    start: int
    body: PolicyBody

    def __str__(self) -> str:
        from .parser import format_policy

        return format_policy(self)


def map_policy(body: PolicyBody, fn: Callable[[Formula], Formula]) -> PolicyBody:
    if isinstance(body, PolicyRule):
        guard = None if body.guard is None else fn(body.guard)
        return PolicyRule(guard, fn(body.restriction))
    if isinstance(body, PolicyAnd):
        return PolicyAnd(map_policy(body.left, fn), map_policy(body.right, fn))
    return PolicyForall(body.var, body.domain, body.time, map_policy(body.body, fn))


def substitute_policy(body: PolicyBody, var: str, value: int | str) -> PolicyBody:
    if isinstance(body, PolicyForall):
        time = value if (body.time == var and isinstance(value, int)) else body.time
        if body.var == var:
            return PolicyForall(body.var, body.domain, time, body.body)
        return PolicyForall(body.var, body.domain, time, substitute_policy(body.body, var, value))
    if isinstance(body, PolicyAnd):
        return PolicyAnd(substitute_policy(body.left, var, value), substitute_policy(body.right, var, value))
    return map_policy(body, lambda f: substitute(f, var, value))


# --------------------------------------------------------------------------
# Framework parameters


class Beta(str, Enum):
    CONSERVATIVE = "conservative"
    SUSCEPTIBLE = "susceptible"


@dataclass(frozen=True, slots=True)
class FrameworkParams:
    """Memory window ``omega`` (ticks or INFINITE), conflict policy ``beta``."""

    omega: float = INFINITE
    beta: Beta = Beta.CONSERVATIVE
    proof_depth: int = 64

    def __post_init__(self) -> None:
        if self.omega < 0:
            raise ValueError("omega must be >= 0")
        if self.proof_depth < 1:
            raise ValueError("proof_depth must be >= 1")
        object.__setattr__(self, "beta", Beta(self.beta))


def parse_omega(text: str | int | float) -> float:
    if isinstance(text, (int, float)):
        return text
    if text.strip().lower() in ("inf", "infinite", "infinity"):
        return INFINITE
    value = int(text)
    if value < 0:
        raise ValueError("omega must be >= 0")
    return value
