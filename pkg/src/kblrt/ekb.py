"""Extended knowledge bases: self-aware entries, unfolding, windowed unions."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Iterable, Mapping

from .core import (
    And, Believes, Const, EnterEvent, ForallDomain, ForallTime, Formula, Knows, Not, Occ, Pred,
    UnknownTimestamp, conjunction, expand_macros, is_ground, is_quantifier_free, quantifier_depth,
    size, substitute,
)

if TYPE_CHECKING:
    from .snm import Trace

log = logging.getLogger(__name__)


class SelfAwarenessError(ValueError):
    """An EKB entry is not of the form K^t_i phi for its owner and step."""


class DomainError(ValueError):
    pass


class ExpansionBoundError(AssertionError):
    pass


@dataclass(frozen=True)
class EKB:
    agent: str
    time: int
    entries: frozenset[Formula] = frozenset()
    belief_log: frozenset[Occ] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", frozenset(self.entries))
        object.__setattr__(self, "belief_log", frozenset(self.belief_log))
        me = Const(self.agent)
        for f in self.entries:
            if not (isinstance(f, Knows) and f.agent == me and f.time == self.time):
                raise SelfAwarenessError(f"{f} is not K[{self.time}, {self.agent}]-rooted")
            if not is_ground(f):
                raise SelfAwarenessError(f"{f} is not ground")
        for r in self.belief_log:
            if not (isinstance(r, Occ) and isinstance(r.event, EnterEvent) and r.time == self.time
                    and r.event.belief.agent == me and r.event.belief.time == self.time):
                raise SelfAwarenessError(f"{r} is not an enter record of {self.agent} at {self.time}")

    def formulas(self) -> frozenset[Formula]:
        return self.entries | self.belief_log

    def add(self, entries: Iterable[Formula] = (), records: Iterable[Occ] = ()) -> "EKB":
        return EKB(self.agent, self.time, self.entries | frozenset(entries), self.belief_log | frozenset(records))


def _domain_values(trace: "Trace", domain: str, time: int | None) -> list[str]:
    if time is None:
        values: set[str] = set()
        found = False
        for step in trace.steps:
            if domain in step.snm.domains:
                found = True
                values |= step.snm.domains[domain]
        if not found:
            raise DomainError(f"unknown domain {domain!r}")
        return sorted(values)
    step = trace.step_at(time)
    if domain not in step.snm.domains:
        raise DomainError(f"unknown domain {domain!r} at {time}")
    return sorted(step.snm.domains[domain])


def expansion_base(trace: "Trace") -> int:
    """d in the |phi| * d^q bound: the largest quantifier range of the trace."""
    d = max(1, len(trace.steps))
    names = {n for s in trace.steps for n in s.snm.domains}
    for name in names:
        d = max(d, len(_domain_values(trace, name, None)))
    return d


def unfold_quantifiers(formula: Formula, trace: "Trace", *, check_bound: bool = True) -> Formula:
    """Replace every quantifier by the conjunction of its instances.

    ``forall t`` ranges over the trace timestamps; ``forall x:D[t]`` over D
    at step t (the union over all steps when the domain carries no time).
    """
    formula = expand_macros(formula, trace.timestamps)
    times = list(trace.timestamps)

    def go(f: Formula) -> Formula:
        if isinstance(f, ForallTime):
            return conjunction(go(substitute(f.body, f.var, v)) for v in times)
        if isinstance(f, ForallDomain):
            if f.time is not None and not isinstance(f.time, int):
                raise DomainError(f"domain {f.domain} is indexed by an unbound time {f.time!r}")
            if isinstance(f.time, int) and f.time not in times:
                raise UnknownTimestamp(f"domain {f.domain} looked up at {f.time}, not a trace timestamp")
            values = _domain_values(trace, f.domain, f.time)
            return conjunction(go(substitute(f.body, f.var, v)) for v in values)
        if isinstance(f, Not):
            return Not(go(f.body))
        if isinstance(f, And):
            return And(go(f.left), go(f.right))
        if isinstance(f, Knows):
            return Knows(f.time, f.agent, go(f.body))
        if isinstance(f, Believes):
            return Believes(f.time, f.agent, go(f.body))
        if isinstance(f, Occ) and isinstance(f.event, EnterEvent):
            return Occ(f.time, EnterEvent(go(f.event.belief)))
        return f

    if is_quantifier_free(formula):
        return formula
    out = go(formula)
    if check_bound:
        bound = size(formula) * expansion_base(trace) ** quantifier_depth(formula)
        if size(out) > bound:
            raise ExpansionBoundError(f"expansion has size {size(out)} > {bound}")
    return out


def split_knowledge(f: Formula) -> list[Formula]:
    """K(a && b) becomes K a, K b, recursively, so implications sit alone."""
    if isinstance(f, Knows) and isinstance(f.body, And):
        return split_knowledge(Knows(f.time, f.agent, f.body.left)) + split_knowledge(
            Knows(f.time, f.agent, f.body.right))
    return [f]


def make_entries(agent: str, time: int, formulas: Iterable[Formula], trace: "Trace") -> EKB:
    """Check self-awareness, unfold and split raw entries into an EKB."""
    me = Const(agent)
    entries: set[Formula] = set()
    records: set[Occ] = set()
    for f in formulas:
        if isinstance(f, Occ) and isinstance(f.event, EnterEvent):
            records.add(f)
            continue
        if not (isinstance(f, Knows) and f.agent == me and f.time == time):
            raise SelfAwarenessError(f"EKB entry of {agent} at {time} must be K[{time}, {agent}]-rooted: {f}")
        entries.update(split_knowledge(unfold_quantifiers(f, trace)))
    return EKB(agent, time, frozenset(entries), frozenset(records))


def _true_predicates(trace: "Trace", raw: Mapping[int, Mapping[str, list[Formula]]]) -> list[Pred]:
    found: list[Pred] = []
    for step in trace.steps:
        found.extend(f for f in step.snm.env_facts if isinstance(f, Pred))
        for formulas in raw.get(step.time, {}).values():
            found.extend(f.body for f in formulas if isinstance(f, Knows) and isinstance(f.body, Pred))
    return found


def load_ekbs(trace: "Trace", raw: Mapping[int, Mapping[str, list[Formula]]],
              known_agents: Iterable[str] = ()) -> "Trace":
    """Attach EKBs to a freshly parsed trace.

    Agents named in a true predicate (an environment fact or a known atom)
    but missing from Ag at that predicate's time are added there first,
    since knowledge is true and the predicate is about them.
    """
    known = set(known_agents)
    extra: dict[int, set[str]] = {}
    times = set(trace.timestamps)
    for pred in _true_predicates(trace, raw):
        if not isinstance(pred.time, int) or pred.time not in times:
            continue
        ag = trace.step_at(pred.time).snm.agents
        for arg in pred.args:
            if isinstance(arg, Const) and arg.name in known and arg.name not in ag:
                extra.setdefault(pred.time, set()).add(arg.name)
    snms = []
    for step in trace.steps:
        snm = step.snm
        if step.time in extra:
            log.warning("adding %s to Ag at %s: named in a true predicate", sorted(extra[step.time]), step.time)
            agents = snm.agents | extra[step.time]
            snm = replace(snm, agents=agents, domains={**snm.domains, "Ag": agents})
        snms.append(snm)
    trace = trace.with_snms(snms)

    snms = []
    for step in trace.steps:
        ekbs = {}
        for agent, formulas in raw.get(step.time, {}).items():
            if agent not in step.snm.agents and agent != step.snm.environment:
                raise SelfAwarenessError(f"EKB for unknown agent {agent!r} at {step.time}")
            ekbs[agent] = make_entries(agent, step.time, formulas, trace)
        snms.append(replace(step.snm, ekbs=ekbs))
    return trace.with_snms(snms)


def ekb_union(trace: "Trace", agent: str, lo: float, hi: float) -> frozenset[Formula]:
    """Union of agent's EKB formulas (entries and enter records) over lo <= t <= hi."""
    trace.require_agent(agent)
    if lo > hi:
        raise ValueError("ekb_union needs lo <= hi")
    out: set[Formula] = set()
    for step in trace.steps:
        if lo <= step.time <= hi and agent in step.snm.ekbs:
            out |= step.snm.ekbs[agent].formulas()
    return frozenset(out)
