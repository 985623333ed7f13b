"""Belief propagation: deciding which beliefs survive when a new one enters."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .core import Believes, Beta, EnterEvent, FrameworkParams, Formula, Knows, Occ, timestamps
from .ekb import EKB, ekb_union
from .engine import consistent
from .snm import OsnSemantics, Trace

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateOutcome:
    formula: Formula
    source_time: int
    admitted: bool
    reason: str  # consistent, inconsistent, already-present

    def to_dict(self) -> dict:
        return {"formula": str(self.formula), "source_time": self.source_time,
                "admitted": self.admitted, "reason": self.reason}


@dataclass
class PropagationReport:
    agent: str
    time: int
    belief: Believes
    beta: Beta
    candidates: list[CandidateOutcome] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"agent": self.agent, "time": self.time, "belief": str(self.belief),
                "beta": self.beta.value, "candidates": [c.to_dict() for c in self.candidates]}

    def to_text(self) -> str:
        lines = [f"{self.agent} @ {self.time}: enter {self.belief} ({self.beta.value})"]
        for c in self.candidates:
            mark = "+" if c.admitted else "-"
            lines.append(f"  {mark} {c.formula}  [from {c.source_time}, {c.reason}]")
        return "\n".join(lines)


def _records(formulas) -> list[Occ]:
    return [f for f in formulas if isinstance(f, Occ) and isinstance(f.event, EnterEvent)]


def belief_propagation(trace: Trace, agent: str, t: int, belief: Believes, params: FrameworkParams,
                       current: EKB | None = None) -> tuple[EKB, PropagationReport]:
    """Process one enter event for ``agent`` at step ``t``.

    Candidates are the beliefs recorded as entering within the last omega
    ticks plus the new one, each re-stated as K^t_i B^t_i psi.  They are
    tried oldest first (conservative) or newest first (susceptible); one is
    admitted iff it keeps the knowledge base free of B^t_i false given the
    agent's whole earlier history.  The enter record is always appended.
    """
    trace.require_agent(agent)
    step = trace.step_at(t)
    if current is None:
        current = step.snm.ekb(agent, t)
    me = belief.agent
    if me.name != agent or belief.time != t:
        raise ValueError(f"{belief} cannot enter the knowledge base of {agent} at {t}")

    lo = t - params.omega
    window_records = _records(ekb_union(trace, agent, lo, t - 1)) if lo <= t - 1 else []
    keyed: list[tuple[tuple, Formula, int]] = []
    for r in window_records:
        keyed.append(((r.time, 0, str(r)), r.event.belief.body, r.time))
    for k, r in enumerate(sorted(_records(current.belief_log), key=str)):
        keyed.append(((t, k, str(r)), r.event.belief.body, t))
    keyed.append(((t, len(current.belief_log), ""), belief.body, t))
    keyed.sort(key=lambda item: item[0], reverse=params.beta is Beta.SUSCEPTIBLE)

    history = ekb_union(trace, agent, -float("inf"), t - 1) if trace.timestamps[0] < t else frozenset()
    horizon = [s for s in trace.timestamps if s <= t]
    report = PropagationReport(agent, t, belief, params.beta)
    ekb = current
    seen: set[Formula] = set()
    for _, body, source in keyed:
        candidate = Knows(t, me, Believes(t, me, body))
        if candidate in seen:
            continue
        seen.add(candidate)
        if candidate in ekb.entries:
            report.candidates.append(CandidateOutcome(candidate, source, True, "already-present"))
            continue
        gamma = history | ekb.formulas()
        ts = sorted(set(horizon) | {x for x in timestamps(candidate) if x <= t})
        ok = consistent(gamma, candidate, t, agent, params.omega, params.proof_depth,
                        functional=trace.functional_predicates, timestamps=ts)
        report.candidates.append(CandidateOutcome(candidate, source, ok, "consistent" if ok else "inconsistent"))
        if ok:
            ekb = ekb.add(entries=[candidate])
    ekb = ekb.add(records=[Occ(t, EnterEvent(belief))])
    return ekb, report


def _strip(ekb: EKB) -> EKB:
    """Drop what earlier propagation put in: K^t_i B^t_i entries and records."""
    me = ekb.agent
    keep = frozenset(f for f in ekb.entries
                     if not (isinstance(f.body, Believes) and f.body.time == ekb.time and f.body.agent.name == me))
    return EKB(ekb.agent, ekb.time, keep, frozenset())


def replay_beliefs(trace: Trace, params: FrameworkParams, sem: OsnSemantics | None = None,
                   include_induced: bool = False) -> tuple[Trace, list[PropagationReport]]:
    """Recompute every belief-bearing EKB of the trace, step by step.

    By default only explicit enter events are replayed.  With
    ``include_induced`` the semantics' induced beliefs are replayed too.
    """
    reports: list[PropagationReport] = []
    for idx, step in enumerate(trace.steps):
        entering: dict[str, list[Believes]] = {}
        for event in step.events:
            beliefs = []
            if isinstance(event, EnterEvent):
                beliefs = [event.belief]
            elif include_induced and sem is not None and idx > 0:
                beliefs = sem.induced_beliefs(trace.steps[idx - 1].snm, event, step.time)
            for b in beliefs:
                entering.setdefault(b.agent.name, []).append(b)
        if not entering:
            continue
        ekbs = dict(step.snm.ekbs)
        for agent, beliefs in entering.items():
            ekb = _strip(step.snm.ekb(agent, step.time))
            for b in beliefs:
                ekb, report = belief_propagation(trace, agent, step.time, b, params, current=ekb)
                reports.append(report)
            ekbs[agent] = ekb
            snms = [s.snm for s in trace.steps]
            snms[idx] = replace(step.snm, ekbs=ekbs)
            trace = trace.with_snms(snms)
            step = trace.steps[idx]
    return trace, reports
