"""Model checking formulas and policies against a trace."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

from .core import (
    COMPARISONS, Act, And, Believes, Conn, Const, Falsum, ForallDomain, ForallTime, FrameworkParams,
    Formula, Knows, Not, Occ, Policy, PolicyAnd, PolicyRule, Pred, Term, TimeCompare,
    UnknownTimestamp, expand_macros, substitute, substitute_policy,
)
from .ekb import _domain_values, unfold_quantifiers
from .engine import Failure, Proof, derive
from .snm import Trace

log = logging.getLogger(__name__)

Witness = dict[str, Any]


class CheckError(ValueError):
    pass


@dataclass
class Verdict:
    holds: bool
    witness: Witness | None = None
    proof: Proof | Failure | None = None

    def __bool__(self) -> bool:
        return self.holds

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"holds": self.holds, "witness": self.witness}
        if isinstance(self.proof, Proof):
            out["proof"] = self.proof.to_dict()
        elif isinstance(self.proof, Failure):
            out["failure"] = self.proof.to_dict()
        return out


def _name(term: Term) -> str:
    if not isinstance(term, Const):
        raise CheckError(f"unbound term {term!r}")
    return term.name


def _time(t) -> int:
    if not isinstance(t, int):
        raise CheckError(f"unbound time variable {t!r}")
    return t


class Checker:
    """Evaluates closed formulas over one trace.

    Knowledge at t is whatever the engine derives, within the window omega,
    from the agent's EKBs up to and including t (before t when
    ``strict_history`` is set).  ``min_time`` restricts time quantifiers.
    """

    def __init__(self, trace: Trace, params: FrameworkParams | None = None, *,
                 strict_history: bool = False, min_time: int | None = None):
        self.trace = trace
        self.params = params or FrameworkParams()
        self.strict_history = strict_history
        self.min_time = min_time
        self._cache: dict[Formula, Proof | Failure] = {}

    # -- modal queries -----------------------------------------------------

    def _history(self, agent: str, t: int) -> frozenset[Formula]:
        idx = self.trace.index_of(t)
        out: set[Formula] = set()
        last = idx - 1 if self.strict_history else idx
        for step in self.trace.steps[:last + 1]:
            if agent in step.snm.ekbs:
                out |= step.snm.ekbs[agent].formulas()
        return frozenset(out)

    def query(self, goal: Knows | Believes) -> Proof | Failure:
        t = _time(goal.time)
        agent = _name(goal.agent)
        self.trace.step_at(t)
        self.trace.require_agent(agent)
        body = unfold_quantifiers(goal.body, self.trace)
        goal = type(goal)(t, goal.agent, body)
        if goal not in self._cache:
            ts = [s for s in self.trace.timestamps if s <= t]
            self._cache[goal] = derive(self._history(agent, t), goal, self.params.omega,
                                       self.params.proof_depth, timestamps=ts)
        return self._cache[goal]

    def knows(self, t: int, agent: str, body: Formula) -> Proof | Failure:
        return self.query(Knows(t, Const(agent), body))

    def believes(self, t: int, agent: str, body: Formula) -> Proof | Failure:
        return self.query(Believes(t, Const(agent), body))

    # -- satisfaction ------------------------------------------------------

    def _times(self) -> list[int]:
        ts = list(self.trace.timestamps)
        if self.min_time is not None:
            ts = [t for t in ts if t >= self.min_time]
        return ts

    def _atom(self, f: Formula) -> bool:
        if isinstance(f, (Conn, Act)):
            snm = self.trace.step_at(_time(f.time)).snm
            return snm.related(f.name, _name(f.source), _name(f.target))
        if isinstance(f, Pred):
            t = _time(f.time)
            snm = self.trace.step_at(t).snm
            if len(f.args) == 2 and (f.name in snm.connections or f.name in snm.permissions
                                     or f.name in self.trace.connection_names or f.name in self.trace.action_names):
                return snm.related(f.name, _name(f.args[0]), _name(f.args[1]))
            if f in snm.env_facts:
                return True
            env = snm.ekbs.get(snm.environment)
            return env is not None and Knows(t, Const(snm.environment), f) in env.entries
        if isinstance(f, Occ):
            return f.event in self.trace.step_at(_time(f.time)).events
        if isinstance(f, TimeCompare):
            return COMPARISONS[f.op](_time(f.left), _time(f.right))
        raise CheckError(f"cannot evaluate {f}")

    def evaluate(self, f: Formula) -> tuple[bool, Witness]:
        """Truth value plus the bindings explaining it (see :meth:`satisfies`)."""
        if isinstance(f, Not):
            holds, w = self.evaluate(f.body)
            return not holds, w
        if isinstance(f, And):
            left, wl = self.evaluate(f.left)
            if not left:
                return False, wl
            right, wr = self.evaluate(f.right)
            if not right:
                return False, wr
            return True, {**wl, **wr}
        if isinstance(f, (ForallTime, ForallDomain)):
            if isinstance(f, ForallTime):
                values: list = self._times()
            else:
                t = None if f.time is None else _time(f.time)
                if t is not None and t not in self.trace.timestamps:
                    raise UnknownTimestamp(f"domain {f.domain} looked up at {t}, not a trace timestamp")
                values = _domain_values(self.trace, f.domain, t)
            for v in values:
                holds, w = self.evaluate(substitute(f.body, f.var, v))
                if not holds:
                    return False, {f.var: v, **w}
            return True, {}
        if isinstance(f, (Knows, Believes)):
            return bool(self.query(f)), {}
        if isinstance(f, Falsum):
            return False, {}
        return self._atom(f), {}

    def satisfies(self, formula: Formula) -> Verdict:
        """Check a closed formula.

        A witness is reported when the formula is quantified at the top: the
        binding that falsifies a universal, or that satisfies an existential.
        """
        formula = expand_macros(formula, self.trace.timestamps)
        holds, witness = self.evaluate(formula)
        top = formula.body if isinstance(formula, Not) else formula
        quantified = isinstance(top, (ForallTime, ForallDomain))
        proof = self.query(formula) if isinstance(formula, (Knows, Believes)) else None
        return Verdict(holds, witness if quantified and witness else None, proof)

    # -- policies ----------------------------------------------------------

    def _instances(self, body, bindings: Witness, start: int | None):
        if isinstance(body, PolicyRule):
            yield body, bindings
        elif isinstance(body, PolicyAnd):
            yield from self._instances(body.left, bindings, start)
            yield from self._instances(body.right, bindings, start)
        else:
            if body.domain is None:
                values: list = [t for t in self.trace.timestamps if start is None or t >= start]
            else:
                t = None if body.time is None else _time(body.time)
                if t is not None and t not in self.trace.timestamps:
                    raise UnknownTimestamp(f"domain {body.domain} looked up at {t}, not a trace timestamp")
                values = _domain_values(self.trace, body.domain, t)
            for v in values:
                yield from self._instances(substitute_policy(body.body, body.var, v), {**bindings, body.var: v}, start)

    def conforms(self, policy: Policy, *, respect_start: bool = False) -> Verdict:
        """A trace conforms iff every instance of every rule holds.  On a
        violation the witness joins the policy bindings with the inner one."""
        start = policy.start if respect_start else None
        saved = self.min_time
        if start is not None:
            self.min_time = start if saved is None else max(saved, start)
        try:
            for rule, bindings in self._instances(policy.body, {}, start):
                holds, inner = self.evaluate(rule.as_formula())
                if not holds:
                    return Verdict(False, {**bindings, **inner})
            return Verdict(True)
        finally:
            self.min_time = saved


def satisfies(trace: Trace, formula: Formula, params: FrameworkParams | None = None, **kwargs) -> Verdict:
    return Checker(trace, params, **kwargs).satisfies(formula)


def conforms(trace: Trace, policy: Policy, params: FrameworkParams | None = None, *,
             respect_start: bool = False, **kwargs) -> Verdict:
    return Checker(trace, params, **kwargs).conforms(policy, respect_start=respect_start)


def knows(trace: Trace, t: int, agent: str, body: Formula, params: FrameworkParams | None = None,
          **kwargs) -> Proof | Failure:
    return Checker(trace, params, **kwargs).knows(t, agent, body)


def believes(trace: Trace, t: int, agent: str, body: Formula, params: FrameworkParams | None = None,
             **kwargs) -> Proof | Failure:
    return Checker(trace, params, **kwargs).believes(t, agent, body)
