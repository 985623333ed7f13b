"""Seeded random generators shared by the property tests."""
from __future__ import annotations

import random

from kblrt.core import (
    And, Believes, Const, Falsum, ForallDomain, ForallTime, Knows, Not, Pred, Var, implies, split_implication,
)

AGENTS = ("a", "b")
TIMES = (0, 1, 2)


def atom(rng: random.Random, times=TIMES) -> Pred:
    return Pred(rng.choice("pq"), rng.choice(times), (Const(rng.choice(("c", "d"))),))


def literal(rng: random.Random, times=TIMES):
    a = atom(rng, times)
    return Not(a) if rng.random() < 0.2 else a


def _body(rng: random.Random, times, depth: int):
    """Formula of modal depth <= depth."""
    roll = rng.random()
    if depth == 0 or roll < 0.35:
        return literal(rng, times)
    if roll < 0.7:
        return implies(_body(rng, times, depth - 1 if rng.random() < 0.3 else 0),
                       _body(rng, times, depth - 1 if rng.random() < 0.5 else 0))
    modal = Knows if rng.random() < 0.6 else Believes
    return modal(rng.choice(times), Const(rng.choice(AGENTS)), _body(rng, times, depth - 1))


def gamma(rng: random.Random, size: int = 4, times=TIMES):
    """A premise set of modal depth <= 2, mostly K-rooted like EKB entries."""
    out = set()
    while len(out) < rng.randint(1, size):
        t, i = rng.choice(times), Const(rng.choice(AGENTS))
        roll = rng.random()
        if roll < 0.25 and size - len(out) >= 2:
            # a modus ponens chain, possibly across time or between K and B
            a, c = atom(rng, times), _body(rng, times, 1 if rng.random() < 0.3 else 0)
            first = Knows if rng.random() < 0.7 else Believes
            out.add(first(rng.choice([s for s in times if s <= t]), i, a))
            out.add(Knows(t, i, implies(a, c)))
        elif roll < 0.32:
            j = Const(rng.choice(AGENTS))
            out.add(Knows(t, i, Not(Knows(rng.choice(times), j, atom(rng, times)))))
        elif roll < 0.88:
            out.add(Knows(t, i, _body(rng, times, 1)))
        else:
            out.add(Believes(t, i, _body(rng, times, 1)))
    return out


def goal(rng: random.Random, premises, times=TIMES):
    """A goal of modal depth <= 3, biased towards things near the premises."""
    t, i = rng.choice(times), Const(rng.choice(AGENTS))
    roll = rng.random()
    if roll < 0.3 and premises:
        f = rng.choice(sorted(premises, key=str))
        body = f.body
        pair = split_implication(body)
        if pair is not None and rng.random() < 0.7:
            modal = Knows if rng.random() < 0.6 else Believes
            return modal(rng.choice((f.time, t)), f.agent, pair[1])
        if rng.random() < 0.5:
            return Knows(t, f.agent, body)
        return Believes(t, f.agent, body) if rng.random() < 0.5 else body
    if roll < 0.45:
        return Knows(t, i, atom(rng, times))
    if roll < 0.55:
        return Believes(t, i, atom(rng, times))
    if roll < 0.62:
        return Not(Believes(t, i, Falsum()))
    if roll < 0.7:
        x = atom(rng, times)
        return implies(x, x)
    if roll < 0.78:
        return Knows(t, i, Believes(t, i, atom(rng, times)))
    if roll < 0.86:
        return Knows(t, i, Knows(t, i, atom(rng, times)))
    if roll < 0.92:
        return Believes(t, i, Believes(t, i, atom(rng, times)))
    return atom(rng, times)


def quantified(rng: random.Random, depth: int = 3, domains=("Ag", "Locs"), vars_=()):
    """Random formula with nested time/domain quantifiers over predicates."""
    if depth == 0 or rng.random() < 0.25:
        tvars = [v for v, kind in vars_ if kind == "t"]
        dvars = [v for v, kind in vars_ if kind == "d"]
        time = rng.choice(tvars) if tvars and rng.random() < 0.7 else 0
        args = tuple(Var(v) for v in dvars[:2]) or (Const("x"),)
        return Pred("p", time, args)
    roll = rng.random()
    n = len(vars_)
    if roll < 0.3:
        return ForallTime(f"t{n}", quantified(rng, depth - 1, domains, vars_ + ((f"t{n}", "t"),)))
    if roll < 0.6:
        return ForallDomain(f"x{n}", rng.choice(domains), None,
                            quantified(rng, depth - 1, domains, vars_ + ((f"x{n}", "d"),)))
    if roll < 0.8:
        return And(quantified(rng, depth - 1, domains, vars_), quantified(rng, depth - 1, domains, vars_))
    if roll < 0.9:
        return Not(quantified(rng, depth - 1, domains, vars_))
    return Knows(0, Const("a"), quantified(rng, depth - 1, domains, vars_))
