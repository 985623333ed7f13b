"""Brute-force reference for timed derivability.

Saturates a finite vocabulary forward, keeping for every derived formula the
least window that derives it.  Shares nothing with the engine's search code.
"""
from __future__ import annotations

import itertools
import math

from kblrt.core import And, Believes, Const, Falsum, Knows, Not, modal_depth, split_implication
from kblrt.engine import is_tautology

MAX_MODAL_DEPTH = 3


def closure(gamma, times, agents, max_depth: int = MAX_MODAL_DEPTH) -> dict:
    times = sorted(times)
    agents = [Const(a) for a in agents]
    best: dict = {}

    def offer(f, w) -> bool:
        if modal_depth(f) > max_depth:
            return False
        if w < best.get(f, math.inf):
            best[f] = w
            return True
        return False

    for f in gamma:
        offer(f, 0)
    for t, a in itertools.product(times, agents):
        offer(Not(Believes(t, a, Falsum())), 0)

    changed = True
    while changed:
        changed = False
        facts = list(best.items())
        index: dict = {}
        for f, w in facts:
            if isinstance(f, (Knows, Believes)):
                index.setdefault((type(f), f.time, f.agent, f.body), w)
        for f, w in facts:
            new: list = []
            if isinstance(f, Knows):
                t, a, body = f.time, f.agent, f.body
                new.append((body, w))                                   # A3
                new.append((Knows(t, a, f), w))                         # A4
                new.append((Believes(t, a, body), w))                   # L1
                for t2 in times:                                        # KR1
                    if t2 > t:
                        new.append((Knows(t2, a, body), w + t2 - t))
                pair = split_implication(body)
                if pair is not None:                                    # A2
                    w2 = index.get((Knows, t, a, pair[0]))
                    if w2 is not None:
                        new.append((Knows(t, a, pair[1]), max(w, w2)))
            if isinstance(f, Believes):
                t, a, body = f.time, f.agent, f.body
                new.append((Believes(t, a, f), w))                      # B4
                new.append((Knows(t, a, f), w))                         # L2
                pair = split_implication(body)
                if pair is not None:                                    # K
                    w2 = index.get((Believes, t, a, pair[0]))
                    if w2 is not None:
                        new.append((Believes(t, a, pair[1]), max(w, w2)))
            if isinstance(f, Not) and isinstance(f.body, Knows):        # A5
                new.append((Knows(f.body.time, f.body.agent, f), w))
            if isinstance(f, Not) and isinstance(f.body, Believes):     # B5
                new.append((Believes(f.body.time, f.body.agent, f), w))
            for g, wg in new:
                if offer(g, wg):
                    changed = True
    return best


def min_window(gamma, goal, times, agents, saturated: dict | None = None) -> float:
    if isinstance(goal, (Not, And)) and is_tautology(goal, opaque_modalities=True):
        return 0
    if saturated is None:
        saturated = closure(gamma, times, agents)
    return saturated.get(goal, math.inf)


def derivable(gamma, goal, window, times, agents) -> bool:
    return min_window(gamma, goal, times, agents) <= window
