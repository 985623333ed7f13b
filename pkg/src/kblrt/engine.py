"""Timed derivations Gamma |- (phi, w).

Search runs in two phases.  A breadth-first backward pass from the goal
collects every rule instance that could contribute, up to ``depth`` levels.
A generalized Dijkstra pass (Knuth's superior-function variant) then
computes, for every collected formula, the least window it needs: leaves
(Premise, A1, D) need 0, the copying rules need the max of their premises,
and KR1 adds its time gap.  The goal is derivable at ``w`` iff its least
window is at most ``w``.  Windows are monotone by construction.
"""
from __future__ import annotations

import heapq
import itertools
import json
import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator

from .core import (
    Act, And, Believes, Conn, Const, Falsum, Formula, Knows, Not, Occ,
    Pred, Term, TimeCompare, agents as formula_agents, implies, split_implication, subformulas,
    timestamps as formula_timestamps,
)

log = logging.getLogger(__name__)

RULES = ("A1", "A2", "A3", "A4", "A5", "K", "D", "B4", "B5", "L1", "L2", "Premise", "KR1")
LEAF_RULES = ("Premise", "A1", "D")
DEFAULT_DEPTH = 64
MAX_NODES = 200_000
MAX_TAUTOLOGY_ATOMS = 20


class ModalityError(ValueError):
    pass


# --------------------------------------------------------------------------
# Propositional tautologies


def _prop_atoms(f: Formula, opaque: bool, out: dict[Formula, None]) -> None:
    if isinstance(f, Not):
        _prop_atoms(f.body, opaque, out)
    elif isinstance(f, And):
        _prop_atoms(f.left, opaque, out)
        _prop_atoms(f.right, opaque, out)
    elif isinstance(f, Falsum):
        pass
    elif isinstance(f, (Pred, Conn, Act, Occ, TimeCompare)):
        out[f] = None
    elif opaque:
        out[f] = None
    else:
        raise ModalityError(f"not propositional: {f}")


def _eval(f: Formula, val: dict[Formula, bool]) -> bool:
    if isinstance(f, Not):
        return not _eval(f.body, val)
    if isinstance(f, And):
        return _eval(f.left, val) and _eval(f.right, val)
    if isinstance(f, Falsum):
        return False
    return val[f]


def is_tautology(f: Formula, *, opaque_modalities: bool = False) -> bool:
    """Truth-table check over atoms.  Modal and quantified subformulas are
    rejected unless ``opaque_modalities`` treats them as atoms."""
    atoms: dict[Formula, None] = {}
    _prop_atoms(f, opaque_modalities, atoms)
    names = list(atoms)
    if len(names) > MAX_TAUTOLOGY_ATOMS:
        log.warning("tautology check skipped: %d atoms", len(names))
        return False
    for values in itertools.product((False, True), repeat=len(names)):
        if not _eval(f, dict(zip(names, values))):
            return False
    return True


# --------------------------------------------------------------------------
# Proofs


def _fmt_window(w: float) -> str:
    return "inf" if w == math.inf else str(int(w))


@dataclass(frozen=True)
class ProofNode:
    rule: str
    conclusion: Formula
    window: float
    children: tuple["ProofNode", ...] = ()

    def walk(self) -> Iterator["ProofNode"]:
        yield self
        for child in self.children:
            yield from child.walk()

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "conclusion": str(self.conclusion),
            "window": _fmt_window(self.window) if self.window == math.inf else int(self.window),
            "children": [c.to_dict() for c in self.children],
        }

    def to_text(self, indent: int = 0) -> str:
        line = f"{'  ' * indent}{self.rule}: ({self.conclusion}, {_fmt_window(self.window)})"
        return "\n".join([line] + [c.to_text(indent + 1) for c in self.children])


@dataclass(frozen=True)
class Proof:
    root: ProofNode
    min_window: float

    def __bool__(self) -> bool:
        return True

    @property
    def goal(self) -> Formula:
        return self.root.conclusion

    def rules_used(self) -> set[str]:
        return {n.rule for n in self.root.walk()}

    def to_dict(self) -> dict:
        return self.root.to_dict()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        return self.root.to_text()


@dataclass(frozen=True)
class Failure:
    goal: Formula
    window: float
    reason: str  # 'not-derivable' or 'depth-exhausted'

    def __bool__(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {"goal": str(self.goal), "window": _fmt_window(self.window), "reason": self.reason}


# --------------------------------------------------------------------------
# Search


@dataclass
class _Instance:
    rule: str
    conclusion: Formula
    premises: tuple[Formula, ...]
    cost: int = 0


def _same(a: Formula, t, i: Term) -> bool:
    return a.time == t and a.agent == i


class _Search:
    def __init__(self, gamma: frozenset[Formula], goal: Formula, window: float, depth: int,
                 timestamps: Iterable[int] | None, agents: Iterable[str | Term] | None):
        self.gamma = gamma
        self.goal = goal
        self.window = window
        self.depth = depth
        subs: set[Formula] = set()
        for f in gamma:
            subs.update(subformulas(f))
        self.pool: dict[Formula, list[Formula]] = {}
        self.wrapped: dict[Formula, list[tuple[int, Term]]] = {}
        for f in subs:
            pair = split_implication(f)
            if pair is not None:
                self.pool.setdefault(pair[1], []).append(f)
            if isinstance(f, Knows):
                self.wrapped.setdefault(f.body, []).append((f.time, f.agent))
        for v in self.pool.values():
            v.sort(key=str)
        for v in self.wrapped.values():
            v.sort(key=str)
        everything = list(gamma) + [goal]
        if timestamps is None:
            ts: set[int] = set()
            for f in everything:
                ts |= formula_timestamps(f)
        else:
            ts = set(timestamps)
        self.times = sorted(ts)
        if agents is None:
            names: set[str] = set()
            for f in everything:
                names |= formula_agents(f)
            self.agents = [Const(n) for n in sorted(names)]
        else:
            self.agents = sorted((a if not isinstance(a, str) else Const(a) for a in agents), key=str)
        self._taut: dict[Formula, bool] = {}

    def leaf_instances(self, g: Formula) -> list[_Instance]:
        out = []
        if g in self.gamma:
            out.append(_Instance("Premise", g, ()))
        if isinstance(g, Not) and isinstance(g.body, Believes) and isinstance(g.body.body, Falsum):
            out.append(_Instance("D", g, ()))
        if isinstance(g, (Not, And)):
            if g not in self._taut:
                self._taut[g] = is_tautology(g, opaque_modalities=True)
            if self._taut[g]:
                out.append(_Instance("A1", g, ()))
        return out

    def inner_instances(self, g: Formula) -> list[_Instance]:
        out: list[_Instance] = []
        if isinstance(g, Knows):
            t, i, body = g.time, g.agent, g.body
            if isinstance(body, Knows) and _same(body, t, i):
                out.append(_Instance("A4", g, (body,)))
            if isinstance(body, Not) and isinstance(body.body, Knows) and _same(body.body, t, i):
                out.append(_Instance("A5", g, (body,)))
            if isinstance(body, Believes) and _same(body, t, i):
                out.append(_Instance("L2", g, (body,)))
            for imp in self.pool.get(body, ()):
                ante = split_implication(imp)[0]
                out.append(_Instance("A2", g, (Knows(t, i, ante), Knows(t, i, imp))))
            if isinstance(t, int):
                for t0 in self.times:
                    if t0 >= t:
                        break
                    if t - t0 <= self.window:
                        out.append(_Instance("KR1", g, (Knows(t0, i, body),), t - t0))
        elif isinstance(g, Believes):
            t, i, body = g.time, g.agent, g.body
            if isinstance(body, Believes) and _same(body, t, i):
                out.append(_Instance("B4", g, (body,)))
            if isinstance(body, Not) and isinstance(body.body, Believes) and _same(body.body, t, i):
                out.append(_Instance("B5", g, (body,)))
            out.append(_Instance("L1", g, (Knows(t, i, body),)))
            for imp in self.pool.get(body, ()):
                ante = split_implication(imp)[0]
                out.append(_Instance("K", g, (Believes(t, i, ante), Believes(t, i, imp))))
        seen: set[Formula] = set()
        for s, j in self.wrapped.get(g, ()):
            seen.add(Knows(s, j, g))
        if g in self.pool:
            for s in self.times:
                for j in self.agents:
                    seen.add(Knows(s, j, g))
        for premise in sorted(seen, key=str):
            out.append(_Instance("A3", g, (premise,)))
        return out

    def run(self) -> Proof | Failure:
        goal = self.goal
        instances: list[_Instance] = []
        level = {goal: 0}
        queue = deque([goal])
        exhausted = False
        while queue:
            g = queue.popleft()
            leaves = self.leaf_instances(g)
            instances.extend(leaves)
            if g is goal and leaves:
                break
            inner = self.inner_instances(g)
            if not inner:
                continue
            if level[g] >= self.depth or len(level) > MAX_NODES:
                if not leaves:
                    exhausted = True
                continue
            for inst in inner:
                instances.append(inst)
                for p in inst.premises:
                    if p not in level:
                        level[p] = level[g] + 1
                        queue.append(p)

        best: dict[Formula, _Instance] = {}
        value: dict[Formula, float] = {}
        users: dict[Formula, list[int]] = {}
        remaining: list[int] = []
        heap: list[tuple[float, int, int]] = []
        counter = itertools.count()
        for idx, inst in enumerate(instances):
            distinct = set(inst.premises)
            remaining.append(len(distinct))
            for p in distinct:
                users.setdefault(p, []).append(idx)
            if not distinct:
                heapq.heappush(heap, (0, next(counter), idx))
        while heap:
            v, _, idx = heapq.heappop(heap)
            inst = instances[idx]
            c = inst.conclusion
            if c in value:
                continue
            if v > self.window:
                break
            value[c] = v
            best[c] = inst
            if c == goal:
                break
            for u in users.get(c, ()):
                remaining[u] -= 1
                if remaining[u] == 0:
                    user = instances[u]
                    val = max(value[p] for p in user.premises) + user.cost
                    if val <= self.window:
                        heapq.heappush(heap, (val, next(counter), u))

        if goal not in value:
            return Failure(goal, self.window, "depth-exhausted" if exhausted else "not-derivable")

        def build(g: Formula, w: float) -> ProofNode:
            inst = best[g]
            return ProofNode(inst.rule, g, w, tuple(build(p, w - inst.cost) for p in inst.premises))

        return Proof(build(goal, self.window), value[goal])


def derive(gamma: Iterable[Formula], goal: Formula, window: float, depth: int = DEFAULT_DEPTH, *,
           timestamps: Iterable[int] | None = None, agents: Iterable[str | Term] | None = None) -> Proof | Failure:
    """Search for a timed derivation of ``(goal, window)`` from ``gamma``.

    ``timestamps`` is the set KR1 may step through and A3 may range over;
    it defaults to the timestamps mentioned in gamma and goal.  ``agents``
    likewise defaults to the agents indexing a modality there.
    """
    if window < 0:
        raise ValueError("window must be >= 0")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    return _Search(frozenset(gamma), goal, window, depth, timestamps, agents).run()


# --------------------------------------------------------------------------
# Consistency


def bottom(t: int, agent: str | Term) -> Formula:
    return Believes(t, agent if not isinstance(agent, str) else Const(agent), Falsum())


def consistency_seeds(formulas: Iterable[Formula], t: int, agent: str | Term,
                      functional: Iterable[str] = ()) -> set[Formula]:
    """Axioms added to Gamma before asking for B^t_i false.

    Functional predicates yield K^t_i(p(..,v) => (p(..,v') => false)) for
    every pair of atoms differing only in the last argument.  Every body chi
    of a K_i/B_i subformula yields K^t_i(!chi => (chi => false)) so that a
    belief of chi meets knowledge of !chi.
    """
    me = agent if not isinstance(agent, str) else Const(agent)
    functional = set(functional)
    false = Falsum()
    subs: set[Formula] = set()
    for f in formulas:
        subs.update(subformulas(f))
    seeds: set[Formula] = set()
    groups: dict[tuple, set[Pred]] = {}
    for f in subs:
        if isinstance(f, Pred) and f.name in functional and f.args:
            groups.setdefault((f.name, f.time, f.args[:-1]), set()).add(f)
        if isinstance(f, (Knows, Believes)) and f.agent == me:
            chi = f.body.body if isinstance(f.body, Not) else f.body
            if not isinstance(chi, Falsum):
                seeds.add(Knows(t, me, implies(Not(chi), implies(chi, false))))
    for atoms in groups.values():
        for a, b in itertools.permutations(sorted(atoms, key=str), 2):
            seeds.add(Knows(t, me, implies(a, implies(b, false))))
    return seeds


def consistent(gamma: Iterable[Formula], candidate: Formula | None, t: int, agent: str | Term,
               window: float, depth: int = DEFAULT_DEPTH, *, functional: Iterable[str] = (),
               timestamps: Iterable[int] | None = None) -> bool:
    """True iff gamma plus candidate (plus seeds) does not derive B^t_i false."""
    base = set(gamma)
    if candidate is not None:
        base.add(candidate)
    base |= consistency_seeds(base, t, agent, functional)
    result = derive(base, bottom(t, agent), window, depth, timestamps=timestamps)
    if isinstance(result, Failure) and result.reason == "depth-exhausted":
        log.info("consistency check for %s at %s hit the depth bound; treating as consistent", agent, t)
        return True
    return not result


# --------------------------------------------------------------------------
# Independent proof checking


def check_proof(node: ProofNode, gamma: Iterable[Formula]) -> list[str]:
    """Re-validate every node against its rule schema.  Returns problems found."""
    gamma = frozenset(gamma)
    problems: list[str] = []

    def bad(n: ProofNode, why: str) -> None:
        problems.append(f"{n.rule} at ({n.conclusion}, {_fmt_window(n.window)}): {why}")

    def visit(n: ProofNode) -> None:
        c, kids = n.conclusion, n.children
        if n.window < 0:
            bad(n, "negative window")
        if n.rule not in RULES:
            bad(n, "unknown rule")
            return
        arity = {"Premise": 0, "A1": 0, "D": 0, "A2": 2, "K": 2}.get(n.rule, 1)
        if len(kids) != arity:
            bad(n, f"expected {arity} premises, got {len(kids)}")
            return
        if n.rule != "KR1" and any(k.window != n.window for k in kids):
            bad(n, "premise window differs from conclusion window")
        prem = [k.conclusion for k in kids]
        ok = True
        if n.rule == "Premise":
            ok = c in gamma
        elif n.rule == "A1":
            try:
                ok = is_tautology(c, opaque_modalities=True)
            except ModalityError:
                ok = False
        elif n.rule == "D":
            ok = isinstance(c, Not) and isinstance(c.body, Believes) and isinstance(c.body.body, Falsum)
        elif n.rule in ("A2", "K"):
            modal = Knows if n.rule == "A2" else Believes
            ok = (isinstance(c, modal) and all(isinstance(p, modal) and _same(p, c.time, c.agent) for p in prem)
                  and prem[1].body == implies(prem[0].body, c.body))
        elif n.rule == "A3":
            ok = isinstance(prem[0], Knows) and prem[0].body == c
        elif n.rule == "A4":
            ok = isinstance(c, Knows) and prem[0] == c.body and isinstance(c.body, Knows) and _same(c.body, c.time, c.agent)
        elif n.rule == "A5":
            ok = (isinstance(c, Knows) and isinstance(c.body, Not) and isinstance(c.body.body, Knows)
                  and _same(c.body.body, c.time, c.agent) and prem[0] == c.body)
        elif n.rule == "B4":
            ok = isinstance(c, Believes) and prem[0] == c.body and isinstance(c.body, Believes) and _same(c.body, c.time, c.agent)
        elif n.rule == "B5":
            ok = (isinstance(c, Believes) and isinstance(c.body, Not) and isinstance(c.body.body, Believes)
                  and _same(c.body.body, c.time, c.agent) and prem[0] == c.body)
        elif n.rule == "L1":
            ok = isinstance(c, Believes) and prem[0] == Knows(c.time, c.agent, c.body)
        elif n.rule == "L2":
            ok = isinstance(c, Knows) and isinstance(c.body, Believes) and _same(c.body, c.time, c.agent) and prem[0] == c.body
        elif n.rule == "KR1":
            p = prem[0]
            ok = (isinstance(c, Knows) and isinstance(p, Knows) and p.agent == c.agent and p.body == c.body
                  and isinstance(p.time, int) and isinstance(c.time, int) and p.time < c.time
                  and kids[0].window == n.window - (c.time - p.time))
        if not ok:
            bad(n, "does not match the rule schema")
        for k in kids:
            visit(k)

    visit(node)
    return problems
