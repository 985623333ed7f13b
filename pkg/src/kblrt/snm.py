"""Social network models, traces, event semantics and well-formedness."""
from __future__ import annotations

import itertools
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .core import (
    Act, AnyEvent, Believes, Const, EnterEvent, Event, Formula, Knows, Occ, Policy,
    Pred, UnknownTimestamp, map_policy, map_times, subformulas,
)
from .ekb import EKB

log = logging.getLogger(__name__)

FRIENDSHIP = "friendship"
FRIEND_REQUEST = "friendRequest"

Pair = tuple[str, str]


class OrderedTimestampsViolated(ValueError):
    pass


class UnknownEventError(ValueError):
    pass


class UnknownAgent(ValueError):
    pass


@dataclass(frozen=True, eq=True)
class SocialNetworkModel:
    """One snapshot: agents, relations, domains, knowledge bases and policies.

    EKBs hold only what entered at this step; empty EKBs are dropped so that
    models built by event semantics and models read from files compare equal.
    """

    agents: frozenset[str]
    environment: str = "env"
    connections: Mapping[str, frozenset[Pair]] = field(default_factory=dict)
    permissions: Mapping[str, frozenset[Pair]] = field(default_factory=dict)
    domains: Mapping[str, frozenset[str]] = field(default_factory=dict)
    ekbs: Mapping[str, EKB] = field(default_factory=dict)
    env_facts: frozenset[Formula] = frozenset()
    policies: Mapping[str, tuple[Policy, ...]] = field(default_factory=dict)

    __hash__ = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        agents = frozenset(self.agents)
        if not agents:
            raise ValueError("a social network model needs at least one agent")
        domains = {k: frozenset(v) for k, v in self.domains.items()}
        domains["Ag"] = agents
        conns = {k: frozenset(map(tuple, v)) for k, v in self.connections.items()}
        perms = {k: frozenset(map(tuple, v)) for k, v in self.permissions.items()}
        for kind, rel in (("connection", conns), ("permission", perms)):
            for name, pairs in rel.items():
                for a, b in pairs:
                    if a not in agents or b not in agents:
                        raise ValueError(f"{kind} {name}({a},{b}) mentions an agent outside Ag")
        ekbs = {k: v for k, v in self.ekbs.items() if v.entries or v.belief_log}
        policies = {k: tuple(v) for k, v in self.policies.items() if v}
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "domains", domains)
        object.__setattr__(self, "connections", conns)
        object.__setattr__(self, "permissions", perms)
        object.__setattr__(self, "ekbs", ekbs)
        object.__setattr__(self, "env_facts", frozenset(self.env_facts))
        object.__setattr__(self, "policies", policies)

    def ekb(self, agent: str, time: int) -> EKB:
        return self.ekbs.get(agent) or EKB(agent, time)

    def related(self, relation: str, a: str, b: str) -> bool:
        return (a, b) in self.connections.get(relation, ()) or (a, b) in self.permissions.get(relation, ())

    def friends(self, agent: str) -> list[str]:
        return sorted(b for a, b in self.connections.get(FRIENDSHIP, ()) if a == agent)


@dataclass(frozen=True)
class Step:
    snm: SocialNetworkModel
    events: tuple[AnyEvent, ...]
    time: int


@dataclass(frozen=True)
class Trace:
    """A finite sequence of steps.  Ordering is checked by the loader and by
    :func:`validate_trace`, not here, so malformed traces can be reported on."""

    steps: tuple[Step, ...]
    semantics: str | None = None
    functional_predicates: frozenset[str] = frozenset()
    time_labels: Mapping[str, int] = field(default_factory=dict)
    connection_names: frozenset[str] = frozenset()
    action_names: frozenset[str] = frozenset()

    __hash__ = None  # type: ignore[assignment]

    @property
    def timestamps(self) -> tuple[int, ...]:
        return tuple(step.time for step in self.steps)

    def index_of(self, t: int) -> int:
        for idx, step in enumerate(self.steps):
            if step.time == t:
                return idx
        raise UnknownTimestamp(f"timestamp {t} is not in the trace")

    def step_at(self, t: int) -> Step:
        return self.steps[self.index_of(t)]

    def all_agents(self) -> frozenset[str]:
        out: set[str] = set()
        for step in self.steps:
            out |= step.snm.agents
            out.add(step.snm.environment)
        return frozenset(out)

    def require_agent(self, agent: str) -> None:
        if agent not in self.all_agents():
            raise UnknownAgent(f"unknown agent {agent!r}")

    def vocabulary(self) -> dict:
        """Keyword arguments for the parser so atoms classify like the trace's."""
        return {
            "connections": self.connection_names | {n for s in self.steps for n in s.snm.connections},
            "actions": self.action_names | {n for s in self.steps for n in s.snm.permissions},
            "time_labels": dict(self.time_labels),
        }

    def with_snms(self, snms: Sequence[SocialNetworkModel]) -> "Trace":
        steps = tuple(Step(snm, step.events, step.time) for snm, step in zip(snms, self.steps))
        return replace(self, steps=steps)

    def resolve_time(self, raw: int | str) -> int:
        if isinstance(raw, int):
            return raw
        if raw in self.time_labels:
            return self.time_labels[raw]
        if raw.isdigit():
            return int(raw)
        if ":" in raw:
            hours, minutes = raw.split(":", 1)
            return int(hours) * 60 + int(minutes)
        raise UnknownTimestamp(f"unknown time label {raw!r}")


# --------------------------------------------------------------------------
# Event semantics


class OsnSemantics(ABC):
    """The transition relation SN --(E, t)--> SN'."""

    name: str
    vocabulary: frozenset[str]

    @abstractmethod
    def apply(self, snm: SocialNetworkModel, events: Sequence[AnyEvent], t: int) -> SocialNetworkModel:
        ...

    def induced_beliefs(self, snm: SocialNetworkModel, event: AnyEvent, t: int) -> list[Believes]:
        """Beliefs an event makes enter some agent's knowledge base."""
        if isinstance(event, EnterEvent):
            return [event.belief]
        return []

    def event_name(self, event: AnyEvent) -> str:
        return "enter" if isinstance(event, EnterEvent) else event.name


class _Draft:
    """Mutable working copy used while applying a batch of events."""

    def __init__(self, snm: SocialNetworkModel, t: int):
        self.base = snm
        self.t = t
        self.connections = {k: set(v) for k, v in snm.connections.items()}
        self.permissions = {k: set(v) for k, v in snm.permissions.items()}
        self.domains = {k: set(v) for k, v in snm.domains.items()}
        self.policies = {k: list(v) for k, v in snm.policies.items()}
        self.entries: dict[str, set[Formula]] = {}
        self.logs: dict[str, set[Occ]] = {}
        self.facts: set[Formula] = set()

    def learn(self, agent: str, formula: Formula) -> None:
        self.entries.setdefault(agent, set()).add(Knows(self.t, Const(agent), formula))

    def enter(self, belief: Believes) -> None:
        agent = belief.agent.name
        self.entries.setdefault(agent, set()).add(Knows(self.t, belief.agent, belief))
        self.logs.setdefault(agent, set()).add(Occ(self.t, EnterEvent(belief)))

    def friends(self, agent: str) -> list[str]:
        return sorted(b for a, b in self.connections.get(FRIENDSHIP, ()) if a == agent)

    def freeze(self) -> SocialNetworkModel:
        agents = set(self.entries) | set(self.logs)
        ekbs = {a: EKB(a, self.t, frozenset(self.entries.get(a, ())), frozenset(self.logs.get(a, ())))
                for a in agents}
        return SocialNetworkModel(
            agents=self.base.agents, environment=self.base.environment,
            connections={k: frozenset(v) for k, v in self.connections.items()},
            permissions={k: frozenset(v) for k, v in self.permissions.items()},
            domains={k: frozenset(v) for k, v in self.domains.items()},
            ekbs=ekbs, env_facts=frozenset(self.facts),
            policies={k: tuple(v) for k, v in self.policies.items()},
        )


def _names(event: Event, n: int) -> list[str]:
    if len(event.args) != n or not all(isinstance(a, Const) for a in event.args):
        raise UnknownEventError(f"{event} expects {n} constant arguments")
    return [a.name for a in event.args]


class BuiltinSemantics(OsnSemantics):
    """Friend requests, location-tagged sharing and belief entry.

    With ``posts`` enabled, ``post`` and ``disallowLoc`` are available too;
    ``disallowLoc(b)`` activates a policy of ``b`` that blocks later posts
    tagging ``b``'s location.
    """

    def __init__(self, name: str, posts: bool = False):
        self.name = name
        self.posts = posts
        vocab = {"friendRequest", "acceptFollowReq", "acceptFriendRequest", "share", "enter"}
        if posts:
            vocab |= {"post", "disallowLoc"}
        self.vocabulary = frozenset(vocab)

    def apply(self, snm: SocialNetworkModel, events: Sequence[AnyEvent], t: int) -> SocialNetworkModel:
        if not events:
            return snm
        for event in events:
            if self.event_name(event) not in self.vocabulary:
                raise UnknownEventError(f"{self.name} has no event {self.event_name(event)!r}")
        draft = _Draft(snm, t)
        for event in events:
            self._apply_one(draft, event)
        return draft.freeze()

    def _apply_one(self, d: _Draft, event: AnyEvent) -> None:
        t = d.t
        if isinstance(event, EnterEvent):
            if event.belief.time != t:
                raise UnknownEventError(f"belief entering at {t} is stamped {event.belief.time}")
            d.enter(event.belief)
            return
        name = event.name
        if name == "friendRequest":
            a, b = _names(event, 2)
            if (a, b) not in d.permissions.get(FRIEND_REQUEST, set()):
                log.info("friendRequest(%s,%s) not permitted at %s", a, b, t)
                return
            fact = Act(FRIEND_REQUEST, t, Const(a), Const(b))
            d.learn(a, fact)
            d.learn(b, fact)
        elif name in ("acceptFollowReq", "acceptFriendRequest"):
            a, b = _names(event, 2)
            requests = d.permissions.setdefault(FRIEND_REQUEST, set())
            if (a, b) not in requests:
                return
            requests.discard((a, b))
            d.connections.setdefault(FRIENDSHIP, set()).update({(a, b), (b, a)})
        elif name == "share":
            item, b, loc = _names(event, 3)
            shown = Pred(item, t, (Const(b), Const(loc)))
            where = Pred("loc", t, (Const(b), Const(loc)))
            d.facts.update({shown, where})
            d.learn(b, shown)
            d.learn(b, where)
            for f in d.friends(b):
                d.learn(f, shown)
                d.enter(Believes(t, Const(f), where))
        elif name == "post":
            a, s, loc = _names(event, 3)
            if self._location_blocked(d, s):
                log.info("post(%s,%s,%s) blocked by %s's policy", a, s, loc, s)
                return
            fact = Pred("post", t, (Const(a), Const(s), Const(loc)))
            d.facts.update({fact, Pred("loc", t, (Const(s), Const(loc)))})
            d.learn(a, fact)
            for f in d.friends(a):
                d.learn(f, fact)
        elif name == "disallowLoc":
            (b,) = _names(event, 1)
            from .parser import parse_policy

            text = f"policy[{b}, {t}] {{ forall x:Ag . forall l:Locs . forall u . deny K[u, x] loc[u]({b}, l) }}"
            d.policies.setdefault(b, []).append(parse_policy(text))

    @staticmethod
    def _location_blocked(d: _Draft, subject: str) -> bool:
        for policy in d.policies.get(subject, ()):
            formulas: list[Formula] = []
            map_policy(policy.body, lambda f: formulas.append(f) or f)
            for f in formulas:
                for node in subformulas(f):
                    if isinstance(node, Pred) and node.name == "loc" and node.args and node.args[0] == Const(subject):
                        return True
        return False

    def induced_beliefs(self, snm: SocialNetworkModel, event: AnyEvent, t: int) -> list[Believes]:
        if isinstance(event, Event) and event.name == "share":
            item, b, loc = _names(event, 3)
            where = Pred("loc", t, (Const(b), Const(loc)))
            return [Believes(t, Const(f), where) for f in snm.friends(b)]
        return super().induced_beliefs(snm, event, t)


SEMANTICS: dict[str, OsnSemantics] = {
    "snapchat": BuiltinSemantics("snapchat"),
    "facebook-lite": BuiltinSemantics("facebook-lite", posts=True),
}


def get_semantics(name: str | None) -> OsnSemantics | None:
    if name is None:
        return None
    try:
        return SEMANTICS[name]
    except KeyError:
        raise ValueError(f"unknown event semantics {name!r}; known: {', '.join(sorted(SEMANTICS))}") from None


def register_semantics(sem: OsnSemantics) -> None:
    SEMANTICS[sem.name] = sem


# --------------------------------------------------------------------------
# Independence and well-formedness


def _abstract_formula(f: Formula) -> Formula:
    return map_times(f, lambda t: 0 if isinstance(t, int) else t)


def _abstract_policy(p: Policy) -> Policy:
    return Policy(p.owner, 0, map_policy(p.body, _abstract_formula))


def _outcome(mid: SocialNetworkModel, final: SocialNetworkModel) -> tuple:
    knowledge: dict[str, frozenset[Formula]] = {}
    for snm in (mid, final):
        for agent, kb in snm.ekbs.items():
            items = {_abstract_formula(f) for f in kb.entries | kb.belief_log}
            knowledge[agent] = knowledge.get(agent, frozenset()) | items
    facts = frozenset(_abstract_formula(f) for f in mid.env_facts | final.env_facts)
    policies = {k: frozenset(_abstract_policy(p) for p in v) for k, v in final.policies.items()}
    return (final.agents, final.environment, dict(final.connections), dict(final.permissions),
            dict(final.domains), policies, knowledge, facts)


def check_independence(snm: SocialNetworkModel, e1: AnyEvent, e2: AnyEvent, t: int, t2: int,
                       sem: OsnSemantics) -> bool:
    """Do ``e1`` then ``e2`` and ``e2`` then ``e1`` (at t, then t2) agree?

    Knowledge and environment facts are compared as the union over both
    steps with timestamps abstracted, since which step a fact lands in is
    exactly what the order changes.
    """
    if not t < t2:
        raise ValueError("independence needs t < t2")
    mid_a = sem.apply(snm, (e1,), t)
    mid_b = sem.apply(snm, (e2,), t)
    return _outcome(mid_a, sem.apply(mid_a, (e2,), t2)) == _outcome(mid_b, sem.apply(mid_b, (e1,), t2))


@dataclass
class WellFormedReport:
    ordered: bool
    transitions: bool | None
    independence: bool | None
    messages: list[str] = field(default_factory=list)

    @property
    def well_formed(self) -> bool:
        return self.ordered and self.transitions is not False and self.independence is not False

    def to_dict(self) -> dict:
        def verdict(v: bool | None) -> str:
            return "unchecked" if v is None else ("pass" if v else "fail")

        return {
            "well_formed": self.well_formed,
            "ordered_timestamps": verdict(self.ordered),
            "transitions": verdict(self.transitions),
            "independence": verdict(self.independence),
            "messages": list(self.messages),
        }


def _diff(expected: SocialNetworkModel, actual: SocialNetworkModel) -> list[str]:
    fields = ("agents", "environment", "connections", "permissions", "domains", "ekbs", "env_facts", "policies")
    return [f for f in fields if getattr(expected, f) != getattr(actual, f)]


def validate_trace(trace: Trace, sem: OsnSemantics | None = None) -> WellFormedReport:
    messages: list[str] = []
    times = trace.timestamps
    ordered = all(a < b for a, b in zip(times, times[1:]))
    if not ordered:
        bad = next((a, b) for a, b in zip(times, times[1:]) if a >= b)
        messages.append(f"timestamps not strictly increasing: {bad[0]} then {bad[1]}")
    if sem is None:
        messages.append("no event semantics: transitions and independence unchecked")
        return WellFormedReport(ordered, None, None, messages)

    transitions = True
    independence = True
    for prev, cur in zip(trace.steps, trace.steps[1:]):
        try:
            produced = sem.apply(prev.snm, cur.events, cur.time)
        except UnknownEventError as exc:
            transitions = False
            messages.append(f"step {cur.time}: {exc}")
            continue
        if produced != cur.snm:
            transitions = False
            messages.append(f"step {cur.time}: events do not produce the recorded model "
                            f"(differs in {', '.join(_diff(produced, cur.snm))})")
        for e1, e2 in itertools.combinations(cur.events, 2):
            try:
                ok = check_independence(prev.snm, e1, e2, cur.time, cur.time + 1, sem)
            except UnknownEventError as exc:
                ok = False
                messages.append(f"step {cur.time}: {exc}")
            if not ok:
                independence = False
                messages.append(f"step {cur.time}: events {e1} and {e2} are not independent")
    return WellFormedReport(ordered, transitions, independence, messages)
