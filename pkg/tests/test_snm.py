from __future__ import annotations

import copy
import json

import pytest

from kblrt.core import Act, Believes, Const, Knows, Pred
from kblrt.parser import parse_event, parse_trace
from kblrt.snm import (
    SocialNetworkModel, UnknownAgent, UnknownEventError, check_independence, get_semantics,
    validate_trace,
)


def base() -> SocialNetworkModel:
    return SocialNetworkModel(
        agents={"alice", "bob", "carol"},
        connections={"friendship": {("alice", "bob"), ("bob", "alice")}},
        permissions={"friendRequest": {("carol", "alice")}},
    )


def test_model_invariants():
    snm = base()
    assert snm.domains["Ag"] == snm.agents
    assert snm.friends("alice") == ["bob"]
    with pytest.raises(ValueError):
        SocialNetworkModel(agents=set())
    with pytest.raises(ValueError, match="outside Ag"):
        SocialNetworkModel(agents={"a"}, connections={"friendship": {("a", "zed")}})


def test_empty_event_set_is_identity():
    assert get_semantics("snapchat").apply(base(), (), 3) is not None
    assert get_semantics("snapchat").apply(base(), (), 3) == base()


def test_friend_request_and_accept():
    sem = get_semantics("snapchat")
    after = sem.apply(base(), (parse_event("friendRequest(carol, alice)"),), 1)
    fact = Act("friendRequest", 1, Const("carol"), Const("alice"))
    assert Knows(1, Const("alice"), fact) in after.ekbs["alice"].entries
    assert Knows(1, Const("carol"), fact) in after.ekbs["carol"].entries
    accepted = sem.apply(after, (parse_event("acceptFollowReq(carol, alice)"),), 2)
    assert accepted.related("friendship", "alice", "carol")
    assert not accepted.related("friendRequest", "carol", "alice")
    # not permitted: nothing happens beyond an empty step
    refused = sem.apply(base(), (parse_event("friendRequest(alice, carol)"),), 1)
    assert refused.ekbs == {}


def test_share_induces_beliefs():
    sem = get_semantics("snapchat")
    after = sem.apply(base(), (parse_event("share(picture, bob, work)"),), 4)
    where = Pred("loc", 4, (Const("bob"), Const("work")))
    assert Knows(4, Const("alice"), Believes(4, Const("alice"), where)) in after.ekbs["alice"].entries
    assert after.ekbs["alice"].belief_log
    assert where in after.env_facts
    induced = sem.induced_beliefs(base(), parse_event("share(picture, bob, work)"), 4)
    assert induced == [Believes(4, Const("alice"), where)]


def test_unknown_events():
    with pytest.raises(UnknownEventError):
        get_semantics("snapchat").apply(base(), (parse_event("post(alice, bob, pub)"),), 1)
    with pytest.raises(UnknownEventError):
        get_semantics("snapchat").apply(base(), (parse_event("share(picture, bob)"),), 1)
    with pytest.raises(ValueError, match="unknown event semantics"):
        get_semantics("myspace")


def test_disallow_loc_blocks_posts():
    sem = get_semantics("facebook-lite")
    blocked = sem.apply(base(), (parse_event("disallowLoc(bob)"),), 1)
    assert blocked.policies["bob"]
    after = sem.apply(blocked, (parse_event("post(alice, bob, pub)"),), 2)
    assert not after.env_facts
    allowed = sem.apply(base(), (parse_event("post(alice, bob, pub)"),), 2)
    assert Pred("loc", 2, (Const("bob"), Const("pub"))) in allowed.env_facts


def test_independence_is_symmetric():
    sem = get_semantics("facebook-lite")
    post, disallow = parse_event("post(alice, bob, pub)"), parse_event("disallowLoc(bob)")
    assert check_independence(base(), post, disallow, 1, 2, sem) == check_independence(base(), disallow, post, 1, 2, sem)
    with pytest.raises(ValueError):
        check_independence(base(), post, disallow, 2, 2, sem)


def test_trace_lookup_errors(sample):
    trace = sample("snapchat.trace")
    with pytest.raises(Exception, match="not in the trace"):
        trace.step_at(8)
    with pytest.raises(UnknownAgent):
        trace.require_agent("mallory")
    assert trace.resolve_time("10:00") == 600


def _snapchat_doc(sample_path):
    with open(sample_path("snapchat.trace")) as fh:
        return json.load(fh)


def test_validate_reports_bad_transition(sample_path):
    doc = _snapchat_doc(sample_path)
    assert validate_trace(parse_trace(doc), get_semantics("snapchat")).well_formed
    broken = copy.deepcopy(doc)
    del broken["steps"][2]["ekbs"]["bob"]
    report = validate_trace(parse_trace(broken), get_semantics("snapchat"))
    assert report.transitions is False and not report.well_formed
    assert any("ekbs" in m for m in report.messages)


def test_validate_reports_dependent_events(sample_path):
    doc = {
        "semantics": "facebook-lite",
        "steps": [
            {"time": 0, "agents": ["alice", "bob"], "connections": {"friendship": [["alice", "bob"], ["bob", "alice"]]},
             "domains": {"Locs": ["pub"]}},
            {"time": 1, "events": ["post(alice, bob, pub)", "disallowLoc(bob)"]},
        ],
    }
    trace = parse_trace(doc)
    sem = get_semantics("facebook-lite")
    produced = sem.apply(trace.steps[0].snm, trace.steps[1].events, 1)
    trace = trace.with_snms([trace.steps[0].snm, produced])
    report = validate_trace(trace, sem)
    assert report.transitions is True
    assert report.independence is False
    assert report.to_dict()["independence"] == "fail"


def test_validate_unordered_and_unchecked():
    doc = {"steps": [{"time": 2, "agents": ["a"]}, {"time": 1}]}
    report = validate_trace(parse_trace(doc, check_order=False))
    assert not report.ordered and not report.well_formed
    report = validate_trace(parse_trace({"steps": [{"time": 0, "agents": ["a"]}]}))
    assert report.well_formed and report.to_dict()["transitions"] == "unchecked"
