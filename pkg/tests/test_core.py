from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from kblrt.core import (
    And, Beta, Const, FALSE, ForallDomain, ForallTime, FrameworkParams, INFINITE, Knows, Not, Pred,
    TimedChange, UnknownTimestamp, Var, conjunction, conjuncts, expand_macros, implies, is_ground,
    map_times, modal_depth, next_time, parse_omega, pred_time, quantifier_depth, size,
    split_implication, substitute, timestamps,
)
from kblrt.parser import parse_formula_raw

p0 = Pred("p", 0, ())
q1 = Pred("q", 1, (Const("a"),))


def test_implication_shape():
    f = implies(p0, q1)
    assert split_implication(f) == (p0, q1)
    assert split_implication(Not(p0)) is None


def test_conjunction_helpers():
    assert conjunction([]) == Not(FALSE)
    c = conjunction([p0, q1, p0])
    assert c == And(p0, And(q1, p0))
    assert list(conjuncts(c)) == [p0, q1, p0]


def test_metrics():
    f = ForallTime("t", Knows(0, Const("a"), ForallDomain("x", "Ag", "t", Pred("p", "t", (Var("x"),)))))
    assert quantifier_depth(f) == 2
    assert modal_depth(f) == 1
    assert size(f) == 4
    assert timestamps(f) == {0}
    assert not is_ground(f)


def test_substitute_respects_shadowing():
    inner = ForallTime("t", Pred("p", "t", ()))
    f = And(Pred("p", "t", ()), inner)
    assert substitute(f, "t", 4) == And(Pred("p", 4, ()), inner)
    g = ForallDomain("x", "Ag", None, Pred("q", 0, (Var("x"), Var("y"))))
    assert substitute(g, "y", "bob") == ForallDomain("x", "Ag", None, Pred("q", 0, (Var("x"), Const("bob"))))


def test_map_times():
    assert map_times(Knows(2, Const("a"), Pred("p", 1, ())), lambda t: t + 10) == Knows(12, Const("a"), Pred("p", 11, ()))


sorted_sets = st.lists(st.integers(0, 10_000), min_size=1, max_size=20, unique=True).map(sorted)


@given(sorted_sets, st.data())
def test_pred_next_inverse(ts, data):
    t = data.draw(st.sampled_from(ts))
    if t != ts[-1]:
        assert pred_time(next_time(t, ts), ts) == t
    else:
        assert next_time(t, ts) == t
    if t != ts[0]:
        assert next_time(pred_time(t, ts), ts) == t
        assert pred_time(t, ts) < t
    else:
        assert pred_time(t, ts) == t


@given(sorted_sets)
def test_pred_next_reject_unknown(ts):
    missing = max(ts) + 1
    with pytest.raises(UnknownTimestamp):
        pred_time(missing, ts)
    with pytest.raises(UnknownTimestamp):
        next_time(missing, ts)


SUGARED = [
    "E[1, {a, b}] p[1]()",
    "S[1, {a, b, c}] !p[1]()",
    "always t . eventually u . p[u]()",
    "learn[3, a] p[0]() && reject[0, b] q[0]()",
    "K[3, a] accept[3, a] p[0]()",
]


@pytest.mark.parametrize("text", SUGARED)
def test_expansion_is_idempotent(text):
    f = parse_formula_raw(text)
    once = expand_macros(f, [0, 1, 3])
    assert expand_macros(once, [0, 1, 3]) == once


def test_timed_change_needs_timestamps():
    f = parse_formula_raw("learn[3, a] p[0]()")
    assert isinstance(expand_macros(f), TimedChange)
    with pytest.raises(UnknownTimestamp):
        expand_macros(f, [0, 1])


def test_params():
    assert FrameworkParams().omega == INFINITE
    assert FrameworkParams(beta="susceptible").beta is Beta.SUSCEPTIBLE
    with pytest.raises(ValueError):
        FrameworkParams(omega=-1)
    with pytest.raises(ValueError):
        FrameworkParams(beta="reckless")
    assert parse_omega("inf") == math.inf
    assert parse_omega("12") == 12
    with pytest.raises(ValueError):
        parse_omega("-3")
