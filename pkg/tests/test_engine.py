from __future__ import annotations

import math
from dataclasses import replace

import pytest

from kblrt.core import Believes, Const, FALSE, Knows, Not, Pred, implies
from kblrt.engine import (
    Failure, ModalityError, Proof, ProofNode, bottom, check_proof, consistency_seeds, consistent,
    derive, is_tautology,
)
from kblrt.parser import parse_formula

a = Const("a")
p = Pred("p", 0, ())
q = Pred("q", 0, ())


def K(t, body, who=a):
    return Knows(t, who, body)


def B(t, body, who=a):
    return Believes(t, who, body)


def proved(gamma, goal, w=math.inf, **kw) -> Proof:
    result = derive(gamma, goal, w, **kw)
    assert isinstance(result, Proof), result
    assert check_proof(result.root, gamma) == []
    return result


@pytest.mark.parametrize("gamma, goal, rule", [
    ({K(0, p)}, K(0, p), "Premise"),
    ({K(0, p), K(0, implies(p, q))}, K(0, q), "A2"),
    ({K(0, p)}, p, "A3"),
    ({K(0, p)}, K(0, K(0, p)), "A4"),
    ({Not(K(0, p))}, K(0, Not(K(0, p))), "A5"),
    ({B(0, p), B(0, implies(p, q))}, B(0, q), "K"),
    (set(), Not(B(0, FALSE)), "D"),
    ({B(0, p)}, B(0, B(0, p)), "B4"),
    ({Not(B(0, p))}, B(0, Not(B(0, p))), "B5"),
    ({K(0, p)}, B(0, p), "L1"),
    ({B(0, p)}, K(0, B(0, p)), "L2"),
    (set(), implies(p, p), "A1"),
])
def test_each_rule(gamma, goal, rule):
    proof = proved(gamma, goal)
    assert proof.root.rule == rule
    assert proof.min_window == 0


def test_knowledge_retention_costs_the_gap():
    gamma = {K(2, p)}
    assert not derive(gamma, K(7, p), 4, timestamps=[2, 7])
    proof = proved(gamma, K(7, p), 5, timestamps=[2, 7])
    assert proof.root.rule == "KR1" and proof.min_window == 5
    assert proof.root.children[0].window == 0
    # never backwards in time
    assert not derive({K(7, p)}, K(2, p), math.inf, timestamps=[2, 7])


def test_retention_goes_through_intermediate_steps():
    gamma = {K(0, p), K(4, implies(p, q))}
    proof = proved(gamma, K(4, q), 4)
    assert proof.min_window == 4
    assert not derive(gamma, K(4, q), 3)


def test_beliefs_are_not_retained():
    assert not derive({B(0, p)}, B(3, p), math.inf, timestamps=[0, 3])


def test_window_must_be_non_negative():
    with pytest.raises(ValueError):
        derive(set(), p, -1)


def test_failure_reasons():
    chain = {K(0, Pred("a0", 0, ()))}
    for i in range(6):
        chain.add(K(0, implies(Pred(f"a{i}", 0, ()), Pred(f"a{i + 1}", 0, ()))))
    goal = K(0, Pred("a6", 0, ()))
    assert proved(chain, goal)
    shallow = derive(chain, goal, math.inf, depth=2)
    assert isinstance(shallow, Failure) and not shallow
    assert shallow.reason == "depth-exhausted"
    missing = derive(chain, K(0, Pred("zz", 0, ())), math.inf)
    assert missing.reason == "not-derivable"
    assert missing.to_dict()["window"] == "inf"


def test_tautologies():
    assert is_tautology(parse_formula("p[0]() || !p[0]()"))
    assert not is_tautology(parse_formula("p[0]() || q[0]()"))
    with pytest.raises(ModalityError):
        is_tautology(parse_formula("K[0, a] p[0]() || !K[0, a] p[0]()"))
    assert is_tautology(parse_formula("K[0, a] p[0]() || !K[0, a] p[0]()"), opaque_modalities=True)


def test_proof_serialisation():
    proof = proved({K(0, p)}, K(3, p), timestamps=[0, 3])
    d = proof.to_dict()
    assert d["rule"] == "KR1" and d["window"] == "inf"
    assert "Premise" in proof.to_text()
    assert proof.rules_used() == {"KR1", "Premise"}


def test_checker_rejects_tampered_proofs():
    gamma = {K(0, p), K(0, implies(p, q))}
    root = proved(gamma, K(0, q)).root
    assert check_proof(root, {K(0, p)})  # premise no longer in gamma
    wrong_rule = replace(root, rule="K")
    assert check_proof(wrong_rule, gamma)
    kr = proved({K(0, p)}, K(3, p), 3, timestamps=[0, 3]).root
    bad_window = replace(kr, children=(replace(kr.children[0], window=1),))
    assert check_proof(bad_window, {K(0, p)})
    negative = ProofNode("Premise", K(0, p), -1)
    assert check_proof(negative, {K(0, p)})


def test_consistency_with_functional_predicates():
    work = Pred("loc", 0, (Const("u"), Const("work")))
    pub = Pred("loc", 0, (Const("u"), Const("pub")))
    gamma = {K(1, B(1, work))}
    assert consistent(gamma, None, 1, "a", math.inf, functional={"loc"})
    assert consistent(gamma, K(1, B(1, pub)), 1, "a", math.inf)  # not functional: no clash
    assert not consistent(gamma, K(1, B(1, pub)), 1, "a", math.inf, functional={"loc"})
    seeds = consistency_seeds({work, pub}, 1, "a", {"loc"})
    assert K(1, implies(work, implies(pub, FALSE))) in seeds


def test_consistency_between_knowledge_and_belief():
    gamma = {K(1, Not(p))}
    assert not consistent(gamma, K(1, B(1, p)), 1, "a", math.inf)
    assert consistent(gamma, K(1, B(1, q)), 1, "a", math.inf)
    # old knowledge only counts while it is retained
    old = {K(0, Not(p))}
    assert not consistent(old, K(3, B(3, p)), 3, "a", 3, timestamps=[0, 3])
    assert consistent(old, K(3, B(3, p)), 3, "a", 2, timestamps=[0, 3])
    assert bottom(3, "a") == B(3, FALSE)
