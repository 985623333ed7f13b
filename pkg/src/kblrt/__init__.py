"""Timed epistemic logic over social network traces, with privacy policy checking."""
from __future__ import annotations

from .beliefs import PropagationReport, belief_propagation, replay_beliefs
from .checker import Checker, Verdict, believes, conforms, knows, satisfies
from .core import INFINITE, Beta, FrameworkParams, parse_omega
from .ekb import EKB, ekb_union, unfold_quantifiers
from .engine import Failure, Proof, ProofNode, check_proof, consistent, derive, is_tautology
from .parser import ParseError, format_formula, format_policy, parse_formula, parse_policy, parse_trace
from .snm import SocialNetworkModel, Trace, get_semantics, validate_trace

__all__ = [
    "EKB", "INFINITE", "Beta", "Checker", "Failure", "FrameworkParams", "ParseError", "Proof",
    "ProofNode", "PropagationReport", "SocialNetworkModel", "Trace", "Verdict", "belief_propagation",
    "believes", "check_proof", "conforms", "consistent", "derive", "ekb_union", "format_formula",
    "format_policy", "get_semantics", "is_tautology", "knows", "parse_formula", "parse_omega",
    "parse_policy", "parse_trace", "replay_beliefs", "satisfies", "unfold_quantifiers",
    "validate_trace",
]
