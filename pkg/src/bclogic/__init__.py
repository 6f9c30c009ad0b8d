"""Proof kernel, privacy-game goal generator and concrete simulator for a
first-order indistinguishability logic over xor, pairing and keyed hashing."""

from .errors import (
    ArityMismatch, BclError, ContextContainsReservedName, FreshnessClash,
    IllegalCorruption, IncompatibleSuite, InvalidPosition, KeyCycle, KeyEscapes,
    ParseError, ShapeMismatch, SideConditionViolation, SortMismatch,
    UnboundName, UnboundSymbol, UnknownAction,
)
from .goals import Goal
from .rewrite import NormalForm, derive_false_equality, eq_modulo, lift_if, normalize
from .rules import RuleInstance, RuleKind, SideConditionReport, apply_rule, check_side_conditions, pretty_rule
from .script import (
    ProofNode, ProofScript, Verdict, check_proof, check_prng_separation,
    parse_proof_file, serialize_script,
)
from .syntax import SymbolEnv, parse_goal_file, parse_term, print_goal, print_term, serialize_goal_file
from .terms import (
    Context, Sort, Symbol, Term, adv_symbol, const_symbol, free_names,
    hashed_arguments, key_only_in_key_position, label_symbol, mk_term, name,
    occurs, substitute,
)

__all__ = [n for n in dir() if not n.startswith("_")]
