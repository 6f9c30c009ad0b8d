"""Tree-structured proof scripts: the `.bcproof` format, the checker, and
the programmatic pseudo-randomness separation derivation.

Script grammar: `(rule-name {param = value}* child*)`, comments `;`.
Goals live in sidecar `.bcgoal` files and are referenced by name.
"""

from __future__ import annotations

from dataclasses import dataclass

from .builder import Deriv
from .errors import (
    BclError, ContextContainsReservedName, ParseError, ShapeMismatch,
    SideConditionViolation, SortMismatch,
)
from .goals import Goal
from .rewrite import eq_modulo
from .rules import LEAF_KINDS, RuleInstance, RuleKind, SideConditionReport, apply_rule
from .syntax import SymbolEnv, Token, TokenStream, _parse_term, lex, print_goal, print_term
from .terms import (
    GEN, INIT, PI_O, PI_S, Context, Name, Sort, Term, App, free_names, hole,
    mk_term, name,
)


@dataclass(frozen=True)
class ProofNode:
    inst: RuleInstance
    children: tuple["ProofNode", ...]


@dataclass(frozen=True)
class ProofScript:
    root: ProofNode
    goal_name: str | None = None


@dataclass
class Verdict:
    accepted: bool
    steps_checked: int
    failure: tuple[str, str, SideConditionReport | None] | None = None

    def __bool__(self) -> bool:
        return self.accepted


# ---------------------------------------------------------------------------
# Checking

def check_proof(script: ProofScript, goal: Goal) -> Verdict:
    """Deterministically replay the script; the first bad node (pre-order)
    is reported with its path, e.g. `0.1.0`."""
    steps = 0

    def walk(node: ProofNode, g: Goal, path: tuple[int, ...]) -> tuple[str, str, SideConditionReport | None] | None:
        nonlocal steps
        steps += 1
        try:
            subgoals = apply_rule(node.inst, g)
        except SideConditionViolation as e:
            return _path_str(path), "side condition violated", e.report
        except (ShapeMismatch, SortMismatch, BclError) as e:
            return _path_str(path), str(e), None
        if len(node.children) != len(subgoals):
            return (
                _path_str(path),
                f"rule emits {len(subgoals)} subgoals, script provides {len(node.children)}",
                None,
            )
        for i, (child, sub) in enumerate(zip(node.children, subgoals)):
            bad = walk(child, sub, path + (i,))
            if bad is not None:
                return bad
        return None

    failure = walk(script.root, goal, ())
    return Verdict(failure is None, steps, failure)


def _path_str(path: tuple[int, ...]) -> str:
    return ".".join(str(i) for i in path) if path else "root"


def deriv_to_script(d: Deriv, goal_name: str | None = None) -> ProofScript:
    def conv(node: Deriv) -> ProofNode:
        if node.inst is None:
            raise RuntimeError("derivation has an unfinished branch")
        return ProofNode(node.inst, tuple(conv(c) for c in node.children))

    return ProofScript(conv(d), goal_name)


# ---------------------------------------------------------------------------
# Parsing

_INT_LIST_PARAMS = {"order", "positions", "path", "subpath"}
_TERM_LIST_PARAMS = {"witness", "z"}
_GOAL_PARAMS = {"to"}
_PARAM_FIELD = {
    "pos": "pos", "keep": "keep", "drop": "drop", "order": "order",
    "positions": "positions", "z": "z", "witness": "witness", "to": "to_goal",
    "side": "side", "path": "path", "subpath": "subpath", "key": "key",
    "fresh": "fresh", "name": "name_left", "rightname": "name_right",
    "seed": "seed",
}
_KIND_BY_NAME = {k.value: k for k in RuleKind}


def parse_proof_file(text: str, env: SymbolEnv) -> ProofScript:
    ts = TokenStream(lex(text))
    goal_name = None
    if ts.at_ident("proof"):
        ts.next()
        goal_name = ts.expect("ident").text
    root = _parse_node(ts, env)
    tok = ts.peek()
    if tok.kind != "eof":
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
    return ProofScript(root, goal_name)


def _parse_node(ts: TokenStream, env: SymbolEnv) -> ProofNode:
    ts.expect("(")
    tok = ts.expect("ident")
    kind = _KIND_BY_NAME.get(tok.text.lower())
    if kind is None:
        raise ParseError(f"unknown rule {tok.text!r}", tok.line, tok.col)
    params: dict[str, object] = {}
    children: list[ProofNode] = []
    while True:
        t = ts.peek()
        if t.kind == ")":
            ts.next()
            break
        if t.kind == "(":
            children.append(_parse_node(ts, env))
            continue
        if t.kind == "ident" and ts.peek(1).kind == "=":
            pname = ts.next().text
            ts.next()
            field_name = _PARAM_FIELD.get(pname)
            if field_name is None:
                raise ParseError(f"unknown parameter {pname!r}", t.line, t.col)
            params[field_name] = _parse_value(ts, env, pname)
            continue
        raise ParseError(f"unexpected token {t.text!r} in rule node", t.line, t.col)
    return ProofNode(RuleInstance(kind, **params), tuple(children))


def _parse_value(ts: TokenStream, env: SymbolEnv, pname: str):
    t = ts.peek()
    if t.kind == "[":
        ts.next()
        if pname in _INT_LIST_PARAMS:
            out: list[int] = []
            while ts.peek().kind != "]":
                tok = ts.expect("int")
                out.append(int(tok.text))
                if ts.peek().kind == ",":
                    ts.next()
            ts.expect("]")
            return tuple(out)
        if pname in _TERM_LIST_PARAMS:
            terms = _parse_term_list(ts, env)
            ts.expect("]")
            return tuple(terms)
        if pname in _GOAL_PARAMS:
            left = _parse_term_list(ts, env)
            ts.expect("~")
            right = _parse_term_list(ts, env)
            ts.expect("]")
            return Goal(tuple(left), tuple(right))
        raise ParseError(f"parameter {pname!r} does not take a bracket value", t.line, t.col)
    if t.kind == "int":
        ts.next()
        return int(t.text)
    if t.kind == "ident":
        ts.next()
        return t.text
    raise ParseError(f"bad parameter value {t.text!r}", t.line, t.col)


def _parse_term_list(ts: TokenStream, env: SymbolEnv) -> list[Term]:
    out: list[Term] = []
    if ts.peek().kind in ("]", "~"):
        return out
    out.append(_parse_term(ts, env))
    while ts.peek().kind == ",":
        ts.next()
        out.append(_parse_term(ts, env))
    return out


# ---------------------------------------------------------------------------
# Serialization

def serialize_script(script: ProofScript) -> str:
    lines: list[str] = []
    if script.goal_name:
        lines.append(f"proof {script.goal_name}")

    def emit(node: ProofNode, depth: int) -> None:
        ind = "  " * depth
        head = f"{ind}({node.inst.kind.value}{_params_str(node.inst)}"
        if not node.children:
            lines.append(head + ")")
            return
        lines.append(head)
        for c in node.children:
            emit(c, depth + 1)
        lines.append(f"{ind})")

    emit(script.root, 0)
    return "\n".join(lines) + "\n"


def _params_str(inst: RuleInstance) -> str:
    parts: list[str] = []

    def add(pname: str, value) -> None:
        parts.append(f" {pname} = {value}")

    if inst.pos is not None:
        add("pos", inst.pos)
    if inst.positions is not None:
        add("positions", "[" + " ".join(str(i) for i in inst.positions) + "]")
    if inst.z is not None:
        add("z", "[" + ", ".join(print_term(t) for t in inst.z) + "]")
    if inst.keep is not None:
        add("keep", inst.keep)
    if inst.drop is not None:
        add("drop", inst.drop)
    if inst.order is not None:
        add("order", "[" + " ".join(str(i) for i in inst.order) + "]")
    if inst.witness is not None:
        add("witness", "[" + ", ".join(print_term(t) for t in inst.witness) + "]")
    if inst.to_goal is not None:
        add("to", "[" + print_goal(inst.to_goal) + "]")
    if inst.side is not None:
        add("side", inst.side)
    if inst.path is not None:
        add("path", "[" + " ".join(str(i) for i in inst.path) + "]")
    if inst.subpath is not None:
        add("subpath", "[" + " ".join(str(i) for i in inst.subpath) + "]")
    if inst.key is not None:
        add("key", inst.key)
    if inst.fresh is not None:
        add("fresh", inst.fresh)
    if inst.name_left is not None:
        add("name", inst.name_left)
    if inst.name_right is not None:
        add("rightname", inst.name_right)
    if inst.seed is not None:
        add("seed", inst.seed)
    return "".join(parts)


# ---------------------------------------------------------------------------
# Pseudo-randomness separation (stateful generator abstracted as fresh names)

def prng_chain(seed_ident: str, count: int) -> list[Term]:
    chain = [mk_term(GEN, (mk_term(INIT, (name(seed_ident),)),))]
    for _ in range(count - 1):
        chain.append(mk_term(GEN, (mk_term(PI_S, (chain[-1],)),)))
    return chain


def builtin_context_family(family: str, n: int) -> list[Context]:
    """Three stock context families: a keyed-hash context, a pairing context
    with per-index names, and a pairing context sharing one name (exercising
    the duplicate-removal step)."""
    from .terms import HASH, PAIR

    out: list[Context] = []
    h = hole(Sort.NONCE)
    for i in range(n + 1):
        if family == "hash":
            t = mk_term(HASH, (h, name("kctx")))
        elif family == "pair":
            t = mk_term(PAIR, (h, name(f"m{i}")))
        elif family == "shared":
            t = mk_term(PAIR, (h, name("mshare")))
        else:
            raise ValueError(f"unknown context family {family!r}")
        out.append(Context(t, Sort.NONCE))
    return out


def check_prng_separation(
    n: int,
    contexts: list[Context] | None = None,
    *,
    seed_ident: str = "seed",
    fresh_idents: list[str] | None = None,
) -> Verdict:
    """Build and check the derivation abstracting generator outputs as fresh
    names under the supplied contexts (FA*, Perm, Dup*, FreshNonce*, then the
    generator axiom leaf)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if contexts is None:
        contexts = builtin_context_family("hash", n)
    if len(contexts) != n + 1:
        raise ShapeMismatch(f"need {n + 1} contexts, got {len(contexts)}")
    fresh = fresh_idents or [f"r{i}" for i in range(n + 1)]
    reserved = set(fresh) | {seed_ident}
    for i, ctx in enumerate(contexts):
        bad = free_names(ctx.term) & reserved
        if bad:
            raise ContextContainsReservedName(
                f"context {i} mentions reserved name(s) {sorted(bad)}"
            )
    chain = prng_chain(seed_ident, n + 1)
    outputs = [mk_term(PI_O, (c,)) for c in chain]
    left = tuple(ctx.fill(outputs[i]) for i, ctx in enumerate(contexts))
    right = tuple(ctx.fill(name(fresh[i])) for i, ctx in enumerate(contexts))
    goal = Goal(left, right)

    root = Deriv(goal)
    cur = root
    # Unfold every shared context application; stops exactly at the filled
    # holes because their right side is a bare name.
    while True:
        g = cur.goal
        pos = next(
            (i for i in range(len(g)) if isinstance(g.left[i], App) and isinstance(g.right[i], App)),
            None,
        )
        if pos is None:
            break
        cur = cur.fa(pos)
    # Sort: context names first (first occurrence order), then the generator
    # outputs in chain order.
    g = cur.goal
    name_pos = [i for i in range(len(g)) if isinstance(g.left[i], Name)]
    out_pos = [i for i in range(len(g)) if not isinstance(g.left[i], Name)]
    out_pos.sort(key=lambda i: outputs.index(g.left[i]))
    order = name_pos + out_pos
    if order != list(range(len(g))):
        cur = cur.perm(order)
    # Remove duplicate names.
    while True:
        g = cur.goal
        seen: dict[str, int] = {}
        dup_at = None
        for i in range(len(g)):
            el = g.left[i]
            if isinstance(el, Name):
                if el.ident in seen:
                    dup_at = (seen[el.ident], i)
                    break
                seen[el.ident] = i
        if dup_at is None:
            break
        cur = cur.dup(keep=dup_at[0], drop=dup_at[1])
    # Drop the remaining context names.
    while len(cur.goal) and isinstance(cur.goal.left[0], Name):
        cur = cur.freshnonce(0)
    cur.prng(seed_ident)
    script = deriv_to_script(root)
    return check_proof(script, goal)
