"""Every axiom schema as a goal-transforming inference rule with a
machine-checked side condition.

Applying an instance to a goal yields its premise subgoals (empty for
zero-premise axiom leaves).  `check_side_conditions` produces the full
report without transforming; `apply_rule` succeeds iff it passes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import BclError, ShapeMismatch, SideConditionViolation, SortMismatch
from .goals import Goal
from .rewrite import eq_modulo, is_ite, norm_term, xor_flatten
from .terms import (
    EQ, FALSE_T, GEN, HASH, INIT, ITE, PI_O, PI_S, TRUE_T, ZERO_T,
    App, Name, Term, free_names, hashed_arguments, key_only_in_key_position,
    mk_term, name, replace_at, subterm_at,
)


class RuleKind(Enum):
    REFL = "refl"
    SYM = "sym"
    TRANS = "trans"
    DUP = "dup"
    CONGR = "congr"
    PERM = "perm"
    FA = "fa"
    IFTHEN = "ifthen"
    CS = "cs"
    INDEP = "indep"
    EQINDEP = "eqindep"
    FRESHNONCE = "freshnonce"
    CR = "cr"
    PRF = "prf"
    PRNG = "prng"
    PRNG_FS = "prng_fs"
    COMBINE_INJ_L = "combineinjl"
    COMBINE_INJ_R = "combineinjr"
    ABSURD = "absurd"


# Rule kinds that close a goal without premises.
LEAF_KINDS = frozenset({
    RuleKind.REFL, RuleKind.CR, RuleKind.PRF, RuleKind.PRNG, RuleKind.PRNG_FS,
    RuleKind.ABSURD,
})


@dataclass(frozen=True)
class RuleInstance:
    kind: RuleKind
    pos: int | None = None
    positions: tuple[int, ...] | None = None       # CS: synchronized split positions
    z: tuple[Term, ...] | None = None              # CS: dummy branch terms
    keep: int | None = None                        # Dup
    drop: int | None = None                        # Dup
    order: tuple[int, ...] | None = None           # Perm
    witness: tuple[Term, ...] | None = None        # Trans
    to_goal: Goal | None = None                    # Congr / CombineInj
    side: str | None = None                        # IfThen: "left" | "right"
    path: tuple[int, ...] | None = None            # IfThen: path to the conditional
    subpath: tuple[int, ...] | None = None         # IfThen: occurrence in the then-branch
    key: str | None = None                         # CR / PRF
    fresh: str | None = None                       # PRF
    name_left: str | None = None                   # Indep
    name_right: str | None = None                  # Indep
    seed: str | None = None                        # PRNG / PRNG_FS


@dataclass
class SideConditionReport:
    passed: bool = True
    violations: list[tuple[str, Term | None]] = field(default_factory=list)

    def fail(self, desc: str, subterm: Term | None = None) -> None:
        self.passed = False
        self.violations.append((desc, subterm))


def apply_rule(inst: RuleInstance, goal: Goal) -> list[Goal]:
    subgoals, report = _analyze(inst, goal)
    if not report.passed:
        raise SideConditionViolation(report)
    assert subgoals is not None
    return subgoals


def check_side_conditions(inst: RuleInstance, goal: Goal) -> SideConditionReport:
    try:
        _, report = _analyze(inst, goal)
    except BclError as e:
        report = SideConditionReport()
        report.fail(str(e))
    return report


def _analyze(inst: RuleInstance, goal: Goal) -> tuple[list[Goal] | None, SideConditionReport]:
    report = SideConditionReport()
    try:
        subgoals = _HANDLERS[inst.kind](inst, goal, report)
    except (ShapeMismatch, SortMismatch) as e:
        report.fail(f"{inst.kind.value}: {e}")
        subgoals = None
    if not report.passed:
        return None, report
    return subgoals if subgoals is not None else [], report


def _check_pos(goal: Goal, i: int | None) -> int:
    if i is None or not (0 <= i < len(goal)):
        raise ShapeMismatch(f"position {i} out of range for a {len(goal)}-element goal")
    return i


# ---------------------------------------------------------------------------
# Structural rules

def _refl(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    for i, (l, r) in enumerate(zip(goal.left, goal.right)):
        if norm_term(l) is not norm_term(r):
            report.fail(f"element {i} differs after normalization", l)
    return []


def _sym(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    return [Goal(goal.right, goal.left)]


def _trans(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    if inst.witness is None:
        raise ShapeMismatch("trans needs a witness frame")
    w = tuple(inst.witness)
    if len(w) != len(goal):
        report.fail(f"witness has {len(w)} elements, goal has {len(goal)}")
        return None
    for i, (t, l) in enumerate(zip(w, goal.left)):
        if not t.ground:
            report.fail(f"witness element {i} is not ground", t)
        elif t.sort is not l.sort:
            report.fail(f"witness element {i} has sort {t.sort}, expected {l.sort}", t)
    if not report.passed:
        return None
    return [Goal(goal.left, w), Goal(w, goal.right)]


def _dup(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    k = _check_pos(goal, inst.keep)
    d = _check_pos(goal, inst.drop)
    if k == d:
        raise ShapeMismatch("dup positions must differ")
    if not eq_modulo(goal.left[k], goal.left[d]):
        report.fail(f"left elements {k} and {d} are not equal", goal.left[d])
    if not eq_modulo(goal.right[k], goal.right[d]):
        report.fail(f"right elements {k} and {d} are not equal", goal.right[d])
    if not report.passed:
        return None
    return [goal.drop(d)]


def _perm(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    if inst.order is None:
        raise ShapeMismatch("perm needs an order")
    order = inst.order
    if sorted(order) != list(range(len(goal))):
        report.fail("order is not a permutation of the goal positions")
        return None
    return [Goal(tuple(goal.left[j] for j in order), tuple(goal.right[j] for j in order))]


def _fa(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    i = _check_pos(goal, inst.pos)
    l, r = goal.left[i], goal.right[i]
    if not (isinstance(l, App) and isinstance(r, App)):
        report.fail(f"element {i} is not a function application on both sides", l)
        return None
    if l.sym != r.sym:
        report.fail(f"element {i} heads differ: {l.sym.name}/{l.sym.arity} vs {r.sym.name}/{r.sym.arity}")
        return None
    return [goal.replace(i, list(l.args), list(r.args))]


def _congr(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    to = inst.to_goal
    if to is None:
        raise ShapeMismatch("congr needs a target goal")
    if len(to) != len(goal):
        report.fail(f"target has {len(to)} elements, goal has {len(goal)}")
        return None
    for i in range(len(goal)):
        for side, old, new in (("left", goal.left[i], to.left[i]), ("right", goal.right[i], to.right[i])):
            try:
                ok = eq_modulo(old, new)
            except SortMismatch:
                ok = False
            if not ok:
                report.fail(f"{side} element {i} is not equal to the declared term", new)
    if not report.passed:
        return None
    return [to]


def _ifthen(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    i = _check_pos(goal, inst.pos)
    side = inst.side or "left"
    if side not in ("left", "right"):
        raise ShapeMismatch(f"bad side {side!r}")
    elems = goal.left if side == "left" else goal.right
    elem = elems[i]
    node = subterm_at(elem, inst.path or ())
    if not is_ite(node):
        report.fail("no conditional at the given path", node)
        return None
    guard, then_b, else_b = node.args
    if not (isinstance(guard, App) and guard.sym is EQ):
        report.fail("conditional guard is not an equality test", guard)
        return None
    x, y = guard.args
    if inst.subpath is None:
        raise ShapeMismatch("ifthen needs the occurrence path inside the then-branch")
    target = subterm_at(then_b, inst.subpath)
    if target is x:
        replacement = y
    elif target is y:
        replacement = x
    else:
        report.fail("then-branch occurrence is neither side of the guard equality", target)
        return None
    new_then = replace_at(then_b, inst.subpath, replacement)
    new_elem = replace_at(elem, inst.path or (), mk_term(ITE, (guard, new_then, else_b)))
    if side == "left":
        return [goal.replace(i, [new_elem], [goal.right[i]])]
    return [goal.replace(i, [goal.left[i]], [new_elem])]


def _cs(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    if not inst.positions:
        raise ShapeMismatch("cs needs at least one position")
    positions = list(inst.positions)
    if positions != sorted(set(positions)):
        raise ShapeMismatch("cs positions must be strictly increasing")
    for p in positions:
        _check_pos(goal, p)
    zs = list(inst.z) if inst.z is not None else [ZERO_T] * len(positions)
    if len(zs) != len(positions):
        raise ShapeMismatch("cs needs one dummy term per position")
    lg, rg = None, None
    for p in positions:
        l, r = goal.left[p], goal.right[p]
        if not (is_ite(l) and is_ite(r)):
            report.fail(f"element {p} is not a conditional on both sides", l)
            return None
        if lg is None:
            lg, rg = l.args[0], r.args[0]
        else:
            if not eq_modulo(l.args[0], lg):
                report.fail(f"left guard at {p} differs from the split guard", l.args[0])
            if not eq_modulo(r.args[0], rg):
                report.fail(f"right guard at {p} differs from the split guard", r.args[0])
    for z in zs:
        if not z.ground:
            report.fail("cs dummy term is not ground", z)
    if not report.passed:
        return None

    def build(branch: str) -> Goal:
        newl: list[Term] = []
        newr: list[Term] = []
        for i in range(len(goal)):
            if i == positions[0]:
                newl.append(lg)
                newr.append(rg)
            if i in positions:
                z = zs[positions.index(i)]
                l, r = goal.left[i], goal.right[i]
                if branch == "then":
                    newl.append(mk_term(ITE, (l.args[0], l.args[1], z)))
                    newr.append(mk_term(ITE, (r.args[0], r.args[1], z)))
                else:
                    newl.append(mk_term(ITE, (l.args[0], z, l.args[2])))
                    newr.append(mk_term(ITE, (r.args[0], z, r.args[2])))
            else:
                newl.append(goal.left[i])
                newr.append(goal.right[i])
        return Goal(tuple(newl), tuple(newr))

    return [build("then"), build("else")]


# ---------------------------------------------------------------------------
# Freshness rules

def _rest_names(elems: tuple[Term, ...], skip: int) -> frozenset[str]:
    out: set[str] = set()
    for j, t in enumerate(elems):
        if j != skip:
            out |= free_names(t)
    return frozenset(out)


def _freshnonce(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    i = _check_pos(goal, inst.pos)
    l, r = goal.left[i], goal.right[i]
    if not isinstance(l, Name):
        report.fail(f"left element {i} is not a name", l)
    if not isinstance(r, Name):
        report.fail(f"right element {i} is not a name", r)
    if not report.passed:
        return None
    if l.ident in _rest_names(goal.left, i):
        report.fail(f"name {l.ident} occurs elsewhere on the left", l)
    if r.ident in _rest_names(goal.right, i):
        report.fail(f"name {r.ident} occurs elsewhere on the right", r)
    if not report.passed:
        return None
    return [goal.drop(i)]


def _split_xor(elem: Term, ident: str) -> tuple[list[Term], bool]:
    """Split elem (viewed modulo xor unit) into (partner args, found)."""
    spine = xor_flatten(elem)
    hits = [t for t in spine if isinstance(t, Name) and t.ident == ident]
    if len(hits) != 1:
        return [], False
    rest = [t for t in spine if not (isinstance(t, Name) and t.ident == ident)]
    return rest, True


def _indep(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    i = _check_pos(goal, inst.pos)
    nl = inst.name_left
    nr = inst.name_right or nl
    if nl is None:
        raise ShapeMismatch("indep needs the fresh-name identifier")
    restl, okl = _split_xor(goal.left[i], nl)
    restr, okr = _split_xor(goal.right[i], nr)
    if not okl:
        report.fail(f"left element {i} is not of the form x (+) {nl}", goal.left[i])
    if not okr:
        report.fail(f"right element {i} is not of the form y (+) {nr}", goal.right[i])
    if not report.passed:
        return None
    if any(nl in free_names(t) for t in restl):
        report.fail(f"name {nl} occurs in its xor partner on the left")
    if any(nr in free_names(t) for t in restr):
        report.fail(f"name {nr} occurs in its xor partner on the right")
    if nl in _rest_names(goal.left, i):
        report.fail(f"name {nl} occurs elsewhere on the left")
    if nr in _rest_names(goal.right, i):
        report.fail(f"name {nr} occurs elsewhere on the right")
    if not report.passed:
        return None
    return [goal.drop(i)]


def _eqindep(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    from .rewrite import derive_false_equality

    i = _check_pos(goal, inst.pos)
    for side, elem in (("left", goal.left[i]), ("right", goal.right[i])):
        if not (isinstance(elem, App) and elem.sym is EQ):
            report.fail(f"{side} element {i} is not an equality test", elem)
        elif not derive_false_equality(elem):
            report.fail(f"{side} element {i}: the name occurs in the compared term", elem)
    if not report.passed:
        return None
    return [goal.replace(i, [FALSE_T], [FALSE_T])]


# ---------------------------------------------------------------------------
# Cryptographic axiom leaves

def _context_equal(goal: Goal, skip: int, report: SideConditionReport) -> None:
    for j in range(len(goal)):
        if j == skip:
            continue
        try:
            ok = eq_modulo(goal.left[j], goal.right[j])
        except SortMismatch:
            ok = False
        if not ok:
            report.fail(f"context element {j} differs between the two sides", goal.left[j])


def _cr(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    i = _check_pos(goal, inst.pos)
    if inst.key is None:
        raise ShapeMismatch("cr needs the key identifier")
    key = inst.key
    l, r = goal.left[i], goal.right[i]
    if r is not FALSE_T:
        report.fail(f"right element {i} must be false", r)
    ok_shape = (
        is_ite(l)
        and isinstance(l.args[0], App) and l.args[0].sym is EQ
        and l.args[1] is FALSE_T
        and isinstance(l.args[2], App) and l.args[2].sym is EQ
    )
    t = t2 = None
    if ok_shape:
        t, t2 = l.args[0].args
        h1, h2 = l.args[2].args
        for h, arg in ((h1, t), (h2, t2)):
            if not (
                isinstance(h, App) and h.sym is HASH
                and h.args[0] is arg
                and isinstance(h.args[1], Name) and h.args[1].ident == key
            ):
                ok_shape = False
    if not ok_shape:
        report.fail(
            f"element {i} does not match if EQ(t, t') then false else EQ(hash(t, {key}), hash(t', {key}))",
            l,
        )
        return None
    _context_equal(goal, i, report)
    scan = [goal.left[j] for j in range(len(goal)) if j != i]
    scan += [goal.right[j] for j in range(len(goal)) if j != i]
    scan += [t, t2]
    if not key_only_in_key_position(key, scan):
        report.fail(f"key {key} occurs outside hash key position", l)
    if not report.passed:
        return None
    return []


def _disjuncts(c: Term) -> list[Term]:
    """Flatten the nested-ite encoding of a disjunction (b or c = if b then
    true else c); a plain boolean term is its own single disjunct."""
    if c is FALSE_T:
        return []
    if is_ite(c) and c.args[1] is TRUE_T:
        return [c.args[0]] + _disjuncts(c.args[2])
    return [c]


def _guard_ladder(elem: Term) -> tuple[list[Term], Term]:
    """Peel if-guards with a zero then-branch; return (disjuncts, core)."""
    guards: list[Term] = []
    cur = elem
    while is_ite(cur) and cur.args[1] is ZERO_T:
        guards.extend(_disjuncts(cur.args[0]))
        cur = cur.args[2]
    return guards, cur


def _prf(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    i = _check_pos(goal, inst.pos)
    if inst.key is None or inst.fresh is None:
        raise ShapeMismatch("prf needs key and fresh-name identifiers")
    key, fresh = inst.key, inst.fresh
    guards_l, core_l = _guard_ladder(goal.left[i])
    guards_r, core_r = _guard_ladder(goal.right[i])
    if not (
        isinstance(core_l, App) and core_l.sym is HASH
        and isinstance(core_l.args[1], Name) and core_l.args[1].ident == key
    ):
        report.fail(f"left element {i} core is not hash(t, {key})", core_l)
        return None
    if not (isinstance(core_r, Name) and core_r.ident == fresh):
        report.fail(f"right element {i} core is not the name {fresh}", core_r)
        return None
    t = core_l.args[0]
    if len(guards_l) != len(guards_r):
        report.fail(f"guard ladders have different lengths ({len(guards_l)} vs {len(guards_r)})")
        return None
    for gl, gr in zip(guards_l, guards_r):
        if not eq_modulo(gl, gr):
            report.fail("guard ladders differ between the two sides", gl)
    _context_equal(goal, i, report)
    if not report.passed:
        return None
    others = [goal.left[j] for j in range(len(goal)) if j != i]
    try:
        hashed = hashed_arguments(key, others + [t] + guards_l)
    except BclError as e:
        report.fail(f"hash occurrence check failed: {e}")
        return None
    # Every hashed argument must be covered by a collision disjunct
    # EQ(t_i, t) (either argument order); extra identical-on-both-sides
    # disjuncts are harmless and accepted.
    for ti in hashed:
        if not any(_covers(g, ti, t) for g in guards_l):
            report.fail(f"no collision test for hashed message {ti!r}", ti)
    scope = others + [goal.right[j] for j in range(len(goal)) if j != i]
    scope += [t] + guards_l
    for u in scope:
        if fresh in free_names(u):
            report.fail(f"fresh name {fresh} occurs in the instance context", u)
            break
    if not report.passed:
        return None
    return []


def _covers(guard: Term, ti: Term, t: Term) -> bool:
    if not (isinstance(guard, App) and guard.sym is EQ):
        return False
    a, b = guard.args
    try:
        return (eq_modulo(a, ti) and eq_modulo(b, t)) or (eq_modulo(a, t) and eq_modulo(b, ti))
    except SortMismatch:
        return False


def _prng_chain(seed: str, count: int) -> list[Term]:
    chain = [mk_term(GEN, (mk_term(INIT, (name(seed),)),))]
    for _ in range(count - 1):
        chain.append(mk_term(GEN, (mk_term(PI_S, (chain[-1],)),)))
    return chain


def _check_prng_outputs(goal: Goal, count: int, seed: str, report: SideConditionReport) -> None:
    chain = _prng_chain(seed, count)
    idents: set[str] = set()
    for j in range(count):
        l, r = goal.left[j], goal.right[j]
        if not (isinstance(l, App) and l.sym is PI_O and l.args[0] is chain[j]):
            report.fail(f"left element {j} is not the output of chain state {j}", l)
        if not isinstance(r, Name):
            report.fail(f"right element {j} is not a name", r)
        else:
            if r.ident == seed or r.ident in idents:
                report.fail(f"right name {r.ident} is not fresh and distinct", r)
            idents.add(r.ident)


def _prng(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    if inst.seed is None:
        raise ShapeMismatch("prng needs the seed identifier")
    if len(goal) == 0:
        report.fail("empty goal")
        return None
    _check_prng_outputs(goal, len(goal), inst.seed, report)
    if not report.passed:
        return None
    return []


def _prng_fs(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    if inst.seed is None:
        raise ShapeMismatch("prng_fs needs the seed identifier")
    if len(goal) < 2:
        report.fail("forward-secrecy goal needs outputs plus the leaked state")
        return None
    count = len(goal) - 1
    _check_prng_outputs(goal, count, inst.seed, report)
    chain = _prng_chain(inst.seed, count)
    leaked = mk_term(PI_S, (chain[-1],))
    if goal.left[-1] is not leaked or goal.right[-1] is not leaked:
        report.fail("last element must be the leaked internal state on both sides", goal.left[-1])
    if not report.passed:
        return None
    return []


def _absurd(inst: RuleInstance, goal: Goal, report: SideConditionReport):
    for l, r in zip(goal.left, goal.right):
        nl, nr = norm_term(l), norm_term(r)
        if {nl, nr} == {TRUE_T, FALSE_T}:
            return []
    report.fail("no element normalizes to false on one side and true on the other")
    return None


_HANDLERS = {
    RuleKind.REFL: _refl,
    RuleKind.SYM: _sym,
    RuleKind.TRANS: _trans,
    RuleKind.DUP: _dup,
    RuleKind.CONGR: _congr,
    RuleKind.PERM: _perm,
    RuleKind.FA: _fa,
    RuleKind.IFTHEN: _ifthen,
    RuleKind.CS: _cs,
    RuleKind.INDEP: _indep,
    RuleKind.EQINDEP: _eqindep,
    RuleKind.FRESHNONCE: _freshnonce,
    RuleKind.CR: _cr,
    RuleKind.PRF: _prf,
    RuleKind.PRNG: _prng,
    RuleKind.PRNG_FS: _prng_fs,
    RuleKind.COMBINE_INJ_L: _congr,
    RuleKind.COMBINE_INJ_R: _congr,
    RuleKind.ABSURD: _absurd,
}


def pretty_rule(inst: RuleInstance) -> str:
    """Human-readable rendering using the conventional rule names."""
    k = inst.kind
    if k is RuleKind.TRANS:
        w = ", ".join(repr(t) for t in (inst.witness or ()))
        return f"Trans via ({w})"
    if k is RuleKind.FA:
        return f"FA(@{inst.pos})"
    if k is RuleKind.PRF:
        return f"PRF_n({inst.key}, fresh {inst.fresh})"
    if k is RuleKind.CR:
        return f"CR({inst.key})"
    if k is RuleKind.DUP:
        return f"Dup(keep {inst.keep}, drop {inst.drop})"
    if k is RuleKind.PERM:
        return f"Perm{list(inst.order or ())}"
    if k is RuleKind.CS:
        return f"CS(@{list(inst.positions or ())})"
    if k is RuleKind.INDEP:
        n = inst.name_left if inst.name_right in (None, inst.name_left) else f"{inst.name_left}/{inst.name_right}"
        return f"Indep({n} @{inst.pos})"
    if k is RuleKind.FRESHNONCE:
        return f"FreshNonce(@{inst.pos})"
    if k is RuleKind.PRNG:
        return f"PRNG_n(seed {inst.seed})"
    if k is RuleKind.PRNG_FS:
        return f"PRNG-FS(seed {inst.seed})"
    if k is RuleKind.ABSURD:
        return "Absurd (non-paper plumbing)"
    names = {
        RuleKind.REFL: "Refl", RuleKind.SYM: "Sym", RuleKind.CONGR: "Congr",
        RuleKind.IFTHEN: "IfThen", RuleKind.EQINDEP: "EqIndep",
        RuleKind.COMBINE_INJ_L: "CombineInjL", RuleKind.COMBINE_INJ_R: "CombineInjR",
    }
    return names.get(k, k.value)
