"""Construction of the bundled proof scripts for the two patched protocols,
plus the mutation corpus used to exercise the checker's rejection paths.

The builders read the concrete goals produced by the trace compiler and
assemble the derivations mechanically.  The structured skeletons mirror the
published derivations (transitivity through a fresh intermediate on the tag
side; a case split over the two collision guards of the final session), and
a generic reduction engine grinds residual subgoals down to reflexivity:

  * duplicate elements are removed,
  * elements that are zero modulo the equational theory are rewritten to 0,
  * keyed-hash element pairs are replaced by guarded fresh names through two
    transitivity steps (the pseudo-randomness axiom on each side),
  * guarded-equality rewriting unblocks replay-shaped collision tests,
  * everything else is unfolded pointwise.
"""

from __future__ import annotations

from importlib import resources

from .builder import Deriv
from .errors import BclError
from .goals import Goal
from .protocol import ProtocolSpec, TraceSpec, gen_fixed_trace_goal, parse_spec
from .rewrite import norm_term
from .rules import RuleInstance, RuleKind, _covers, _guard_ladder
from .script import ProofScript, deriv_to_script
from .terms import (
    EQ, FALSE_T, HASH, ITE, PAIR, XOR, ZERO_T,
    App, Name, Term, free_names, hashed_arguments, mk_term, name, subterm_at,
)


def load_bundled_spec(spec_name: str) -> ProtocolSpec:
    text = resources.files("bclogic.assets").joinpath(f"{spec_name}.bcspec").read_text()
    return parse_spec(text)


KCLP_TRACE = TraceSpec(("ReaderInit", "TagMsg_1", "ReaderInit", "TagMsg_1"), 0)
LAKP_TRACE = TraceSpec(
    ("ReaderInit", "TagMsg_1", "ReaderMsg", "ReaderInit", "TagMsg_1", "ReaderMsg"), 3,
)


class NameAlloc:
    """Fresh identifiers for witness names, disjoint from a goal's names."""

    def __init__(self, goal: Goal):
        self.used: set[str] = set()
        for t in goal.left + goal.right:
            self.used |= free_names(t)
        self.counter = 0

    def fresh(self) -> str:
        while True:
            self.counter += 1
            ident = "nu" if self.counter == 1 else f"nu{self.counter}"
            if ident not in self.used:
                self.used.add(ident)
                return ident


# ---------------------------------------------------------------------------
# Shared helpers

def _drop_guess_tail(d: Deriv) -> Deriv:
    """Unfold the final guessing element and remove the duplicated frame."""
    m = len(d.goal) - 1
    cur = d.fa(m)
    for i in range(m):
        cur = cur.dup(keep=i, drop=m)
    return cur


def _ladder(guards: list[Term], core: Term) -> Term:
    out = core
    for g in reversed(guards):
        out = mk_term(ITE, (g, ZERO_T, out))
    return out


def _hash_core(t: Term) -> App | None:
    _, core = _guard_ladder(t)
    if isinstance(core, App) and core.sym is HASH and isinstance(core.args[1], Name):
        return core
    return None


def _full_guards(key: str, context: list[Term], elem: Term) -> tuple[list[Term], list[Term], Term] | None:
    """Collision guards required to replace the keyed hash at the core of
    `elem` by a fresh name: the element's own (inherited) guards plus one
    added equality test per hashed message not yet covered.  Added guards
    must be refutable (false modulo the fresh-name disequalities), otherwise
    reshaping the element would not be an equality and None is returned.
    Returns (added, inherited, core)."""
    guards, core = _guard_ladder(elem)
    msg = core.args[0]
    required = hashed_arguments(key, context + [msg] + guards)
    missing = [m for m in required if not any(_covers(g, m, msg) for g in guards)]
    added = []
    for m in missing:
        g = mk_term(EQ, (m, msg))
        if norm_term(g, with_eqindep=True) is not FALSE_T:
            return None
        added.append(g)
    return added, guards, core


def _kill_hash_pair(d: Deriv, pos: int, alloc: NameAlloc) -> Deriv | None:
    """Neutralize an element whose (possibly guarded) core is a keyed hash on
    both sides: replace it by a guarded fresh name through two transitivity
    steps, closing each side with the pseudo-randomness axiom.  The witness
    ladders keep only the guards inherited from the element (mirrored on the
    two sides); the side-specific added collision tests live inside the
    same-side reshaping steps.  Returns the node holding the residual goal,
    or None when a required collision guard is not refutable."""
    goal = d.goal
    ctx_l = [goal.left[j] for j in range(len(goal)) if j != pos]
    ctx_r = [goal.right[j] for j in range(len(goal)) if j != pos]
    core_l = _hash_core(goal.left[pos])
    core_r = _hash_core(goal.right[pos])
    assert core_l is not None and core_r is not None
    key_l, key_r = core_l.args[1].ident, core_r.args[1].ident
    full_l = _full_guards(key_l, ctx_l, goal.left[pos])
    full_r = _full_guards(key_r, ctx_r, goal.right[pos])
    if full_l is None or full_r is None:
        return None
    added_l, inh_l, _ = full_l
    added_r, inh_r, _ = full_r
    nu = alloc.fresh()
    nu_term = name(nu)

    w1 = list(goal.left)
    w1[pos] = _ladder(inh_l, nu_term)
    sub1, rest = d.trans(w1)
    full_left = list(goal.left)
    full_left[pos] = _ladder(added_l + inh_l, core_l)
    full_wit = list(w1)
    full_wit[pos] = _ladder(added_l + inh_l, nu_term)
    sub1 = sub1.congr(Goal(tuple(full_left), tuple(full_wit)))
    sub1.prf(pos, key_l, nu)

    w2 = list(goal.right)
    w2[pos] = _ladder(inh_r, nu_term)
    mid, sub2 = rest.trans(w2)
    sub2 = sub2.sym()
    full_right = list(goal.right)
    full_right[pos] = _ladder(added_r + inh_r, core_r)
    full_wit2 = list(w2)
    full_wit2[pos] = _ladder(added_r + inh_r, nu_term)
    sub2 = sub2.congr(Goal(tuple(full_right), tuple(full_wit2)))
    sub2.prf(pos, key_r, nu)
    return mid


def _ite_eq_nodes(t: Term, path: tuple[int, ...] = ()) -> list[tuple[tuple[int, ...], Term]]:
    out = []
    if isinstance(t, App):
        if t.sym is ITE and isinstance(t.args[0], App) and t.args[0].sym is EQ:
            out.append((path, t))
        for i, a in enumerate(t.args):
            out.extend(_ite_eq_nodes(a, path + (i,)))
    return out


def _occurrences(t: Term, target: Term, path: tuple[int, ...] = ()) -> list[tuple[int, ...]]:
    if t is target:
        return [path]
    out = []
    if isinstance(t, App):
        for i, a in enumerate(t.args):
            out.extend(_occurrences(a, target, path + (i,)))
    return out


def _ifthen_candidates(elem: Term):
    """All (path, subpath, rewritten-element) triples reachable by one
    guarded-equality rewrite inside a then-branch."""
    from .rules import RuleInstance as _RI  # local alias, no cycle

    for path, node in _ite_eq_nodes(elem):
        guard, then_b, _ = node.args
        x, y = guard.args
        for target, repl in ((x, y), (y, x)):
            for sub in _occurrences(then_b, target):
                new_then = _replace(then_b, sub, repl)
                try:
                    new_node = mk_term(ITE, (guard, new_then, node.args[2]))
                    new_elem = _replace(elem, path, new_node)
                except BclError:
                    continue
                yield path, sub, new_elem


def _replace(t: Term, path: tuple[int, ...], new: Term) -> Term:
    from .terms import replace_at

    return replace_at(t, path, new)


_REDUCE_CAP = 2000


def _reduce(d: Deriv, alloc: NameAlloc) -> None:
    """Grind a residual goal down to reflexivity."""
    for _ in range(_REDUCE_CAP):
        goal = d.goal
        n = len(goal)
        if all(norm_term(l) is norm_term(r) for l, r in zip(goal.left, goal.right)):
            d.refl()
            return
        nxt = _reduce_step(d, alloc)
        if nxt is None:
            raise BclError(f"reduction is stuck on goal {goal}")
        d = nxt
    raise BclError("reduction did not converge")


def _reduce_step(d: Deriv, alloc: NameAlloc) -> Deriv | None:
    goal = d.goal
    n = len(goal)
    # Collapse elements on which the two sides agree modulo the fresh-name
    # disequalities (this covers guard ladders dying to 0 and refutable
    # guards wrapped around an agreeing core).
    collapse: dict[int, Term] = {}
    for i in range(n):
        l, r = goal.left[i], goal.right[i]
        if norm_term(l) is norm_term(r):
            continue
        nl = norm_term(l, with_eqindep=True)
        if nl is norm_term(r, with_eqindep=True):
            collapse[i] = nl
    if collapse:
        to = Goal(
            tuple(collapse.get(i, t) for i, t in enumerate(goal.left)),
            tuple(collapse.get(i, t) for i, t in enumerate(goal.right)),
        )
        return d.congr(to)
    dup = _find_dup(goal)
    if dup is not None:
        return d.dup(keep=dup[0], drop=dup[1])
    diffs = [
        i for i in range(n)
        if norm_term(goal.left[i]) is not norm_term(goal.right[i])
    ]
    # Guarded hash cores are replaced by fresh names when their collision
    # guards are refutable.
    for i in diffs:
        if _hash_core(goal.left[i]) is not None and _hash_core(goal.right[i]) is not None:
            nxt = _kill_hash_pair(d, i, alloc)
            if nxt is not None:
                return nxt
    # Guarded-equality rewriting: accept a rewrite that collapses the
    # element to zero, turns it into a duplicate of another element, or
    # strictly reduces the number of distinct hashes in the goal (merging a
    # replay-shaped hash with the one it would collide with).
    before_hashes = set()
    for t in goal.left:
        before_hashes |= _hash_subterms(t)
    for i in diffs:
        for path, sub, new_left in _ifthen_candidates(goal.left[i]):
            collapses = norm_term(new_left, with_eqindep=True) is ZERO_T
            dups = any(
                j != i and norm_term(new_left) is norm_term(goal.left[j])
                for j in range(n)
            )
            after_hashes = _hash_subterms(new_left)
            for j in range(n):
                if j != i:
                    after_hashes |= _hash_subterms(goal.left[j])
            merges = len(after_hashes) < len(before_hashes)
            if not (collapses or dups or merges):
                continue
            step1 = d.ifthen(i, "left", path, sub)
            return step1.ifthen(i, "right", path, sub)
    # Pointwise unfolding of everything else.
    for i in diffs:
        l, r = goal.left[i], goal.right[i]
        if isinstance(l, App) and isinstance(r, App) and l.sym == r.sym and l.sym is not HASH:
            return d.fa(i)
    return None


def _hash_subterms(t: Term) -> set[Term]:
    from .terms import subterms

    return {s for s in subterms(t) if isinstance(s, App) and s.sym is HASH}


def _find_dup(goal: Goal) -> tuple[int, int] | None:
    n = len(goal)
    for j in range(n):
        for i in range(j):
            if (
                norm_term(goal.left[i]) is norm_term(goal.left[j])
                and norm_term(goal.right[i]) is norm_term(goal.right[j])
            ):
                return i, j
    return None


# ---------------------------------------------------------------------------
# Patched key-confirmation protocol: the inductive-step derivation at m=4

def build_kclp_goal(spec: ProtocolSpec, trace: TraceSpec = KCLP_TRACE) -> Goal:
    return gen_fixed_trace_goal(spec, trace)


def build_kclp_proof(spec: ProtocolSpec, trace: TraceSpec = KCLP_TRACE) -> tuple[Goal, ProofScript]:
    goal = build_kclp_goal(spec, trace)
    root = Deriv(goal)
    alloc = NameAlloc(goal)
    _prove_kclp_prefix(_drop_guess_tail(root), alloc)
    return goal, deriv_to_script(root, "kclp_step")


def _prove_kclp_prefix(d: Deriv, alloc: NameAlloc) -> None:
    """Peel the last element: a fresh reader challenge is dropped by the
    fresh-name axiom; a tag answer goes through the pair/xor unfolding, a
    fresh intermediate on the identity side, and the guarded hash steps
    (the left/right derivations of the inductive step)."""
    goal = d.goal
    if len(goal) == 0:
        d.refl()
        return
    k = len(goal) - 1
    elem = goal.left[k]
    assert isinstance(elem, App) and elem.sym is PAIR
    if isinstance(elem.args[1], Name):
        # Reader challenge <session counter, nonce>.
        cur = d.fa(k)
        cur = cur.fa(k)       # 0-ary session counter, same on both sides
        cur = cur.freshnonce(k)
        _prove_kclp_prefix(cur, alloc)
        return
    # Tag answer <id (+) hash(nt, key), nt (+) hash(g(frame), key)>.
    id_l, hash_l = _split_id_xor(goal.left[k].args[0])
    id_r, hash_r = _split_id_xor(goal.right[k].args[0])
    nt = hash_l.args[0]
    key_l, key_r = hash_l.args[1].ident, hash_r.args[1].ident
    nu = alloc.fresh()
    nu_term = name(nu)

    cur = d.fa(k)                      # split the pair
    order = list(range(len(cur.goal)))
    order[k], order[k + 1] = k + 1, k
    cur = cur.perm(order)              # move the id component last
    psi_l = list(cur.goal.left[:-1])
    psi_r = list(cur.goal.right[:-1])
    w1 = psi_l + [norm_term(mk_term(XOR, (id_l, nu_term)))]
    g1, g2 = cur.trans(w1)

    # Left derivation: id (+) hash(nt, key) against id (+) fresh.
    last = len(g1.goal) - 1
    g1 = g1.fa(last)                   # unfold both xors pointwise
    g1 = _drop_const_elem(g1, id_l)
    _guarded_prf(g1, key_l, nu)

    # Right derivation: move to the second identity, then its hash.
    w2 = psi_r + [norm_term(mk_term(XOR, (id_r, nu_term)))]
    g2a, g2b = g2.trans(w2)
    rec = g2a.indep(len(g2a.goal) - 1, nu)
    _prove_psi(rec, alloc)
    g2b = g2b.fa(len(g2b.goal) - 1)
    g2b = _drop_const_elem(g2b, id_r)
    g2b = g2b.sym()
    _guarded_prf(g2b, key_r, nu)


def _split_id_xor(t: Term) -> tuple[Term, Term]:
    """Return (identity constant, keyed hash) from an id (+) hash component."""
    assert isinstance(t, App) and t.sym is XOR
    a, b = t.args
    if isinstance(a, App) and a.sym is HASH:
        return b, a
    return a, b


def _drop_const_elem(d: Deriv, const: Term) -> Deriv:
    goal = d.goal
    for i in range(len(goal)):
        if goal.left[i] is const and goal.right[i] is const:
            return d.fa(i)
    raise BclError("identity constant not found")


def _guarded_prf(d: Deriv, key: str, nu: str) -> None:
    """Close psi, hash(t, key) ~ psi, nu by introducing the collision-test
    ladder over the previously hashed messages, then the keyed-hash axiom."""
    goal = d.goal
    pos = len(goal) - 1
    ctx = list(goal.left[:pos])
    full = _full_guards(key, ctx, goal.left[pos])
    if full is None:
        raise BclError("collision guards not refutable in guarded hash step")
    added, inherited, core = full
    guards = added + inherited
    to = Goal(
        tuple(ctx) + (_ladder(guards, core),),
        tuple(goal.right[:pos]) + (_ladder(guards, goal.right[pos]),),
    )
    d = d.congr(to)
    d.prf(pos, key, nu)


def _prove_psi(d: Deriv, alloc: NameAlloc) -> None:
    """phi, nt (+) hash(g(phi), key) ~ tilded: independence through the
    shared fresh nonce, recursing on the prefix."""
    goal = d.goal
    k = len(goal) - 1
    nt = _xor_name(goal.left[k])
    nt_term = name(nt)
    w1 = list(goal.left[:k]) + [nt_term]
    a, b = d.trans(w1)
    a.indep(k, nt).refl()
    w2 = list(goal.right[:k]) + [nt_term]
    b1, b2 = b.trans(w2)
    rec = b1.indep(k, nt)
    _prove_kclp_prefix(rec, alloc)
    b2.sym().indep(k, nt).refl()


def _xor_name(t: Term) -> str:
    from .rewrite import xor_flatten

    for a in xor_flatten(t):
        if isinstance(a, Name):
            return a.ident
    raise BclError("no name in xor spine")


# ---------------------------------------------------------------------------
# Stateless challenge-response protocol: the six-step trace derivation

def build_lakp_goal(spec: ProtocolSpec, trace: TraceSpec = LAKP_TRACE) -> Goal:
    return gen_fixed_trace_goal(spec, trace)


def build_lakp_proof(spec: ProtocolSpec, trace: TraceSpec = LAKP_TRACE) -> tuple[Goal, ProofScript]:
    goal = build_lakp_goal(spec, trace)
    root = Deriv(goal)
    alloc = NameAlloc(goal)
    cur = _drop_guess_tail(root)

    # Unfold the final reader confirmation into guard hash, confirmation
    # hash and the adversarial input, deduplicating the re-exposed frame.
    t_pos = len(cur.goal) - 1
    cur = cur.fa(t_pos)                # conditional -> guard, confirm, 0
    cur = cur.fa(len(cur.goal) - 1)    # drop the 0 constant
    cur = cur.fa(t_pos)                # guard equality -> beta, p2(g(frame))
    cur = cur.fa(t_pos + 1)            # projection -> g(frame)
    cur = cur.fa(t_pos + 1)            # adversarial input -> frame copy
    for i in range(t_pos):
        cur = cur.dup(keep=i, drop=t_pos + 1)

    # Elements now: frame.., alpha (second tag answer), beta, gamma.
    # Introduce the two collision guards and split on them (four cases).
    goal7 = cur.goal
    n7 = len(goal7)
    alpha_pos, beta_pos, gamma_pos = n7 - 3, n7 - 2, n7 - 1
    e4_l, e5_l = _lakp_guards(goal7, "left")
    e4_r, e5_r = _lakp_guards(goal7, "right")

    def u_form(x: Term, e4: Term, e5: Term) -> Term:
        inner = mk_term(ITE, (e5, x, x))
        return mk_term(ITE, (e4, inner, inner))

    to = Goal(
        tuple(u_form(t, e4_l, e5_l) if i >= alpha_pos else t for i, t in enumerate(goal7.left)),
        tuple(u_form(t, e4_r, e5_r) if i >= alpha_pos else t for i, t in enumerate(goal7.right)),
    )
    cur = cur.congr(to)
    case_t, case_f = cur.cs([alpha_pos, beta_pos, gamma_pos])
    for case in (case_t, case_f):
        gcase = case.goal
        swapped = Goal(
            tuple(_swap_guard(t) for t in gcase.left),
            tuple(_swap_guard(t) for t in gcase.right),
        )
        inner = case.congr(swapped)
        m = len(inner.goal)
        sub_t, sub_f = inner.cs([m - 3, m - 2, m - 1])
        _reduce(sub_t, alloc)
        _reduce(sub_f, alloc)
    return goal, deriv_to_script(root, "lakp")


def _lakp_guards(goal: Goal, side: str) -> tuple[Term, Term]:
    """The two collision tests of the final session: the guard-hash input
    against the second tag answer's input (left-injectivity case) and
    against the confirmation input (right-injectivity case)."""
    elems = goal.left if side == "left" else goal.right
    beta = elems[-2]
    gamma = elems[-1]
    alpha_hash = elems[-3].args[1]
    t_in = beta.args[0]
    e4 = mk_term(EQ, (t_in, alpha_hash.args[0]))
    e5 = mk_term(EQ, (t_in, gamma.args[0]))
    return e4, e5


def _swap_guard(t: Term) -> Term:
    """Commute the two nested guards so the inner one is on top; both forms
    collapse to the same normal form, so the step is an equality."""
    if not (isinstance(t, App) and t.sym is ITE):
        return t
    e4, then_b, else_b = t.args
    if isinstance(then_b, App) and then_b.sym is ITE:
        e5, x, y = then_b.args
        return mk_term(ITE, (e5, mk_term(ITE, (e4, x, else_b)), mk_term(ITE, (e4, y, else_b))))
    if isinstance(else_b, App) and else_b.sym is ITE:
        e5, x, y = else_b.args
        return mk_term(ITE, (e5, mk_term(ITE, (e4, then_b, x)), mk_term(ITE, (e4, then_b, y))))
    return t
