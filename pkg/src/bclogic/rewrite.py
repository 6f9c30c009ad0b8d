"""Ground normalization modulo the generic equalities, pairing projections,
and the combination-function injectivity rules; backs the Congr rule.

The lifting rule f(.., if b then y else z, ..) = if b then f(..y..) else
f(..z..) is size-increasing and is exposed separately as `lift_if`, never
applied during normalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InvalidPosition, ShapeMismatch, SortMismatch
from .terms import (
    COMBINE, EQ, FALSE_T, HASH, ITE, PROJ1, PROJ2, PAIR, TRUE_T, XOR, ZERO_T,
    App, Name, Term, free_names, mk_term, order_key, replace_at, subterm_at,
)

_MAX_HEAD_STEPS = 100_000

TraceStep = tuple[str, Term, Term]


@dataclass
class NormalForm:
    term: Term
    trace: list[TraceStep] = field(default_factory=list)


def is_ite(t: Term) -> bool:
    return isinstance(t, App) and t.sym is ITE


def xor_flatten(t: Term) -> list[Term]:
    """Arguments of the xor spine of t (t itself if not an xor)."""
    if isinstance(t, App) and t.sym is XOR:
        return xor_flatten(t.args[0]) + xor_flatten(t.args[1])
    return [t]


def xor_rebuild(args: list[Term]) -> Term:
    if not args:
        return ZERO_T
    out = args[-1]
    for a in reversed(args[:-1]):
        out = mk_term(XOR, (a, out))
    return out


def _xor_canon(t: App) -> Term | None:
    args = xor_flatten(t)
    kept = [a for a in args if a is not ZERO_T]
    kept.sort(key=order_key)
    out: list[Term] = []
    for a in kept:
        if out and out[-1] is a:
            out.pop()  # x xor x = 0
        else:
            out.append(a)
    res = xor_rebuild(out)
    return None if res is t else res


def _distinct_consts(a: Term, b: Term) -> bool:
    return (
        isinstance(a, App) and isinstance(b, App)
        and a.sym.distinct and b.sym.distinct
        and a.sym.name != b.sym.name
    )


def derive_false_equality(t: Term) -> bool:
    """Freshness side condition of the fresh-name disequality: for EQ(n, x)
    (either argument a name), true iff the name does not occur in the other
    side, licensing a rewrite of the whole equality to false."""
    if not (isinstance(t, App) and t.sym is EQ):
        raise ShapeMismatch("expected an EQ application")
    a, b = t.args
    if isinstance(a, Name) and a.ident not in free_names(b):
        return True
    if isinstance(b, Name) and b.ident not in free_names(a):
        return True
    return False


class _Normalizer:
    def __init__(self, with_eqindep: bool, trace: list[TraceStep] | None):
        self.with_eqindep = with_eqindep
        self.trace = trace
        self.memo: dict[Term, Term] = {}
        self.steps = 0

    def log(self, rule: str, before: Term, after: Term) -> None:
        if self.trace is not None:
            self.trace.append((rule, before, after))

    def norm(self, t: Term) -> Term:
        r = self.memo.get(t)
        if r is not None:
            return r
        if isinstance(t, App) and t.args:
            t2 = mk_term(t.sym, [self.norm(a) for a in t.args])
        else:
            t2 = t
        r = self.head(t2)
        self.memo[t] = r
        if t2 is not t:
            self.memo[t2] = r
        return r

    def head(self, t: Term) -> Term:
        """Rewrite at the root until no rule applies; children are normal."""
        while True:
            self.steps += 1
            if self.steps > _MAX_HEAD_STEPS:
                raise RuntimeError("normalization did not terminate (fuel exhausted)")
            r = self.step(t)
            if r is None:
                return t
            t = r

    def step(self, t: Term) -> Term | None:
        if not isinstance(t, App):
            return None
        sym = t.sym
        if sym is EQ:
            a, b = t.args
            if a is b:
                self.log("eq-refl", t, TRUE_T)
                return TRUE_T
            if _distinct_consts(a, b):
                self.log("eq-distinct-consts", t, FALSE_T)
                return FALSE_T
            if isinstance(a, App) and a.sym is COMBINE and isinstance(b, App) and b.sym is COMBINE:
                u, v = a.args
                u2, v2 = b.args
                out = self.norm(
                    mk_term(ITE, (
                        mk_term(EQ, (u, u2)),
                        mk_term(ITE, (mk_term(EQ, (v, v2)), TRUE_T, FALSE_T)),
                        FALSE_T,
                    ))
                )
                self.log("combine-injectivity", t, out)
                return out
            if self.with_eqindep and derive_false_equality(t):
                self.log("EqIndep", t, FALSE_T)
                return FALSE_T
            return None
        if sym is ITE:
            b, x, y = t.args
            if b is TRUE_T:
                self.log("ite-true", t, x)
                return x
            if b is FALSE_T:
                self.log("ite-false", t, y)
                return y
            if x is y:
                self.log("ite-same", t, x)
                return x
            if is_ite(x) and x.args[0] is b:
                out = self.norm(mk_term(ITE, (b, x.args[1], y)))
                self.log("ite-absorb-then", t, out)
                return out
            if is_ite(y) and y.args[0] is b:
                out = self.norm(mk_term(ITE, (b, x, y.args[2])))
                self.log("ite-absorb-else", t, out)
                return out
            # Condition-ordering commutations; applied only when the inner
            # condition is strictly smaller, which makes them terminating.
            if is_ite(x):
                a, x1, y1 = x.args
                if order_key(a) < order_key(b):
                    out = self.norm(mk_term(ITE, (
                        a, mk_term(ITE, (b, x1, y)), mk_term(ITE, (b, y1, y)),
                    )))
                    self.log("ite-commute-then", t, out)
                    return out
            if is_ite(y):
                a, y1, z1 = y.args
                if order_key(a) < order_key(b):
                    out = self.norm(mk_term(ITE, (
                        a, mk_term(ITE, (b, x, y1)), mk_term(ITE, (b, x, z1)),
                    )))
                    self.log("ite-commute-else", t, out)
                    return out
            return None
        if sym is PROJ1 or sym is PROJ2:
            (arg,) = t.args
            if isinstance(arg, App) and arg.sym is PAIR:
                out = arg.args[0 if sym is PROJ1 else 1]
                self.log("proj-pair", t, out)
                return out
            return None
        if sym is XOR:
            out = _xor_canon(t)
            if out is not None:
                self.log("xor-canon", t, out)
            return out
        return None


def normalize(t: Term, *, with_eqindep: bool = False, want_trace: bool = False) -> NormalForm:
    """Normal form under the oriented rule set; total on ground terms."""
    trace: list[TraceStep] | None = [] if want_trace else None
    nz = _Normalizer(with_eqindep, trace)
    out = nz.norm(t)
    return NormalForm(out, trace or [])


_plain_memo: dict[Term, Term] = {}
_eqindep_memo: dict[Term, Term] = {}


def norm_term(t: Term, *, with_eqindep: bool = False) -> Term:
    """Memoized normal form (shared across calls; terms are interned)."""
    memo = _eqindep_memo if with_eqindep else _plain_memo
    r = memo.get(t)
    if r is None:
        nz = _Normalizer(with_eqindep, None)
        nz.memo = memo
        r = nz.norm(t)
    return r


def eq_modulo(t1: Term, t2: Term) -> bool:
    """Equality via normalization; fresh-name disequalities are consulted
    lazily when plain normal forms differ."""
    if not (t1.sort <= t2.sort or t2.sort <= t1.sort):
        raise SortMismatch(f"incomparable sorts {t1.sort} and {t2.sort}")
    if norm_term(t1) is norm_term(t2):
        return True
    return norm_term(t1, with_eqindep=True) is norm_term(t2, with_eqindep=True)


def eq_modulo_trace(t1: Term, t2: Term) -> NormalForm | None:
    """Like eq_modulo but returns the traced normal form of t1 on success."""
    if eq_modulo(t1, t2):
        return normalize(t1, with_eqindep=True, want_trace=True)
    return None


def lift_if(t: Term, path: tuple[int, ...]) -> Term:
    """Pull a conditional at `path` one level out of its parent application."""
    if not path:
        raise InvalidPosition("conditional must sit under a function application")
    inner = subterm_at(t, path)
    if not is_ite(inner):
        raise InvalidPosition("no conditional at the given position")
    parent_path = path[:-1]
    parent = subterm_at(t, parent_path)
    if not isinstance(parent, App):
        raise InvalidPosition("parent is not a function application")
    i = path[-1]
    b, x, y = inner.args
    then_args = list(parent.args)
    then_args[i] = x
    else_args = list(parent.args)
    else_args[i] = y
    lifted = mk_term(ITE, (b, mk_term(parent.sym, then_args), mk_term(parent.sym, else_args)))
    return replace_at(t, parent_path, lifted)
