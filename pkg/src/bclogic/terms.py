"""Sorted term algebra: construction, traversal, substitution, occurrence scans.

Terms are immutable and hash-consed: structurally equal terms are the same
object, so equality is pointer equality and sets/dicts over terms are cheap.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator

from .errors import ArityMismatch, InvalidPosition, KeyCycle, KeyEscapes, SortMismatch


class Sort(Enum):
    BOOL = "bool"
    NONCE = "nonce"
    MSG = "msg"

    def __le__(self, other: "Sort") -> bool:
        return self is other or other is Sort.MSG

    def __str__(self) -> str:
        return self.value


def sort_lub(a: Sort, b: Sort) -> Sort:
    if a is b:
        return a
    if a <= b:
        return b
    if b <= a:
        return a
    return Sort.MSG


class SymbolKind(Enum):
    HONEST = "honest"
    ADVERSARIAL = "adversarial"


@dataclass(frozen=True)
class Signature:
    args: tuple[Sort, ...]
    result: Sort


@dataclass(frozen=True)
class Symbol:
    """Function symbol with one or more admissible signatures (all same arity)."""

    name: str
    kind: SymbolKind
    signatures: tuple[Signature, ...]
    distinct: bool = False  # distinguished constant: pairwise-distinct semantics

    @property
    def arity(self) -> int:
        return len(self.signatures[0].args)

    def __repr__(self) -> str:
        return f"Symbol({self.name}/{self.arity})"


def _sig(args: tuple[Sort, ...], result: Sort) -> Signature:
    return Signature(args, result)


B, N, M = Sort.BOOL, Sort.NONCE, Sort.MSG

PAIR = Symbol("pair", SymbolKind.HONEST, (_sig((M, M), M),))
PROJ1 = Symbol("p1", SymbolKind.HONEST, (_sig((M,), M),))
PROJ2 = Symbol("p2", SymbolKind.HONEST, (_sig((M,), M),))
EQ = Symbol("EQ", SymbolKind.HONEST, (_sig((M, M), B),))
TRUE = Symbol("true", SymbolKind.HONEST, (_sig((), B),))
FALSE = Symbol("false", SymbolKind.HONEST, (_sig((), B),))
XOR = Symbol("xor", SymbolKind.HONEST, (_sig((N, N), N),))
ZERO = Symbol("0", SymbolKind.HONEST, (_sig((), N),))
HASH = Symbol("hash", SymbolKind.HONEST, (_sig((M, N), N),))
# ite carries the three admissible typings; most specific first so that the
# computed sort is the least one.
ITE = Symbol("ite", SymbolKind.HONEST, (_sig((B, B, B), B), _sig((B, N, N), N), _sig((B, M, M), M)))
COMBINE = Symbol("combine", SymbolKind.HONEST, (_sig((M, M), M),))
# Stateful-generator symbols (Def. of the CPRNG): G, init, and the two
# projections retrieving next state and output.
GEN = Symbol("G", SymbolKind.HONEST, (_sig((M,), M),))
INIT = Symbol("init", SymbolKind.HONEST, (_sig((M,), M),))
PI_S = Symbol("piS", SymbolKind.HONEST, (_sig((M,), M),))
PI_O = Symbol("piO", SymbolKind.HONEST, (_sig((M,), N),))

BUILTIN_SYMBOLS: tuple[Symbol, ...] = (
    PAIR, PROJ1, PROJ2, EQ, TRUE, FALSE, XOR, ZERO, HASH, ITE, COMBINE,
    GEN, INIT, PI_S, PI_O,
)

_adv_cache: dict[tuple[str, int, Sort], Symbol] = {}


def adv_symbol(name: str, arity: int, result: Sort = Sort.MSG) -> Symbol:
    """Adversarial symbol of the given arity; Msg^k -> Msg unless narrowed."""
    key = (name, arity, result)
    sym = _adv_cache.get(key)
    if sym is None:
        sym = Symbol(name, SymbolKind.ADVERSARIAL, (_sig((M,) * arity, result),))
        _adv_cache[key] = sym
    return sym


_const_cache: dict[tuple[str, Sort, bool], Symbol] = {}


def const_symbol(name: str, sort: Sort = Sort.NONCE, distinct: bool = False) -> Symbol:
    key = (name, sort, distinct)
    sym = _const_cache.get(key)
    if sym is None:
        sym = Symbol(name, SymbolKind.HONEST, (_sig((), sort),), distinct=distinct)
        _const_cache[key] = sym
    return sym


def label_symbol(name: str) -> Symbol:
    """Distinguished Msg constant (action labels, session counters)."""
    return const_symbol(name, Sort.MSG, distinct=True)


# ---------------------------------------------------------------------------
# Terms

HOLE_IDENT = "_"


class Term:
    """Base class; instances are interned, so `==` is pointer equality."""

    __slots__ = ("sort", "ground", "_hash")

    sort: Sort
    ground: bool

    def __eq__(self, other: object) -> bool:
        return self is other

    def __ne__(self, other: object) -> bool:
        return self is not other

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        from .syntax import print_term

        return print_term(self)


class Name(Term):
    __slots__ = ("ident",)

    def __init__(self, ident: str):
        self.ident = ident
        self.sort = Sort.NONCE
        self.ground = True
        self._hash = hash(("Name", ident))


class MetaVar(Term):
    __slots__ = ("ident",)

    def __init__(self, ident: str, sort: Sort):
        self.ident = ident
        self.sort = sort
        self.ground = False
        self._hash = hash(("MetaVar", ident, sort))


class App(Term):
    __slots__ = ("sym", "args")

    def __init__(self, sym: Symbol, args: tuple[Term, ...], sort: Sort):
        self.sym = sym
        self.args = args
        self.sort = sort
        self.ground = all(a.ground for a in args)
        self._hash = hash(("App", sym.name, sym.kind, sort, tuple(id(a) for a in args)))


_names: dict[str, Name] = {}
_metavars: dict[tuple[str, Sort], MetaVar] = {}
_apps: dict[tuple[Symbol, tuple[int, ...]], App] = {}


def name(ident: str) -> Name:
    t = _names.get(ident)
    if t is None:
        t = Name(ident)
        _names[ident] = t
    return t


def metavar(ident: str, sort: Sort = Sort.MSG) -> MetaVar:
    key = (ident, sort)
    t = _metavars.get(key)
    if t is None:
        t = MetaVar(ident, sort)
        _metavars[key] = t
    return t


def mk_term(sym: Symbol, args: list[Term] | tuple[Term, ...] = ()) -> Term:
    """Build a sort-checked application (sub-sorting allowed on arguments)."""
    args = tuple(args)
    if len(args) != sym.arity:
        raise ArityMismatch(f"{sym.name} expects {sym.arity} arguments, got {len(args)}")
    key = (sym, tuple(id(a) for a in args))
    t = _apps.get(key)
    if t is not None:
        return t
    for sig in sym.signatures:
        if all(a.sort <= s for a, s in zip(args, sig.args)):
            t = App(sym, args, sig.result)
            _apps[key] = t
            return t
    got = ", ".join(str(a.sort) for a in args)
    raise SortMismatch(f"no signature of {sym.name} accepts argument sorts ({got})")


# Convenience constructors for the built-in symbols.
def pair(a: Term, b: Term) -> Term:
    return mk_term(PAIR, (a, b))


def proj1(t: Term) -> Term:
    return mk_term(PROJ1, (t,))


def proj2(t: Term) -> Term:
    return mk_term(PROJ2, (t,))


def eq(a: Term, b: Term) -> Term:
    return mk_term(EQ, (a, b))


def xor(a: Term, b: Term) -> Term:
    return mk_term(XOR, (a, b))


def ite(b: Term, x: Term, y: Term) -> Term:
    return mk_term(ITE, (b, x, y))


def hash_(msg: Term, key_: Term) -> Term:
    return mk_term(HASH, (msg, key_))


def combine(a: Term, b: Term) -> Term:
    return mk_term(COMBINE, (a, b))


TRUE_T = mk_term(TRUE)
FALSE_T = mk_term(FALSE)
ZERO_T = mk_term(ZERO)


# ---------------------------------------------------------------------------
# Traversal and occurrence predicates

_names_cache: dict[Term, frozenset[str]] = {}


def free_names(t: Term) -> frozenset[str]:
    """Set of name identifiers occurring anywhere in the term."""
    cached = _names_cache.get(t)
    if cached is not None:
        return cached
    if isinstance(t, Name):
        out = frozenset((t.ident,))
    elif isinstance(t, App):
        out = frozenset().union(*(free_names(a) for a in t.args)) if t.args else frozenset()
    else:
        out = frozenset()
    _names_cache[t] = out
    return out


def occurs(ident: str, t: Term) -> bool:
    """True iff the name appears anywhere in the term."""
    return ident in free_names(t)


def occurs_in_any(ident: str, ts) -> bool:
    return any(occurs(ident, t) for t in ts)


def subterms(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, App):
        for a in t.args:
            yield from subterms(a)


def metavars_of(t: Term) -> frozenset[str]:
    if t.ground:
        return frozenset()
    if isinstance(t, MetaVar):
        return frozenset((t.ident,))
    if isinstance(t, App):
        return frozenset().union(*(metavars_of(a) for a in t.args))
    return frozenset()


def subterm_at(t: Term, path: tuple[int, ...]) -> Term:
    cur = t
    for i in path:
        if not isinstance(cur, App) or i >= len(cur.args):
            raise InvalidPosition(f"path {path} does not exist in term")
        cur = cur.args[i]
    return cur


def replace_at(t: Term, path: tuple[int, ...], new: Term) -> Term:
    if not path:
        return new
    if not isinstance(t, App) or path[0] >= len(t.args):
        raise InvalidPosition(f"path {path} does not exist in term")
    i = path[0]
    args = list(t.args)
    args[i] = replace_at(args[i], path[1:], new)
    return mk_term(t.sym, args)


def is_zero_like(t: Term) -> bool:
    return isinstance(t, App) and t.sym is ZERO


# ---------------------------------------------------------------------------
# Key-position scans backing the hashing side conditions

def key_only_in_key_position(key_ident: str, ts) -> bool:
    """True iff every occurrence of the key is the second argument of hash."""

    def ok(t: Term) -> bool:
        if isinstance(t, Name):
            return t.ident != key_ident
        if isinstance(t, App):
            if t.sym is HASH:
                m, k = t.args
                k_ok = (isinstance(k, Name) and k.ident == key_ident) or ok(k)
                return ok(m) and k_ok
            return all(ok(a) for a in t.args)
        return True

    return all(ok(t) if occurs(key_ident, t) else True for t in ts)


def hashed_arguments(key_ident: str, ts) -> list[Term]:
    """Ordered, de-duplicated first arguments of hash(., key) occurrences.

    Scan is leftmost-outermost; nested keyed hashes inside a hashed message
    are collected as well.  Raises KeyCycle when the key leaks into a hashed
    message outside a nested hash(., key), KeyEscapes when it occurs outside
    the key slot altogether.
    """
    out: list[Term] = []
    seen: set[Term] = set()

    def walk(t: Term, in_hashed_msg: bool) -> None:
        if isinstance(t, Name):
            if t.ident == key_ident:
                if in_hashed_msg:
                    raise KeyCycle(f"key {key_ident} occurs in a hashed message")
                raise KeyEscapes(f"key {key_ident} occurs outside hash key position")
            return
        if not isinstance(t, App):
            return
        if t.sym is HASH and isinstance(t.args[1], Name) and t.args[1].ident == key_ident:
            arg = t.args[0]
            if arg not in seen:
                seen.add(arg)
                out.append(arg)
            walk(arg, True)
            return
        for a in t.args:
            if occurs(key_ident, a):
                walk(a, in_hashed_msg)

    for t in ts:
        if occurs(key_ident, t):
            walk(t, False)
    return out


# ---------------------------------------------------------------------------
# Substitution (metavariable instantiation; no binders, so plain replacement)

def substitute(t: Term, binding: dict[str, Term]) -> Term:
    """Replace metavariables; each bound term's sort must fit the variable's."""
    memo: dict[Term, Term] = {}

    def go(u: Term) -> Term:
        if u.ground:
            return u
        r = memo.get(u)
        if r is not None:
            return r
        if isinstance(u, MetaVar):
            r = binding.get(u.ident, u)
            if r is not u and not (r.sort <= u.sort):
                raise SortMismatch(
                    f"cannot bind {u.ident}:{u.sort} to a term of sort {r.sort}"
                )
        elif isinstance(u, App):
            r = mk_term(u.sym, [go(a) for a in u.args])
        else:
            r = u
        memo[u] = r
        return r

    return go(t)


# ---------------------------------------------------------------------------
# Contexts: a term with exactly one hole

@dataclass(frozen=True)
class Context:
    """Term with one distinguished hole, written `_` in the text syntax."""

    term: Term
    hole_sort: Sort

    def __post_init__(self) -> None:
        count = sum(1 for s in subterms(self.term) if isinstance(s, MetaVar) and s.ident == HOLE_IDENT)
        if count != 1:
            raise InvalidPosition(f"context must contain exactly one hole, found {count}")

    def fill(self, t: Term) -> Term:
        if not (t.sort <= self.hole_sort):
            raise SortMismatch(f"hole expects {self.hole_sort}, got {t.sort}")
        return substitute(self.term, {HOLE_IDENT: t})


def hole(sort: Sort = Sort.NONCE) -> MetaVar:
    return metavar(HOLE_IDENT, sort)


# ---------------------------------------------------------------------------
# Canonical total order on terms (fixes xor normal forms and rule orientation)

_order_cache: dict[Term, tuple] = {}


def order_key(t: Term) -> tuple:
    k = _order_cache.get(t)
    if k is not None:
        return k
    if isinstance(t, Name):
        k = (0, t.ident)
    elif isinstance(t, MetaVar):
        k = (1, t.ident)
    else:
        assert isinstance(t, App)
        k = (2, t.sym.name, len(t.args)) + tuple(order_key(a) for a in t.args)
    _order_cache[t] = k
    return k
