"""Compile a protocol specification into per-action answer terms, memory
updates, folded all-interleavings terms, and the two privacy-game goal
families (fixed trace and bounded session).

`.bcspec` format (line oriented, `;` comments):

    protocol kclp
    tags 2
    sessions 4              ; declares session labels s1..s5 and enables succ()
    names k{i}
    consts id{i} : nonce distinct
    adv g_key{i} : nonce
    challenge x_k{i} x_id{i}
    loc x_k{i} = k{i}
    action TagMsg_{i}
      fresh nT{i}
      emit <$x_id{i} (+) hash(#nT{i}, $x_k{i}), ...>
      set x_k{i} = @g_key{i}

`{i}` ranges over tag indices, `{j}` over session indices.  Inside action
templates `$x` reads a memory location, `#n` is a fresh name for the step,
`@g` is an adversarial symbol applied to the whole current frame, and
`succ(t)` is the bounded successor table over the session labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import (
    FreshnessClash, IllegalCorruption, SortMismatch, SpecError, UnknownAction,
)
from .goals import Goal
from .rewrite import norm_term
from .syntax import SymbolEnv, TemplateScope, parse_term
from .terms import (
    EQ, ITE, Signature, Sort, Symbol, SymbolKind,
    App, MetaVar, Term, adv_symbol, free_names, mk_term, name,
)

SUCC = Symbol("succ", SymbolKind.HONEST, (Signature((Sort.MSG,), Sort.MSG),))

TO_SYMBOL = "to"
GUESS_SYMBOL = "g_guess"
_RESERVED_ADV = {TO_SYMBOL, GUESS_SYMBOL}


@dataclass(frozen=True)
class Location:
    ident: str
    tag: int | None
    init: Term

    @property
    def sort(self) -> Sort:
        return self.init.sort


@dataclass(frozen=True)
class Action:
    ident: str
    tag: int | None
    corrupting: bool
    fresh_bases: tuple[str, ...]
    emit_tpl: Term
    updates: tuple[tuple[str, Term], ...]


@dataclass(frozen=True)
class MemoryState:
    """The store sigma: location -> ground term."""

    values: tuple[tuple[str, Term], ...]

    def get(self, ident: str) -> Term:
        for k, v in self.values:
            if k == ident:
                return v
        raise KeyError(ident)

    def updated(self, upd: dict[str, Term]) -> "MemoryState":
        return MemoryState(tuple((k, upd.get(k, v)) for k, v in self.values))


Frame = tuple[Term, ...]


@dataclass(frozen=True)
class TraceSpec:
    """Fixed adversary schedule: p first-phase actions out of m."""

    actions: tuple[str, ...]
    split: int

    def __post_init__(self) -> None:
        if not (0 <= self.split <= len(self.actions)):
            raise SpecError(f"split {self.split} out of range")


@dataclass
class ProtocolSpec:
    name: str
    tags: int
    sessions: int
    env: SymbolEnv
    locations: list[Location]
    challenge_bases: list[str]  # location patterns containing {i}
    actions: dict[str, Action]
    session_labels: list[str] = field(default_factory=list)

    @property
    def sigma_init(self) -> MemoryState:
        return MemoryState(tuple((l.ident, l.init) for l in self.locations))

    def location(self, ident: str) -> Location:
        for l in self.locations:
            if l.ident == ident:
                return l
        raise SpecError(f"unknown location {ident!r}")

    def gamma(self, max_tag: int, *, exclude_corrupt_of: int | None = None) -> list[str]:
        """Action set for tags 1..max_tag, in declaration order."""
        out = []
        for a in self.actions.values():
            if a.tag is not None and a.tag > max_tag:
                continue
            if exclude_corrupt_of is not None and a.corrupting and a.tag == exclude_corrupt_of:
                continue
            out.append(a.ident)
        return out

    def challenge_locations(self, tag: int) -> list[str]:
        return [b.replace("{i}", str(tag)) for b in self.challenge_bases]


# ---------------------------------------------------------------------------
# Template instantiation

def _succ_table(spec: ProtocolSpec, value: Term) -> Term:
    if not spec.session_labels:
        raise SpecError("succ() used but no sessions declared")
    labels = [mk_term(spec.env.consts[s]) for s in spec.session_labels]
    out = labels[-1]
    for cur, nxt in reversed(list(zip(labels[:-1], labels[1:]))):
        out = mk_term(ITE, (mk_term(EQ, (value, cur)), nxt, out))
    return out


def _instantiate(
    spec: ProtocolSpec,
    action: Action,
    sigma: MemoryState,
    phi: Frame,
    step: int,
    fresh_names: dict[str, str] | None = None,
) -> tuple[Term, dict[str, Term]]:
    """Instantiate the action templates against (sigma, phi); returns the
    emitted term and the update map (not yet composed into sigma)."""
    used = set(free_names(t) for t in phi)
    used_names: set[str] = set().union(*used) if used else set()
    for _, v in sigma.values:
        used_names |= free_names(v)
    fresh: dict[str, Term] = {}
    for base in action.fresh_bases:
        ident = (fresh_names or {}).get(base, f"{base}_{step}")
        if ident in used_names:
            raise FreshnessClash(f"fresh name {ident} already occurs in the run")
        fresh[base] = name(ident)

    memo: dict[Term, Term] = {}

    def walk(t: Term) -> Term:
        if t.ground:
            return t
        r = memo.get(t)
        if r is not None:
            return r
        if isinstance(t, MetaVar):
            ident = t.ident
            if ident.startswith("$"):
                r = sigma.get(ident[1:])
            elif ident.startswith("#"):
                r = fresh[ident[1:]]
            elif ident.startswith("@"):
                fam = ident[1:]
                result = spec.env.advs.get(fam, Sort.MSG)
                r = mk_term(adv_symbol(fam, len(phi), result), phi)
            else:
                raise SpecError(f"unresolved template variable {ident!r}")
        else:
            assert isinstance(t, App)
            if t.sym == SUCC:
                r = _succ_table(spec, walk(t.args[0]))
            else:
                r = mk_term(t.sym, [walk(a) for a in t.args])
        memo[t] = r
        return r

    emit = walk(action.emit_tpl)
    updates: dict[str, Term] = {}
    for loc_ident, tpl in action.updates:
        v = walk(tpl)
        loc = spec.location(loc_ident)
        if not (v.sort <= loc.sort):
            raise SortMismatch(
                f"update of {loc_ident} has sort {v.sort}, location holds {loc.sort}"
            )
        updates[loc_ident] = v
    return emit, updates


def action_step(
    spec: ProtocolSpec,
    action_ident: str,
    sigma: MemoryState,
    phi: Frame,
    *,
    step: int = 1,
    fresh_names: dict[str, str] | None = None,
) -> tuple[Term, MemoryState]:
    """Answer term and updated memory for one adversary interface call."""
    action = spec.actions.get(action_ident)
    if action is None:
        raise UnknownAction(f"no action {action_ident!r} in protocol {spec.name}")
    emit, updates = _instantiate(spec, action, sigma, phi, step, fresh_names)
    return emit, sigma.updated(updates)


def fold(
    spec: ProtocolSpec,
    action_idents: list[str],
    sigma: MemoryState,
    phi: Frame,
    *,
    step: int = 1,
) -> tuple[Term, MemoryState]:
    """All-interleavings term and memory update for an action set, keyed on
    the scheduling symbol applied to the current frame."""
    if not action_idents:
        raise SpecError("cannot fold an empty action set")
    to_call = mk_term(adv_symbol(TO_SYMBOL, len(phi)), phi)
    u: Term | None = None
    tau: dict[str, Term] | None = None
    for ident in action_idents:
        action = spec.actions.get(ident)
        if action is None:
            raise UnknownAction(f"no action {ident!r} in protocol {spec.name}")
        emit, updates = _instantiate(spec, action, sigma, phi, step)
        values = {k: updates.get(k, v) for k, v in sigma.values}
        if u is None:
            u, tau = emit, values
        else:
            guard = mk_term(EQ, (to_call, mk_term(spec.env.consts[ident])))
            u = mk_term(ITE, (guard, emit, u))
            assert tau is not None
            tau = {k: mk_term(ITE, (guard, values[k], tau[k])) for k in values}
    assert u is not None and tau is not None
    return u, sigma.updated(tau)


# ---------------------------------------------------------------------------
# Privacy-game goals

def _validate_trace(spec: ProtocolSpec, trace: TraceSpec) -> None:
    n = spec.tags
    phase2 = set(spec.gamma(n - 1, exclude_corrupt_of=n - 1))
    for ix, ident in enumerate(trace.actions, start=1):
        action = spec.actions.get(ident)
        if action is None:
            raise UnknownAction(f"no action {ident!r} in protocol {spec.name}")
        if ix > trace.split and ident not in phase2:
            raise IllegalCorruption(
                f"step {ix}: {ident} is not available in the challenge phase"
            )


def _swap_challenge(spec: ProtocolSpec, sigma: MemoryState) -> MemoryState:
    """Tilded-world substitution at the phase switch: the challenged slot
    n-1 is loaded with tag n's state, read from the pre-update memory."""
    n = spec.tags
    upd = {
        src: sigma.get(dst)
        for src, dst in zip(spec.challenge_locations(n - 1), spec.challenge_locations(n))
    }
    return sigma.updated(upd)


def _norm_memory(sigma: MemoryState) -> MemoryState:
    return MemoryState(tuple((k, norm_term(v)) for k, v in sigma.values))


def gen_fixed_trace_goal(spec: ProtocolSpec, trace: TraceSpec) -> Goal:
    """The equivalence goal of the fixed-trace privacy definition, including
    the final guessing element.  Emitted terms and stored memory are kept in
    normal form, so the goal is the canonical representative of the
    definition's recursion."""
    _validate_trace(spec, trace)
    left: list[Term] = []
    right: list[Term] = []
    sigma_l = sigma_r = spec.sigma_init
    for ix, ident in enumerate(trace.actions, start=1):
        if ix == trace.split + 1:
            sigma_r = _swap_challenge(spec, sigma_r)
        tl, sigma_l = action_step(spec, ident, sigma_l, tuple(left), step=ix)
        tr, sigma_r = action_step(spec, ident, sigma_r, tuple(right), step=ix)
        sigma_l, sigma_r = _norm_memory(sigma_l), _norm_memory(sigma_r)
        left.append(norm_term(tl))
        right.append(norm_term(tr))
    m = len(trace.actions)
    guess_l = mk_term(adv_symbol(GUESS_SYMBOL, m), tuple(left))
    guess_r = mk_term(adv_symbol(GUESS_SYMBOL, m), tuple(right))
    return Goal(tuple(left) + (guess_l,), tuple(right) + (guess_r,))


def gen_bounded_goal(spec: ProtocolSpec, m: int, p: int) -> Goal:
    """The bounded-session goal: one folded all-interleavings term per step."""
    if not (0 <= p <= m):
        raise SpecError(f"split {p} out of range for m={m}")
    n = spec.tags
    gamma1 = spec.gamma(n)
    gamma2 = spec.gamma(n - 1, exclude_corrupt_of=n - 1)
    left: list[Term] = []
    right: list[Term] = []
    sigma_l = sigma_r = spec.sigma_init
    for ix in range(1, m + 1):
        actions = gamma1 if ix <= p else gamma2
        if ix == p + 1:
            sigma_r = _swap_challenge(spec, sigma_r)
        tl, sigma_l = fold(spec, actions, sigma_l, tuple(left), step=ix)
        tr, sigma_r = fold(spec, actions, sigma_r, tuple(right), step=ix)
        left.append(tl)
        right.append(tr)
    guess_l = mk_term(adv_symbol(GUESS_SYMBOL, m), tuple(left))
    guess_r = mk_term(adv_symbol(GUESS_SYMBOL, m), tuple(right))
    return Goal(tuple(left) + (guess_l,), tuple(right) + (guess_r,))


def substitute_schedule(goal: Goal, spec: ProtocolSpec, trace: TraceSpec) -> Goal:
    """Interpret the scheduler as the fixed trace: every application of the
    scheduling symbol to the step-i frame is replaced by the label of the
    i-th action (the frame length identifies the step), then normalized."""
    labels = {
        arity: mk_term(spec.env.consts[ident])
        for arity, ident in enumerate(trace.actions)
    }

    memo: dict[Term, Term] = {}

    def walk(t: Term) -> Term:
        if not isinstance(t, App):
            return t
        r = memo.get(t)
        if r is None:
            if t.sym.kind is SymbolKind.ADVERSARIAL and t.sym.name == TO_SYMBOL:
                r = labels[len(t.args)]
            else:
                r = mk_term(t.sym, [walk(a) for a in t.args])
            memo[t] = r
        return r

    left = tuple(norm_term(walk(t)) for t in goal.left)
    right = tuple(norm_term(walk(t)) for t in goal.right)
    return Goal(left, right)


# ---------------------------------------------------------------------------
# .bcspec parsing

_ACTION_BODY_KEYWORDS = ("fresh", "emit", "set")
_TOP_KEYWORDS = (
    "protocol", "tags", "sessions", "names", "consts", "labels", "adv",
    "challenge", "loc", "action",
)


def parse_spec(text: str) -> ProtocolSpec:
    lines: list[str] = []
    for raw in text.splitlines():
        stripped = raw.split(";", 1)[0].strip()
        if stripped:
            lines.append(stripped)
    if not lines or not lines[0].startswith("protocol "):
        raise SpecError("spec must start with a protocol line")
    spec = ProtocolSpec(lines[0].split()[1], 0, 0, SymbolEnv(), [], [], {})
    spec.env.funs["succ"] = SUCC

    # Group the action blocks, keep other declarations standalone.
    blocks: list[tuple[str, list[str]]] = []
    for ln in lines[1:]:
        kw = ln.split(None, 1)[0]
        if kw in _ACTION_BODY_KEYWORDS:
            if not blocks or not blocks[-1][0].startswith("action"):
                raise SpecError(f"{kw} clause outside an action block")
            blocks[-1][1].append(ln)
        elif kw in _TOP_KEYWORDS:
            blocks.append((ln, []))
        else:
            raise SpecError(f"unknown declaration {kw!r}")

    for header, body in blocks:
        parts = header.split(None, 1)
        kw, rest = parts[0], (parts[1] if len(parts) > 1 else "")
        if kw == "tags":
            spec.tags = int(rest)
        elif kw == "sessions":
            spec.sessions = int(rest)
            spec.session_labels = [f"s{j}" for j in range(1, spec.sessions + 2)]
            for s in spec.session_labels:
                spec.env.declare_label(s)
        elif kw == "names":
            for ident in _expand_idents(spec, rest.split()):
                spec.env.declare_name(ident)
        elif kw == "consts":
            decl, _, ann = rest.partition(":")
            words = ann.split()
            if not words:
                raise SpecError("consts declaration needs a sort")
            sort = _SORTS[words[0]]
            distinct = "distinct" in words[1:]
            for ident in _expand_idents(spec, decl.split()):
                spec.env.declare_const(ident, sort, distinct)
        elif kw == "labels":
            for ident in _expand_idents(spec, rest.split()):
                spec.env.declare_label(ident)
        elif kw == "adv":
            decl, _, ann = rest.partition(":")
            sort = _SORTS[ann.split()[0]] if ann.split() else Sort.MSG
            for ident in _expand_idents(spec, decl.split()):
                if ident in _RESERVED_ADV:
                    raise SpecError(f"adversarial name {ident} is reserved")
                spec.env.declare_adv(ident, sort)
        elif kw == "challenge":
            spec.challenge_bases = rest.split()
        elif kw == "loc":
            pat, eq_, init_text = rest.partition("=")
            if not eq_:
                raise SpecError(f"loc needs an initial value: {header}")
            decl = f"{pat.strip()} = {init_text.strip()}"
            insts = (
                [(decl.replace("{j}", str(j)), None) for j in range(1, spec.sessions + 1)]
                if "{j}" in decl
                else _expand_block(spec, decl)
            )
            for inst_text, tag in insts:
                ident, _, init_src = inst_text.partition("=")
                init = parse_term(init_src.strip(), spec.env)
                if not init.ground:
                    raise SpecError(f"initial value of {ident.strip()} is not ground")
                spec.locations.append(Location(ident.strip(), tag, init))
        elif kw == "action":
            for inst_header, tag in _expand_block(spec, rest):
                words = inst_header.split()
                _parse_action(spec, words[0], "corrupts" in words[1:], tag,
                              [b.replace("{i}", str(tag)) if tag else b for b in body])
        else:  # pragma: no cover - guarded above
            raise SpecError(f"unknown declaration {kw!r}")
    if spec.tags < 2:
        raise SpecError("protocol needs at least two tags")
    if not spec.challenge_bases:
        raise SpecError("protocol needs a challenge declaration")
    if not spec.actions:
        raise SpecError("protocol declares no actions")
    return spec


_SORTS = {"nonce": Sort.NONCE, "msg": Sort.MSG, "bool": Sort.BOOL}


def _expand_idents(spec: ProtocolSpec, patterns: list[str]) -> list[str]:
    out = []
    for pat in patterns:
        if "{i}" in pat:
            out.extend(pat.replace("{i}", str(t)) for t in range(1, spec.tags + 1))
        else:
            out.append(pat)
    return out


def _expand_block(spec: ProtocolSpec, text: str) -> list[tuple[str, int | None]]:
    if "{i}" in text:
        return [(text.replace("{i}", str(t)), t) for t in range(1, spec.tags + 1)]
    return [(text, None)]


def _parse_action(spec: ProtocolSpec, ident: str, corrupting: bool, tag: int | None, body: list[str]) -> None:
    fresh: list[str] = []
    emit: Term | None = None
    updates: list[tuple[str, Term]] = []
    for ln in body:
        kw, _, rest = ln.partition(" ")
        rest = rest.strip()
        if kw == "fresh":
            fresh.extend(rest.split())
        elif kw == "emit":
            if emit is not None:
                raise SpecError(f"action {ident} has two emit clauses")
            emit = _parse_template(spec, rest, fresh)
        elif kw == "set":
            loc_pat, eq_, value = rest.partition("=")
            if not eq_:
                raise SpecError(f"set clause needs a value: {ln}")
            instances = (
                [(loc_pat.replace("{j}", str(j)), value.replace("{j}", str(j)))
                 for j in range(1, spec.sessions + 1)]
                if "{j}" in loc_pat
                else [(loc_pat, value)]
            )
            for loc_ident, value_text in instances:
                loc = spec.location(loc_ident.strip())
                v = _parse_template(spec, value_text.strip(), fresh)
                if not (v.sort <= loc.sort):
                    raise SpecError(
                        f"update of {loc.ident} has sort {v.sort}, location holds {loc.sort}"
                    )
                updates.append((loc.ident, v))
    if emit is None:
        raise SpecError(f"action {ident} has no emit clause")
    spec.actions[ident] = Action(ident, tag, corrupting, tuple(fresh), emit, tuple(updates))
    spec.env.declare_label(ident)


def _parse_template(spec: ProtocolSpec, text: str, fresh: list[str]) -> Term:
    scope = TemplateScope(
        loc_sorts={l.ident: l.sort for l in spec.locations},
        fresh=set(fresh),
        advs=spec.env.advs,
    )
    spec.env.template_scope = scope
    try:
        return parse_term(text, spec.env)
    finally:
        spec.env.template_scope = None


def load_spec(path) -> ProtocolSpec:
    from pathlib import Path

    return parse_spec(Path(path).read_text())
