"""Bit-level execution: pluggable primitive implementations, the five
distinguishing/forging experiments, the stateful generator, and the
empirical spot-checks of axiom instances at a fixed security parameter.

Everything is deterministic under the supplied seed: per-trial randomness is
derived from (seed, experiment, world, trial), and the keyed hash is a
lazily-defined random function realized as a pure seeded derivation."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from .errors import IncompatibleSuite, UnboundName, UnboundSymbol
from .goals import Goal
from .protocol import ProtocolSpec, TraceSpec, action_step
from .terms import (
    BUILTIN_SYMBOLS, COMBINE, EQ, FALSE, GEN, HASH, INIT, ITE, PAIR, PI_O,
    PI_S, PROJ1, PROJ2, TRUE, XOR, ZERO,
    App, MetaVar, Name, SymbolKind, Term,
)

BOOL_TRUE = b"\x01"
BOOL_FALSE = b"\x00"

_PUBLIC_TAG = b"bclogic-public-v1"


def _derive(*parts: bytes) -> random.Random:
    blob = b"|".join(len(p).to_bytes(4, "big") + p for p in parts)
    return random.Random(blob)


def _stream(nbytes: int, *parts: bytes) -> bytes:
    return _derive(*parts).getrandbits(nbytes * 8).to_bytes(nbytes, "big")


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        n = max(len(a), len(b))
        a = a.ljust(n, b"\x00")
        b = b.ljust(n, b"\x00")
    return bytes(x ^ y for x, y in zip(a, b))


def pair_encode(a: bytes, b: bytes) -> bytes:
    return len(a).to_bytes(4, "big") + a + b


def pair_first(v: bytes) -> bytes:
    if len(v) < 4:
        return b""
    n = int.from_bytes(v[:4], "big")
    if len(v) < 4 + n:
        return b""
    return v[4:4 + n]


def pair_second(v: bytes) -> bytes:
    if len(v) < 4:
        return b""
    n = int.from_bytes(v[:4], "big")
    if len(v) < 4 + n:
        return b""
    return v[4 + n:]


def _force_eta(v: bytes, eta: int) -> bytes:
    n = eta // 8
    return v[:n].ljust(n, b"\x00")


@dataclass(frozen=True)
class PrimitiveSuite:
    """Primitive choices: the keyed hash (ideal random function, a variant
    leaking the first key bit, or a collision-resistant-only variant leaking
    the first message bit) and the nonce-combining function."""

    hash_impl: str = "prf"       # prf | leaky | cr-only
    combine_impl: str = "xor"    # xor | pair
    eta: int = 64

    def __post_init__(self) -> None:
        if self.hash_impl not in ("prf", "leaky", "cr-only"):
            raise IncompatibleSuite(f"unknown hash implementation {self.hash_impl!r}")
        if self.combine_impl not in ("xor", "pair"):
            raise IncompatibleSuite(f"unknown combine implementation {self.combine_impl!r}")
        if self.eta % 8 != 0 or self.eta <= 0:
            raise IncompatibleSuite("eta must be a positive multiple of 8")

    def hash(self, msg: bytes, key: bytes) -> bytes:
        base = _stream(self.eta // 8, b"prf-core", key, msg)
        if self.hash_impl == "prf":
            return base
        if self.hash_impl == "leaky":
            lead = key[0] if key else 0
        else:  # cr-only: first output bit mirrors the first input bit
            lead = msg[0] if msg else 0
        return bytes(((lead & 0x80) | (base[0] & 0x7F),)) + base[1:]

    def combine(self, a: bytes, b: bytes) -> bytes:
        if self.combine_impl == "xor":
            return xor_bytes(_force_eta(a, self.eta), _force_eta(b, self.eta))
        return pair_encode(a, b)


# ---------------------------------------------------------------------------
# Stateful pseudo-random generator (public algorithm; the seed is secret)

@dataclass(frozen=True)
class CPRNGState:
    inner: bytes
    eta: int


def cprng_init(seed: bytes, eta: int = 64) -> CPRNGState:
    return CPRNGState(_stream(eta // 8, _PUBLIC_TAG, b"cprng-init", seed), eta)


def cprng_next(state: CPRNGState) -> tuple[bytes, CPRNGState]:
    n = state.eta // 8
    out = _stream(n, _PUBLIC_TAG, b"cprng-O", state.inner)
    nxt = _stream(n, _PUBLIC_TAG, b"cprng-S", state.inner)
    return out, CPRNGState(nxt, state.eta)


# ---------------------------------------------------------------------------
# Term evaluation

@dataclass
class EvalEnv:
    names: dict[str, bytes]
    adv: dict[str, Callable[..., bytes]] = field(default_factory=dict)


_BUILTIN_NAMES = {s.name for s in BUILTIN_SYMBOLS}


def _const_bytes(ident: str, eta: int) -> bytes:
    return _stream(eta // 8, _PUBLIC_TAG, b"const", ident.encode())


def eval_term(t: Term, suite: PrimitiveSuite, env: EvalEnv) -> bytes:
    """Structural evaluation to a bitstring; booleans evaluate to one byte."""
    memo: dict[Term, bytes] = {}

    def go(u: Term) -> bytes:
        r = memo.get(u)
        if r is not None:
            return r
        r = _eval(u, go)
        memo[u] = r
        return r

    def _eval(u: Term, go) -> bytes:
        if isinstance(u, Name):
            v = env.names.get(u.ident)
            if v is None:
                raise UnboundName(f"name {u.ident} has no value")
            return v
        if isinstance(u, MetaVar):
            raise UnboundSymbol(f"cannot evaluate metavariable {u.ident}")
        assert isinstance(u, App)
        sym = u.sym
        if sym.kind is SymbolKind.ADVERSARIAL:
            proc = env.adv.get(sym.name)
            if proc is None:
                raise UnboundSymbol(f"adversarial symbol {sym.name} is not bound")
            return proc(*[go(a) for a in u.args])
        if sym is TRUE:
            return BOOL_TRUE
        if sym is FALSE:
            return BOOL_FALSE
        if sym is ZERO:
            return bytes(suite.eta // 8)
        if sym is ITE:
            b = go(u.args[0])
            return go(u.args[1]) if b == BOOL_TRUE else go(u.args[2])
        if sym is EQ:
            return BOOL_TRUE if go(u.args[0]) == go(u.args[1]) else BOOL_FALSE
        if sym is XOR:
            return xor_bytes(go(u.args[0]), go(u.args[1]))
        if sym is PAIR:
            return pair_encode(go(u.args[0]), go(u.args[1]))
        if sym is PROJ1:
            return pair_first(go(u.args[0]))
        if sym is PROJ2:
            return pair_second(go(u.args[0]))
        if sym is HASH:
            return suite.hash(go(u.args[0]), go(u.args[1]))
        if sym is COMBINE:
            return suite.combine(go(u.args[0]), go(u.args[1]))
        if sym is INIT:
            return cprng_init(go(u.args[0]), suite.eta).inner
        if sym is GEN:
            s = CPRNGState(_force_eta(go(u.args[0]), suite.eta), suite.eta)
            out, nxt = cprng_next(s)
            return pair_encode(nxt.inner, out)
        if sym is PI_S:
            return pair_first(go(u.args[0]))
        if sym is PI_O:
            return _force_eta(pair_second(go(u.args[0])), suite.eta)
        if sym.arity == 0:
            return _const_bytes(sym.name, suite.eta)
        # Declared honest symbols: an arbitrary fixed function.
        blob = b"".join(len(x).to_bytes(4, "big") + x for x in (go(a) for a in u.args))
        return _stream(suite.eta // 8, _PUBLIC_TAG, b"fun:" + sym.name.encode(), blob)

    return go(t)


def sample_names(terms, suite: PrimitiveSuite, seed: str) -> dict[str, bytes]:
    from .terms import free_names

    idents: set[str] = set()
    for t in terms:
        idents |= free_names(t)
    return {
        ident: _stream(suite.eta // 8, b"name", seed.encode(), ident.encode())
        for ident in idents
    }


def run_protocol_trace(
    spec: ProtocolSpec, trace: TraceSpec, suite: PrimitiveSuite, seed: int,
) -> list[bytes]:
    """Concrete transcript of the (untilded) execution: per-step answer terms
    evaluated with honestly relayed adversarial inputs (each adversarial
    symbol returns the most recent message, or zeros on an empty frame)."""
    sigma = spec.sigma_init
    frame_terms: list[Term] = []
    transcript: list[bytes] = []
    names: dict[str, bytes] = {}

    def honest_relay(*vals: bytes) -> bytes:
        return vals[-1] if vals else bytes(suite.eta // 8)

    for ix, ident in enumerate(trace.actions, start=1):
        term, sigma = action_step(spec, ident, sigma, tuple(frame_terms), step=ix)
        frame_terms.append(term)
        for nm in sorted(sample_names([term], suite, f"{seed}").keys()):
            if nm not in names:
                names[nm] = _stream(suite.eta // 8, b"trace-name", str(seed).encode(), nm.encode())
        env = EvalEnv(names, _AdvDefaultDict(honest_relay))
        transcript.append(eval_term(term, suite, env))
    return transcript


class _AdvDefaultDict(dict):
    def __init__(self, default):
        super().__init__()
        self._default = default

    def get(self, key, fallback=None):
        return self._default


# ---------------------------------------------------------------------------
# Advantage estimation

@dataclass
class AdvantageEstimate:
    attack: str
    trials: int
    successes_world0: int
    successes_world1: int | None
    advantage: float
    ci95: float
    detail: dict[str, float] = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "attack": self.attack,
            "trials": self.trials,
            "successes_world0": self.successes_world0,
            "successes_world1": self.successes_world1,
            "advantage": round(self.advantage, 6),
            "ci95": round(self.ci95, 6),
            "detail": {k: round(v, 6) for k, v in self.detail.items()},
            "notes": list(self.notes),
        }


def _two_world_estimate(attack: str, s0: int, s1: int, trials: int, detail=None, notes=()) -> AdvantageEstimate:
    p0, p1 = s0 / trials, s1 / trials
    pooled = (s0 + s1) / (2 * trials)
    ci = 1.96 * (pooled * (1 - pooled) * 2 / trials) ** 0.5
    return AdvantageEstimate(
        attack, trials, s0, s1, abs(p0 - p1), ci, detail or {}, tuple(notes),
    )


def _single_world_estimate(attack: str, s0: int, trials: int, notes=()) -> AdvantageEstimate:
    p = s0 / trials
    ci = 1.96 * (p * (1 - p) / trials) ** 0.5
    return AdvantageEstimate(attack, trials, s0, None, p, ci, {}, tuple(notes))


def _trial_rng(seed: int, attack: str, world: int, trial: int) -> random.Random:
    return _derive(b"attack", str(seed).encode(), attack.encode(), bytes([world]), str(trial).encode())


def _rand(rng: random.Random, eta: int) -> bytes:
    return rng.getrandbits(eta).to_bytes(eta // 8, "big")


def _bit0(v: bytes) -> int:
    return (v[0] >> 7) & 1 if v else 0


ATTACKS = ("kcl-xor", "lak-auth-forge", "lak-leak", "lakp-combine-replay", "lakp-combine-link")

_DEFAULT_PROTOCOL = {
    "kcl-xor": "kcl",
    "lak-auth-forge": "lak",
    "lak-leak": "lak-stateless",
    "lakp-combine-replay": "lakp",
    "lakp-combine-link": "lakp",
}

_ALLOWED_PROTOCOL = {
    "kcl-xor": ("kcl", "kclp"),
    "lak-auth-forge": ("lak",),
    "lak-leak": ("lak-stateless",),
    "lakp-combine-replay": ("lakp",),
    "lakp-combine-link": ("lakp",),
}


def run_attack(
    attack: str,
    suite: PrimitiveSuite,
    trials: int,
    seed: int,
    protocol: str | None = None,
) -> AdvantageEstimate:
    """Run one of the bundled experiments: two worlds (same tag versus
    different tags) or a single forge-acceptance world, for `trials`
    iterations each, deterministic under the seed."""
    if attack not in ATTACKS:
        raise IncompatibleSuite(f"unknown attack {attack!r}")
    protocol = protocol or _DEFAULT_PROTOCOL[attack]
    if protocol not in _ALLOWED_PROTOCOL[attack]:
        raise IncompatibleSuite(f"attack {attack} does not run against protocol {protocol}")
    runner = {
        "kcl-xor": _attack_kcl_xor,
        "lak-auth-forge": _attack_lak_auth,
        "lak-leak": _attack_lak_leak,
        "lakp-combine-replay": _attack_lakp_replay,
        "lakp-combine-link": _attack_lakp_link,
    }[attack]
    return runner(suite, trials, seed, protocol)


def _kcl_reply(suite, rng, protocol, ident, key, challenge):
    nt = _rand(rng, suite.eta)
    if protocol == "kcl":
        first = xor_bytes(ident, nt)
    else:
        first = xor_bytes(ident, suite.hash(nt, key))
    return first, xor_bytes(nt, suite.hash(challenge, key))


def _attack_kcl_xor(suite, trials, seed, protocol):
    stats = {"full-equality": [0, 0], "first-bit-equality": [0, 0]}
    for world in (0, 1):
        for trial in range(trials):
            rng = _trial_rng(seed, "kcl-xor", world, trial)
            id_a, key_a = _rand(rng, suite.eta), _rand(rng, suite.eta)
            id_b, key_b = _rand(rng, suite.eta), _rand(rng, suite.eta)
            challenge = _rand(rng, suite.eta)
            c1, d1 = _kcl_reply(suite, rng, protocol, id_a, key_a, challenge)
            if world == 0:
                c2, d2 = _kcl_reply(suite, rng, protocol, id_a, key_a, challenge)
            else:
                c2, d2 = _kcl_reply(suite, rng, protocol, id_b, key_b, challenge)
            r1, r2 = xor_bytes(c1, d1), xor_bytes(c2, d2)
            stats["full-equality"][world] += int(r1 == r2)
            stats["first-bit-equality"][world] += int(_bit0(r1) == _bit0(r2))
    detail = {k: abs(v[0] - v[1]) / trials for k, v in stats.items()}
    best = max(detail, key=lambda k: detail[k])
    s0, s1 = stats[best]
    return _two_world_estimate(
        "kcl-xor", s0, s1, trials, detail,
        notes=(f"protocol={protocol}", f"statistic={best}",
               "distinguisher: xor of the two reply components, replayed challenge"),
    )


def _attack_lak_auth(suite, trials, seed, protocol):
    ow_key = _const_bytes("ow-public-key", suite.eta)
    accepts = 0
    for trial in range(trials):
        rng = _trial_rng(seed, "lak-auth-forge", 0, trial)
        key_a = _rand(rng, suite.eta)
        n_r = _rand(rng, suite.eta)
        n_t = _rand(rng, suite.eta)
        h1 = suite.hash(xor_bytes(xor_bytes(n_r, n_t), key_a), ow_key)
        n_r2 = _rand(rng, suite.eta)
        m1 = xor_bytes(xor_bytes(n_r2, n_r), n_t)
        accepted = suite.hash(xor_bytes(xor_bytes(n_r2, m1), key_a), ow_key) == h1
        accepts += int(accepted)
    return _single_world_estimate(
        "lak-auth-forge", accepts, trials,
        notes=("forged response reuses the observed keyed digest with a nonce shift",),
    )


def _attack_lak_leak(suite, trials, seed, protocol):
    s = [0, 0]
    for world in (0, 1):
        for trial in range(trials):
            rng = _trial_rng(seed, "lak-leak", world, trial)
            key_a, key_b = _rand(rng, suite.eta), _rand(rng, suite.eta)
            c1, c2 = _rand(rng, suite.eta), _rand(rng, suite.eta)
            n1, n2 = _rand(rng, suite.eta), _rand(rng, suite.eta)
            h1 = suite.hash(pair_encode(c1, n1), key_a)
            h2 = suite.hash(pair_encode(c2, n2), key_a if world == 0 else key_b)
            s[world] += int(_bit0(h1) == _bit0(h2))
    return _two_world_estimate(
        "lak-leak", s[0], s[1], trials,
        notes=("distinguisher compares the first digest bits of two sessions",),
    )


def _attack_lakp_replay(suite, trials, seed, protocol):
    accepts = 0
    for trial in range(trials):
        rng = _trial_rng(seed, "lakp-combine-replay", 0, trial)
        key_a = _rand(rng, suite.eta)
        n_r = _rand(rng, suite.eta)
        n_t = _rand(rng, suite.eta)
        h = suite.hash(suite.combine(n_r, n_t), key_a)
        n_r2 = _rand(rng, suite.eta)
        m1 = xor_bytes(xor_bytes(n_r, n_t), n_r2)
        accepted = suite.hash(suite.combine(n_r2, m1), key_a) == h
        accepts += int(accepted)
    return _single_world_estimate(
        "lakp-combine-replay", accepts, trials,
        notes=(f"combine={suite.combine_impl}",
               "forged nonce m1 = nR (+) nT (+) nR'; succeeds iff combine"
               " lets the two combined inputs coincide"),
    )


def _attack_lakp_link(suite, trials, seed, protocol):
    s = [0, 0]
    for world in (0, 1):
        for trial in range(trials):
            rng = _trial_rng(seed, "lakp-combine-link", world, trial)
            key_a, key_b = _rand(rng, suite.eta), _rand(rng, suite.eta)
            key_x = key_a if world == 0 else key_b
            g1 = bytes(suite.eta // 8)  # all-zero first challenge
            n_t = _rand(rng, suite.eta)
            h = suite.hash(suite.combine(g1, n_t), key_x)
            n_r2 = _rand(rng, suite.eta)
            m1 = xor_bytes(xor_bytes(g1, n_t), n_r2)
            accepted = suite.hash(suite.combine(n_r2, m1), key_a) == h
            s[world] += int(accepted)
    return _two_world_estimate(
        "lakp-combine-link", s[0], s[1], trials,
        notes=(f"combine={suite.combine_impl}",
               "two worlds: round with the reference tag vs a different tag;"
               " the observed digest is replayed through a reader session"
               " verified against the reference tag's key, so acceptance"
               " links the round to that tag",),
    )


# ---------------------------------------------------------------------------
# Empirical axiom spot-checks

def axiom_harness(
    goal: Goal,
    suite: PrimitiveSuite,
    trials: int,
    seed: int,
    adv_env: dict[str, Callable[..., bytes]] | None = None,
    label: str = "instance",
) -> AdvantageEstimate:
    """Sample both sides of a ground goal and run a canned distinguisher
    battery (first-bit frequency per position, full- and first-bit equality
    pattern across elements); reports the best observed advantage."""
    n = len(goal)
    stats: dict[str, list[int]] = {}
    for world, side in ((0, goal.left), (1, goal.right)):
        for trial in range(trials):
            names = sample_names(
                list(goal.left) + list(goal.right), suite, f"{seed}:{label}:{trial}",
            )
            env = EvalEnv(names, adv_env or {})
            vals = [eval_term(t, suite, env) for t in side]
            for i, v in enumerate(vals):
                key = f"bit0@{i}"
                stats.setdefault(key, [0, 0])[world] += _bit0(v)
            for i in range(n):
                for j in range(i + 1, n):
                    stats.setdefault(f"eq@{i},{j}", [0, 0])[world] += int(vals[i] == vals[j])
                    stats.setdefault(f"bit0eq@{i},{j}", [0, 0])[world] += int(
                        _bit0(vals[i]) == _bit0(vals[j])
                    )
    detail = {k: abs(v[0] - v[1]) / trials for k, v in stats.items()}
    best = max(detail, key=lambda k: detail[k]) if detail else "none"
    s0, s1 = stats.get(best, ([0, 0]))
    est = _two_world_estimate(label, s0, s1, trials, detail, notes=(f"best-statistic={best}",))
    return est


def battery_instances() -> list[tuple[str, Goal]]:
    """The bundled axiom instances: fresh names, xor independence, fresh-name
    disequality, collision resistance, and keyed-hash pseudo-randomness."""
    from .terms import FALSE_T, ZERO_T, eq, hash_, ite, mk_term, name, xor

    n, n2, m, a, b, k, t, t2 = (
        name("w_n"), name("w_n2"), name("w_m"), name("w_a"), name("w_b"),
        name("w_k"), name("w_t"), name("w_t2"),
    )
    fresh = Goal((n,), (n2,))
    indep = Goal((m, xor(a, n)), (m, xor(b, n)))
    eqindep = Goal((eq(n, m),), (FALSE_T,))
    cr = Goal(
        (ite(eq(t, t2), FALSE_T, eq(hash_(t, k), hash_(t2, k))),),
        (FALSE_T,),
    )
    prf = Goal((hash_(a, k),), (n,))
    prf_const = Goal((hash_(ZERO_T, k),), (n,))
    prf_two = Goal((hash_(a, k), hash_(b, k)), (n, n2))
    return [
        ("freshnonce", fresh),
        ("indep", indep),
        ("eqindep", eqindep),
        ("cr", cr),
        ("prf", prf),
        ("prf-const", prf_const),
        ("prf-two", prf_two),
    ]
