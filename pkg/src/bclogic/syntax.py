"""Text syntax: lexer, term parser/printer, and goal files.

Prefix application `hash(nR, kA)`, infix `u (+) v` for xor, `<u, v>` for
pairing, `if b then x else y` for conditionals.  Names and extra symbols are
declared in a header.  Parser and printer round-trip exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ParseError, UnboundSymbol
from .goals import Goal
from .terms import (
    BUILTIN_SYMBOLS, COMBINE, EQ, FALSE_T, GEN, HASH, HOLE_IDENT, INIT, ITE,
    PAIR, PI_O, PI_S, PROJ1, PROJ2, TRUE_T, XOR, ZERO_T,
    App, MetaVar, Name, Sort, Symbol, SymbolKind, Term,
    adv_symbol, const_symbol, free_names, label_symbol, metavar, mk_term, name,
    subterms,
)

# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""(?P<ws>[ \t\r\n]+)
      | (?P<comment>;[^\n]*)
      | (?P<xorop>\(\+\))
      | (?P<arrow>->)
      | (?P<ident>[$#@]?[A-Za-z_][A-Za-z0-9_{}]*'*)
      | (?P<int>[0-9]+)
      | (?P<punct>[()<>,~=\[\]:])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def lex(text: str) -> list[Token]:
    out: list[Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup or ""
        tok = m.group(0)
        if kind not in ("ws", "comment"):
            k = tok if kind == "punct" else kind
            out.append(Token(k, tok, line, col))
        nl = tok.count("\n")
        if nl:
            line += nl
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)
        pos = m.end()
    out.append(Token("eof", "", line, col))
    return out


class TokenStream:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        t = self.tokens[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, kind: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            raise ParseError(f"expected {kind!r}, found {t.text!r}", t.line, t.col)
        return self.next()

    def at_ident(self, text: str) -> bool:
        t = self.peek()
        return t.kind == "ident" and t.text == text


# ---------------------------------------------------------------------------
# Declarations / symbol environment

_BUILTIN_FUNS: dict[str, Symbol] = {
    s.name: s for s in BUILTIN_SYMBOLS if s.arity > 0 and s not in (PAIR, XOR, ITE)
}

_SORT_NAMES = {"bool": Sort.BOOL, "nonce": Sort.NONCE, "msg": Sort.MSG}

_DECL_KEYWORDS = {"names", "consts", "labels", "fun", "adv", "goal", "context"}


@dataclass
class TemplateScope:
    """Extra identifiers available inside protocol action templates: `$x`
    memory reads, `#n` per-step fresh names, `@g` adversarial calls."""

    loc_sorts: dict[str, Sort]
    fresh: set[str]
    advs: dict[str, Sort]


@dataclass
class SymbolEnv:
    """Declared identifiers available to the term parser."""

    names: set[str] = field(default_factory=set)
    consts: dict[str, Symbol] = field(default_factory=dict)
    funs: dict[str, Symbol] = field(default_factory=dict)
    advs: dict[str, Sort] = field(default_factory=dict)
    allow_hole: bool = False
    template_scope: TemplateScope | None = None

    def declare_name(self, ident: str) -> None:
        self._check_free(ident)
        self.names.add(ident)

    def declare_const(self, ident: str, sort: Sort, distinct: bool = False) -> None:
        self._check_free(ident)
        self.consts[ident] = const_symbol(ident, sort, distinct)

    def declare_label(self, ident: str) -> None:
        self._check_free(ident)
        self.consts[ident] = label_symbol(ident)

    def declare_fun(self, ident: str, args: tuple[Sort, ...], result: Sort) -> None:
        self._check_free(ident)
        from .terms import Signature

        self.funs[ident] = Symbol(ident, SymbolKind.HONEST, (Signature(args, result),))

    def declare_adv(self, ident: str, result: Sort = Sort.MSG) -> None:
        self._check_free(ident)
        self.advs[ident] = result

    def _check_free(self, ident: str) -> None:
        if (
            ident in self.names or ident in self.consts or ident in self.funs
            or ident in self.advs or ident in _BUILTIN_FUNS
        ):
            raise ParseError(f"identifier {ident!r} already declared")


# ---------------------------------------------------------------------------
# Term parser

def _parse_term(ts: TokenStream, env: SymbolEnv) -> Term:
    if ts.at_ident("if"):
        ts.next()
        b = _parse_term(ts, env)
        if not ts.at_ident("then"):
            t = ts.peek()
            raise ParseError("expected 'then'", t.line, t.col)
        ts.next()
        x = _parse_term(ts, env)
        if not ts.at_ident("else"):
            t = ts.peek()
            raise ParseError("expected 'else'", t.line, t.col)
        ts.next()
        y = _parse_term(ts, env)
        return mk_term(ITE, (b, x, y))
    t = _parse_atom(ts, env)
    while ts.peek().kind == "xorop":
        ts.next()
        rhs = _parse_atom(ts, env)
        t = mk_term(XOR, (t, rhs))
    return t


def _parse_atom(ts: TokenStream, env: SymbolEnv) -> Term:
    tok = ts.peek()
    if tok.kind == "(":
        ts.next()
        t = _parse_term(ts, env)
        ts.expect(")")
        return t
    if tok.kind == "<":
        ts.next()
        a = _parse_term(ts, env)
        ts.expect(",")
        b = _parse_term(ts, env)
        ts.expect(">")
        return mk_term(PAIR, (a, b))
    if tok.kind == "int":
        if tok.text == "0":
            ts.next()
            return ZERO_T
        raise ParseError(f"unexpected number {tok.text!r}", tok.line, tok.col)
    if tok.kind == "ident":
        ts.next()
        ident = tok.text
        if ts.peek().kind == "(":
            ts.next()
            args: list[Term] = []
            if ts.peek().kind != ")":
                args.append(_parse_term(ts, env))
                while ts.peek().kind == ",":
                    ts.next()
                    args.append(_parse_term(ts, env))
            ts.expect(")")
            return _apply(ident, args, env, tok)
        return _atom_ident(ident, env, tok)
    raise ParseError(f"unexpected token {tok.text!r}", tok.line, tok.col)


def _apply(ident: str, args: list[Term], env: SymbolEnv, tok: Token) -> Term:
    sym = env.funs.get(ident) or _BUILTIN_FUNS.get(ident)
    if sym is not None:
        return mk_term(sym, args)
    if ident in env.advs:
        return mk_term(adv_symbol(ident, len(args), env.advs[ident]), args)
    raise ParseError(f"unknown function symbol {ident!r}", tok.line, tok.col)


def _atom_ident(ident: str, env: SymbolEnv, tok: Token) -> Term:
    if ident == "true":
        return TRUE_T
    if ident == "false":
        return FALSE_T
    if ident == HOLE_IDENT and env.allow_hole:
        return metavar(HOLE_IDENT, Sort.NONCE)
    if ident[0] in "$#@":
        scope = env.template_scope
        if scope is None:
            raise ParseError(f"template variable {ident!r} outside a template", tok.line, tok.col)
        base = ident[1:]
        if ident[0] == "$":
            if base not in scope.loc_sorts:
                raise ParseError(f"unknown location {base!r}", tok.line, tok.col)
            return metavar(ident, scope.loc_sorts[base])
        if ident[0] == "#":
            if base not in scope.fresh:
                raise ParseError(f"undeclared fresh name {base!r}", tok.line, tok.col)
            return metavar(ident, Sort.NONCE)
        return metavar(ident, scope.advs.get(base, Sort.MSG))
    if ident in env.names:
        return name(ident)
    if ident in env.consts:
        return mk_term(env.consts[ident])
    raise ParseError(f"undeclared identifier {ident!r}", tok.line, tok.col)


def parse_term(text: str, env: SymbolEnv) -> Term:
    ts = TokenStream(lex(text))
    t = _parse_term(ts, env)
    tok = ts.peek()
    if tok.kind != "eof":
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
    return t


# ---------------------------------------------------------------------------
# Printer (canonical; exact round-trip with the parser)

def print_term(t: Term) -> str:
    if isinstance(t, Name):
        return t.ident
    if isinstance(t, MetaVar):
        return t.ident if t.ident == HOLE_IDENT else f"?{t.ident}"
    assert isinstance(t, App)
    sym = t.sym
    if sym is PAIR:
        return f"<{print_term(t.args[0])}, {print_term(t.args[1])}>"
    if sym is XOR:
        return f"{_atom_str(t.args[0])} (+) {_atom_str(t.args[1])}"
    if sym is ITE:
        b, x, y = t.args
        return f"if {print_term(b)} then {print_term(x)} else {print_term(y)}"
    if not t.args:
        if sym.kind is SymbolKind.ADVERSARIAL:
            return f"{sym.name}()"
        return sym.name
    inner = ", ".join(print_term(a) for a in t.args)
    return f"{sym.name}({inner})"


def _atom_str(t: Term) -> str:
    s = print_term(t)
    if isinstance(t, App) and (t.sym is XOR or t.sym is ITE):
        return f"({s})"
    return s


def print_goal(g: Goal) -> str:
    left = ", ".join(print_term(t) for t in g.left)
    right = ", ".join(print_term(t) for t in g.right)
    return f"{left} ~ {right}" if g.left else "~"


# ---------------------------------------------------------------------------
# Goal files

@dataclass
class GoalFile:
    env: SymbolEnv
    goals: dict[str, Goal]
    contexts: dict[str, Term] = field(default_factory=dict)


def _parse_sort(ts: TokenStream) -> Sort:
    tok = ts.expect("ident")
    if tok.text not in _SORT_NAMES:
        raise ParseError(f"unknown sort {tok.text!r}", tok.line, tok.col)
    return _SORT_NAMES[tok.text]


def _parse_ident_list(ts: TokenStream) -> list[str]:
    out = [ts.expect("ident").text]
    while ts.peek().kind == "ident" and ts.peek().text not in _DECL_KEYWORDS:
        out.append(ts.next().text)
    return out


def _parse_termlist(ts: TokenStream, env: SymbolEnv, stop: set[str]) -> list[Term]:
    out = [_parse_term(ts, env)]
    while ts.peek().kind == ",":
        ts.next()
        out.append(_parse_term(ts, env))
    return out


def parse_goal_file(text: str) -> GoalFile:
    ts = TokenStream(lex(text))
    env = SymbolEnv()
    goals: dict[str, Goal] = {}
    contexts: dict[str, Term] = {}
    while ts.peek().kind != "eof":
        tok = ts.expect("ident")
        kw = tok.text
        if kw == "names":
            for ident in _parse_ident_list(ts):
                env.declare_name(ident)
        elif kw == "consts":
            idents = _parse_ident_list(ts)
            ts.expect(":")
            sort = _parse_sort(ts)
            distinct = False
            if ts.at_ident("distinct"):
                ts.next()
                distinct = True
            for ident in idents:
                env.declare_const(ident, sort, distinct)
        elif kw == "labels":
            for ident in _parse_ident_list(ts):
                env.declare_label(ident)
        elif kw == "fun":
            ident = ts.expect("ident").text
            ts.expect(":")
            args: list[Sort] = []
            while not ts.peek().kind == "arrow":
                args.append(_parse_sort(ts))
            ts.expect("arrow")
            result = _parse_sort(ts)
            env.declare_fun(ident, tuple(args), result)
        elif kw == "adv":
            idents = _parse_ident_list(ts)
            result = Sort.MSG
            if ts.peek().kind == ":":
                ts.next()
                result = _parse_sort(ts)
            for ident in idents:
                env.declare_adv(ident, result)
        elif kw == "goal":
            gname = ts.expect("ident").text
            ts.expect("=")
            left = [] if ts.peek().kind == "~" else _parse_termlist(ts, env, _DECL_KEYWORDS)
            ts.expect("~")
            right = [] if _at_decl_or_eof(ts) else _parse_termlist(ts, env, _DECL_KEYWORDS)
            goals[gname] = Goal(tuple(left), tuple(right))
        elif kw == "context":
            cname = ts.expect("ident").text
            ts.expect("=")
            env.allow_hole = True
            contexts[cname] = _parse_term(ts, env)
            env.allow_hole = False
        else:
            raise ParseError(f"unknown declaration {kw!r}", tok.line, tok.col)
    return GoalFile(env, goals, contexts)


def _at_decl_or_eof(ts: TokenStream) -> bool:
    tok = ts.peek()
    return tok.kind == "eof" or (tok.kind == "ident" and tok.text in _DECL_KEYWORDS)


def serialize_goal_file(goals: dict[str, Goal], header_comment: str = "") -> str:
    """Deterministic goal-file text with declarations collected from the goals."""
    names: set[str] = set()
    consts: dict[str, Symbol] = {}
    advs: dict[str, Sort] = {}
    funs: dict[str, Symbol] = {}
    builtin_names = {s.name for s in BUILTIN_SYMBOLS}
    for g in goals.values():
        for t in list(g.left) + list(g.right):
            for s in subterms(t):
                if isinstance(s, Name):
                    names.add(s.ident)
                elif isinstance(s, App):
                    sym = s.sym
                    if sym.kind is SymbolKind.ADVERSARIAL:
                        advs[sym.name] = sym.signatures[0].result
                    elif sym.name not in builtin_names:
                        if sym.arity == 0:
                            consts[sym.name] = sym
                        else:
                            funs[sym.name] = sym
    lines: list[str] = []
    if header_comment:
        for ln in header_comment.splitlines():
            lines.append(f"; {ln}")
    if names:
        lines.append("names " + " ".join(sorted(names)))
    groups: dict[tuple[Sort, bool], list[str]] = {}
    for ident, sym in consts.items():
        sig = sym.signatures[0]
        groups.setdefault((sig.result, sym.distinct), []).append(ident)
    for (sort, distinct), idents in sorted(groups.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
        if sort is Sort.MSG and distinct:
            lines.append("labels " + " ".join(sorted(idents)))
        else:
            suffix = " distinct" if distinct else ""
            lines.append(f"consts {' '.join(sorted(idents))} : {sort}{suffix}")
    for ident, sym in sorted(funs.items()):
        sig = sym.signatures[0]
        args = " ".join(str(s) for s in sig.args)
        lines.append(f"fun {ident} : {args} -> {sig.result}")
    for result in (Sort.MSG, Sort.NONCE, Sort.BOOL):
        group = sorted(ident for ident, r in advs.items() if r is result)
        if group:
            suffix = "" if result is Sort.MSG else f" : {result}"
            lines.append("adv " + " ".join(group) + suffix)
    for gname, g in goals.items():
        lines.append("")
        lines.append(f"goal {gname} =")
        lines.append("  " + ", ".join(print_term(t) for t in g.left))
        lines.append("  ~ " + ", ".join(print_term(t) for t in g.right))
    return "\n".join(lines) + "\n"
