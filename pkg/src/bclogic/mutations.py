"""Single-step corruption of proof scripts.

Each mutator edits one node of a pristine script; the generator keeps a
mutant only if the checker rejects it with a failure located at or below the
mutated node (mutants that remain valid proofs are discarded, as usual in
mutation testing)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .goals import Goal
from .rewrite import is_ite
from .rules import RuleInstance, RuleKind
from .script import ProofNode, ProofScript, Verdict, check_proof
from .terms import App, Name, Term, free_names, subterms


@dataclass(frozen=True)
class Mutant:
    name: str
    path: tuple[int, ...]
    description: str
    script: ProofScript


def _nodes(script: ProofScript) -> Iterator[tuple[tuple[int, ...], ProofNode]]:
    def walk(node: ProofNode, path: tuple[int, ...]):
        yield path, node
        for i, c in enumerate(node.children):
            yield from walk(c, path + (i,))

    yield from walk(script.root, ())


def _replace(script: ProofScript, path: tuple[int, ...], new: ProofNode) -> ProofScript:
    def go(node: ProofNode, p: tuple[int, ...]) -> ProofNode:
        if not p:
            return new
        kids = list(node.children)
        kids[p[0]] = go(kids[p[0]], p[1:])
        return ProofNode(node.inst, tuple(kids))

    return ProofScript(go(script.root, path), script.goal_name)


def _with_inst(node: ProofNode, **changes) -> ProofNode:
    from dataclasses import replace as dc_replace

    return ProofNode(dc_replace(node.inst, **changes), node.children)


def _goal_names(goal: Goal) -> list[str]:
    out: set[str] = set()
    for t in goal.left + goal.right:
        out |= free_names(t)
    return sorted(out)


def _candidates(script: ProofScript, goal: Goal) -> Iterator[Mutant]:
    """All single-node corruptions, most interesting kinds first."""
    names = _goal_names(goal)
    for path, node in _nodes(script):
        k = node.inst.kind
        if k is RuleKind.CS and len(node.children) == 2:
            yield Mutant(
                "cs-branches-swapped", path,
                "the two case-split premises are exchanged",
                _replace(script, path, ProofNode(node.inst, node.children[::-1])),
            )
            from .terms import TRUE_T

            yield Mutant(
                "cs-dummy-corrupted", path,
                "the case-split dummy branch is replaced by true",
                _replace(script, path, _with_inst(node, z=tuple(TRUE_T for _ in node.inst.positions or ()))),
            )
        if k is RuleKind.TRANS and node.inst.witness:
            w = list(node.inst.witness)
            fresh_pos = [
                i for i, t in enumerate(w)
                if any(ident.startswith("nu") for ident in free_names(t))
            ]
            if fresh_pos and names:
                i = fresh_pos[0]
                nu_ident = next(x for x in sorted(free_names(w[i])) if x.startswith("nu"))
                stale = next((x for x in names if not x.startswith("nu")), None)
                if stale is not None:
                    w2 = list(w)
                    w2[i] = _rename(w[i], nu_ident, stale)
                    yield Mutant(
                        "trans-freshness-dropped", path,
                        f"the fresh intermediate {nu_ident} is replaced by the reused name {stale}",
                        _replace(script, path, _with_inst(node, witness=tuple(w2))),
                    )
            if len(w) >= 2 and w[0] is not w[1]:
                w3 = [w[1], w[0]] + w[2:]
                yield Mutant(
                    "trans-witness-swapped", path,
                    "two witness frame elements are exchanged",
                    _replace(script, path, _with_inst(node, witness=tuple(w3))),
                )
        if k is RuleKind.PRF:
            if names:
                stale = next((x for x in names if x != node.inst.fresh), None)
                if stale:
                    yield Mutant(
                        "prf-fresh-not-fresh", path,
                        f"the declared fresh name is replaced by {stale}",
                        _replace(script, path, _with_inst(node, fresh=stale)),
                    )
            other_keys = {
                n2.inst.key for _, n2 in _nodes(script)
                if n2.inst.kind is RuleKind.PRF and n2.inst.key != node.inst.key
            }
            if other_keys:
                yield Mutant(
                    "prf-wrong-key", path,
                    f"the hash key is swapped to {sorted(other_keys)[0]}",
                    _replace(script, path, _with_inst(node, key=sorted(other_keys)[0])),
                )
        if k is RuleKind.CONGR and node.inst.to_goal is not None:
            to = node.inst.to_goal
            for i, t in enumerate(to.left):
                if is_ite(t) and _is_zero(t.args[1]):
                    stripped_l = list(to.left)
                    stripped_r = list(to.right)
                    stripped_l[i] = t.args[2]
                    r = to.right[i]
                    stripped_r[i] = r.args[2] if is_ite(r) and _is_zero(r.args[1]) else r
                    try:
                        g2 = Goal(tuple(stripped_l), tuple(stripped_r))
                    except Exception:
                        continue
                    yield Mutant(
                        "congr-guard-removed", path,
                        f"the outermost collision test of element {i} is removed",
                        _replace(script, path, _with_inst(node, to_goal=g2)),
                    )
                    break
        if k is RuleKind.DUP:
            d = node.inst.drop
            ks = node.inst.keep
            for nd in (d - 1, d + 1):
                if nd >= 0 and nd != ks:
                    yield Mutant(
                        "dup-wrong-position", path,
                        f"the duplicate-removal position moves from {d} to {nd}",
                        _replace(script, path, _with_inst(node, drop=nd)),
                    )
                    break
        if k is RuleKind.PERM and node.inst.order and len(node.inst.order) >= 2:
            o = list(node.inst.order)
            o[0], o[1] = o[1], o[0]
            yield Mutant(
                "perm-corrupted", path,
                "two entries of the permutation are exchanged",
                _replace(script, path, _with_inst(node, order=tuple(o))),
            )
        if k is RuleKind.FA:
            yield Mutant(
                "fa-wrong-position", path,
                f"the unfolding position moves from {node.inst.pos} to {max(0, node.inst.pos - 1)}",
                _replace(script, path, _with_inst(node, pos=max(0, node.inst.pos - 1))),
            )
        if k is RuleKind.FRESHNONCE:
            yield Mutant(
                "freshnonce-wrong-position", path,
                "the dropped element is not the fresh name",
                _replace(script, path, _with_inst(node, pos=max(0, (node.inst.pos or 0) - 1))),
            )
        if k is RuleKind.INDEP and node.inst.name_left and names:
            stale = next((x for x in names if x != node.inst.name_left), None)
            if stale:
                yield Mutant(
                    "indep-wrong-name", path,
                    f"the independence name is replaced by {stale}",
                    _replace(script, path, _with_inst(node, name_left=stale, name_right=stale)),
                )
        if k is RuleKind.IFTHEN and node.inst.subpath is not None:
            yield Mutant(
                "ifthen-wrong-occurrence", path,
                "the rewritten occurrence path is corrupted",
                _replace(script, path, _with_inst(node, subpath=node.inst.subpath + (0,))),
            )
        if node.children:
            yield Mutant(
                "subtree-refl-stub", path,
                "a non-leaf subtree is replaced by a bare reflexivity claim",
                _replace(script, path, ProofNode(RuleInstance(RuleKind.REFL), ())),
            )
            yield Mutant(
                "subtree-absurd-stub", path,
                "a non-leaf subtree is replaced by the non-paper absurdity closer",
                _replace(script, path, ProofNode(RuleInstance(RuleKind.ABSURD), ())),
            )


def _is_zero(t: Term) -> bool:
    from .terms import ZERO_T

    return t is ZERO_T


def _rename(t: Term, old: str, new: str) -> Term:
    from .terms import mk_term, name as name_

    if isinstance(t, Name):
        return name_(new) if t.ident == old else t
    if isinstance(t, App):
        return mk_term(t.sym, [_rename(a, old, new) for a in t.args])
    return t


def _localized(verdict: Verdict, path: tuple[int, ...]) -> bool:
    if verdict.accepted or verdict.failure is None:
        return False
    fail_path = verdict.failure[0]
    prefix = ".".join(str(i) for i in path) if path else "root"
    if prefix == "root":
        return True
    return fail_path == prefix or fail_path.startswith(prefix + ".")


def build_mutants(goal: Goal, script: ProofScript, want: int = 12, per_kind: int = 2) -> list[Mutant]:
    """Verified-rejected single-step corruptions, chosen round-robin across
    mutator kinds (at most `per_kind` each), every one rejected with a
    failure located at or below its node."""
    by_kind: dict[str, list[Mutant]] = {}
    for cand in _candidates(script, goal):
        bucket = by_kind.setdefault(cand.name, [])
        if len(bucket) >= per_kind:
            continue
        verdict = check_proof(cand.script, goal)
        if verdict.accepted or not _localized(verdict, cand.path):
            continue
        bucket.append(cand)
    out: list[Mutant] = []
    round_ = 0
    while len(out) < want:
        picked = False
        for kind in sorted(by_kind):
            bucket = by_kind[kind]
            if round_ < len(bucket):
                out.append(bucket[round_])
                picked = True
                if len(out) >= want:
                    break
        if not picked:
            break
        round_ += 1
    return out
