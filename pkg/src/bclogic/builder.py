"""Goal-tracking helper for constructing proof scripts programmatically."""

from __future__ import annotations

from .goals import Goal
from .rules import RuleInstance, RuleKind, apply_rule
from .terms import Term


class Deriv:
    """A node under construction: applying a rule fixes the node and yields
    its premise subgoals as child nodes."""

    def __init__(self, goal: Goal):
        self.goal = goal
        self.inst: RuleInstance | None = None
        self.children: list[Deriv] = []

    def apply(self, inst: RuleInstance) -> list["Deriv"]:
        if self.inst is not None:
            raise RuntimeError("rule already applied at this node")
        subgoals = apply_rule(inst, self.goal)
        self.inst = inst
        self.children = [Deriv(g) for g in subgoals]
        return self.children

    def only(self, inst: RuleInstance) -> "Deriv":
        kids = self.apply(inst)
        if len(kids) != 1:
            raise RuntimeError(f"expected a single premise, got {len(kids)}")
        return kids[0]

    # Shorthands for the common rules; each returns the focused premise.
    def refl(self) -> None:
        self.apply(RuleInstance(RuleKind.REFL))

    def sym(self) -> "Deriv":
        return self.only(RuleInstance(RuleKind.SYM))

    def fa(self, pos: int) -> "Deriv":
        return self.only(RuleInstance(RuleKind.FA, pos=pos))

    def dup(self, keep: int, drop: int) -> "Deriv":
        return self.only(RuleInstance(RuleKind.DUP, keep=keep, drop=drop))

    def perm(self, order: list[int]) -> "Deriv":
        return self.only(RuleInstance(RuleKind.PERM, order=tuple(order)))

    def freshnonce(self, pos: int) -> "Deriv":
        return self.only(RuleInstance(RuleKind.FRESHNONCE, pos=pos))

    def indep(self, pos: int, ident: str, right_ident: str | None = None) -> "Deriv":
        return self.only(RuleInstance(
            RuleKind.INDEP, pos=pos, name_left=ident, name_right=right_ident,
        ))

    def congr(self, to: Goal) -> "Deriv":
        return self.only(RuleInstance(RuleKind.CONGR, to_goal=to))

    def trans(self, witness: list[Term]) -> tuple["Deriv", "Deriv"]:
        a, b = self.apply(RuleInstance(RuleKind.TRANS, witness=tuple(witness)))
        return a, b

    def prf(self, pos: int, key: str, fresh: str) -> None:
        self.apply(RuleInstance(RuleKind.PRF, pos=pos, key=key, fresh=fresh))

    def cs(self, positions: list[int], z: list[Term] | None = None) -> tuple["Deriv", "Deriv"]:
        a, b = self.apply(RuleInstance(
            RuleKind.CS, positions=tuple(positions), z=tuple(z) if z is not None else None,
        ))
        return a, b

    def ifthen(self, pos: int, side: str, path: tuple[int, ...], subpath: tuple[int, ...]) -> "Deriv":
        return self.only(RuleInstance(
            RuleKind.IFTHEN, pos=pos, side=side, path=path, subpath=subpath,
        ))

    def prng(self, seed: str) -> None:
        self.apply(RuleInstance(RuleKind.PRNG, seed=seed))

    def unfinished(self) -> list["Deriv"]:
        out = []
        if self.inst is None:
            out.append(self)
        for c in self.children:
            out.extend(c.unfinished())
        return out
