"""Atomic equivalence formulas: two equal-length, pointwise equal-sort
sequences of ground terms."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ShapeMismatch, SortMismatch
from .terms import Term


@dataclass(frozen=True)
class Goal:
    left: tuple[Term, ...]
    right: tuple[Term, ...]

    def __post_init__(self) -> None:
        if len(self.left) != len(self.right):
            raise ShapeMismatch(
                f"sides have different lengths ({len(self.left)} vs {len(self.right)})"
            )
        for i, (l, r) in enumerate(zip(self.left, self.right)):
            if l.sort is not r.sort:
                raise SortMismatch(f"element {i}: sorts {l.sort} vs {r.sort}")
            if not (l.ground and r.ground):
                raise ShapeMismatch(f"element {i} is not ground")

    def __len__(self) -> int:
        return len(self.left)

    def replace(self, i: int, left: list[Term], right: list[Term]) -> "Goal":
        """New goal with element i replaced by the given segments."""
        return Goal(
            self.left[:i] + tuple(left) + self.left[i + 1:],
            self.right[:i] + tuple(right) + self.right[i + 1:],
        )

    def drop(self, i: int) -> "Goal":
        return Goal(self.left[:i] + self.left[i + 1:], self.right[:i] + self.right[i + 1:])
