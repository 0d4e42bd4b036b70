"""Exact counts and exhaustive generation of quadrangulations with boundary.

``count(ell, faces)`` tabulates the number of rooted quadrangulations with
boundary length ``2*ell`` and ``faces`` internal faces through the one-step
peeling recurrence: the first peel either attaches a face (semi-perimeter
grows by one, one face consumed) or splits the hole into two independent
lobes.  ``generate_all`` walks the same tree but builds every map, which
makes the two entry points independent checks of each other.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

from .errors import BudgetExceeded, DivisionByZero, OutOfBounds
from .maps import MapWithHoles
from .peeling import T1, initial_exploration, peel, possible_events

__all__ = ["count", "completions", "generate_all", "growth_ratio"]

_N: dict[tuple[int, int], int] = {(0, 0): 1}
_filled: tuple[int, int] = (0, 0)  # trapezoid corner already tabulated


def _ensure(total: int, max_faces: int) -> None:
    """Fill N(ell, f) for all f <= max_faces, ell + f <= total."""
    global _filled
    old_total, old_faces = _filled
    if total <= old_total and max_faces <= old_faces:
        return
    total = max(total, old_total)
    max_faces = max(max_faces, old_faces)
    for f in range(max_faces + 1):
        for ell in range(total - f + 1):
            if (ell, f) in _N:
                continue
            if ell == 0:
                _N[(ell, f)] = 0  # no boundary left and faces still to place
                continue
            acc = _N[(ell + 1, f - 1)] if f > 0 else 0
            for l1 in range(ell):
                l2 = ell - 1 - l1
                acc += sum(
                    _N[(l1, f1)] * _N[(l2, f - f1)] for f1 in range(f + 1)
                )
            _N[(ell, f)] = acc
    _filled = (total, max_faces)


def count(ell: int, faces: int) -> int:
    """Number of quadrangulations with semi-perimeter ``ell`` and ``faces``
    internal faces.  Exact integer.

    Raises:
        OutOfBounds: ``ell < 1`` or ``faces < 0``.
    """
    if ell < 1 or faces < 0:
        raise OutOfBounds(f"count({ell}, {faces})")
    _ensure(ell + faces, faces)
    return _N[(ell, faces)]


@lru_cache(maxsize=None)
def _completions_sorted(sps: tuple[int, ...], faces: int) -> int:
    if faces < 0:
        return 0
    if not sps:
        return 1 if faces == 0 else 0
    head = sps[0]
    rest = sps[1:]
    return sum(
        count(head, f1) * _completions_sorted(rest, faces - f1)
        for f1 in range(faces + 1)
    )


def completions(sps: Sequence[int], faces: int) -> int:
    """Ways to fill holes of the given semi-perimeters with ``faces`` faces
    in total.  Order-independent."""
    if faces < 0:
        raise OutOfBounds(f"completions(..., {faces})")
    return _completions_sorted(tuple(sorted(sps)), faces)


def generate_all(
    ell: int, faces: int, budget: Optional[int] = None
) -> list[MapWithHoles]:
    """Every quadrangulation with this boundary and face count, each built
    by replaying a branch of the peeling tree.

    Results come in lexicographic order of their event codes (T1 before
    splits, splits by labels).  ``budget`` caps the result count.

    Raises:
        OutOfBounds: parameters outside the tabulated domain.
        BudgetExceeded: more maps than ``budget``.
    """
    if ell < 1 or faces < 0:
        raise OutOfBounds(f"generate_all({ell}, {faces})")
    results: list[MapWithHoles] = []
    start = initial_exploration(ell)
    if completions((ell,), faces) == 0:
        return results
    stack: list[tuple[MapWithHoles, int]] = [(start, 0)]
    while stack:
        e, used = stack.pop()
        if not e.holes:
            if used == faces:
                if budget is not None and len(results) >= budget:
                    raise BudgetExceeded(f"more than {budget} maps")
                results.append(e)
            continue
        dart = e.holes[0]
        sp = e.hole_semi_perimeter(0)
        for event in reversed(possible_events(sp)):
            used2 = used + (0 if event.is_split else 1)
            if used2 > faces:
                continue
            e2 = peel(e, dart, event)
            sps = [e2.hole_semi_perimeter(i) for i in range(e2.n_holes)]
            if completions(sps, faces - used2) > 0:
                stack.append((e2, used2))
    return results


def growth_ratio(ell: int, faces: int) -> Fraction:
    """count(ell, faces + 1) / count(ell, faces), exact.

    Raises:
        OutOfBounds: ``faces < 0``.
        DivisionByZero: the denominator count is zero.
    """
    denom = count(ell, faces)
    if denom == 0:
        raise DivisionByZero(f"count({ell}, {faces}) = 0")
    return Fraction(count(ell, faces + 1), denom)
