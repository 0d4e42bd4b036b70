"""Edge-by-edge exploration of quadrangulations with boundary.

An exploration state is a map with holes.  Peeling an active dart reveals
what sits on the far side of its edge:

* a first-kind step attaches a fresh quadrangular face to the edge, growing
  that hole's semi-perimeter by one;
* a second-kind step, written ``T2(l1, l2)``, identifies the peeled edge with
  another edge of the same hole, splitting the hole into two lobes of
  semi-perimeters ``l1`` and ``l2`` (empty lobes vanish).  ``l1`` counts the
  lobe swept first when walking the hole from the peeled dart.

The canonical exploration always peels the marked dart of the first hole.
Its event sequence is a complete code for the map: ``encode`` / ``decode``
convert between maps and comma-separated event strings like
``"T1,T2(0,1),T2(0,0)"``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .errors import (
    AlgorithmReturnedInactiveDart,
    NotActive,
    NotAHole,
    NotSubmap,
    SplitArityMismatch,
    UnsupportedHoleTopology,
)
from .maps import MapWithHoles, RotationMap, root_embedding

__all__ = [
    "PeelEvent",
    "T1",
    "initial_exploration",
    "possible_events",
    "peel",
    "peel_type_of",
    "ExplorationStep",
    "explore",
    "canonical_algorithm",
    "encode",
    "decode",
    "replay",
]

_EVENT_RE = re.compile(r"^T2\((\d+),(\d+)\)$")


@dataclass(frozen=True)
class PeelEvent:
    """One peeling step: ``T1`` or ``T2(l1, l2)``."""

    kind: str
    l1: int = -1
    l2: int = -1

    @staticmethod
    def t1() -> "PeelEvent":
        return T1

    @staticmethod
    def t2(l1: int, l2: int) -> "PeelEvent":
        if l1 < 0 or l2 < 0:
            raise SplitArityMismatch(f"negative lobe sizes ({l1},{l2})")
        return PeelEvent("T2", l1, l2)

    @staticmethod
    def parse(token: str) -> "PeelEvent":
        token = token.strip()
        if token == "T1":
            return T1
        m = _EVENT_RE.match(token)
        if not m:
            raise NotAHole(f"unparseable peel event {token!r}")
        return PeelEvent.t2(int(m.group(1)), int(m.group(2)))

    @property
    def is_split(self) -> bool:
        return self.kind == "T2"

    def sort_key(self) -> tuple[int, int, int]:
        """T1 first, then splits by (l1, l2) numerically."""
        return (0, 0, 0) if self.kind == "T1" else (1, self.l1, self.l2)

    def __str__(self) -> str:
        return "T1" if self.kind == "T1" else f"T2({self.l1},{self.l2})"


T1 = PeelEvent("T1")


def initial_exploration(ell: int) -> MapWithHoles:
    """The minimal exploration state of semi-perimeter ``ell``.

    A cycle of 2*ell edges (a doubled path for ell == 1 means two vertices
    joined by one edge, walked from both sides): the root face in front, a
    single hole of the same semi-perimeter behind, marked next to the root.
    """
    if ell < 1:
        raise NotAHole(f"semi-perimeter must be >= 1, got {ell}")
    n = 4 * ell
    alpha = [0] * n
    phi = [0] * n
    for i in range(2 * ell):
        alpha[2 * i] = 2 * i + 1
        alpha[2 * i + 1] = 2 * i
        phi[2 * i] = (2 * i + 2) % n
        phi[2 * i + 1] = (2 * i - 1) % n
    return MapWithHoles(RotationMap.from_phi(alpha, phi, 0), holes=(1,))


def possible_events(hole_semi_perimeter: int) -> tuple[PeelEvent, ...]:
    """All events a peel of a hole with this semi-perimeter can produce,
    in canonical order: T1, then T2(0, p-1) .. T2(p-1, 0)."""
    p = hole_semi_perimeter
    return (T1,) + tuple(PeelEvent.t2(l1, p - 1 - l1) for l1 in range(p))


def peel(e: MapWithHoles, dart: int, event: PeelEvent) -> MapWithHoles:
    """Apply one peeling step at an active dart.

    Raises:
        NotActive: ``dart`` is not on a hole boundary.
        SplitArityMismatch: split labels do not sum to the hole's
            semi-perimeter minus one.
        UnsupportedHoleTopology: the split would identify the peeled edge
            with its own reverse.
    """
    base = e.base
    if dart not in e.active_darts:
        raise NotActive(f"dart {dart} is not on a hole boundary")
    h = e.hole_faces.index(base.face_of[dart])
    sp_h = e.hole_semi_perimeter(h)
    n = base.n_darts
    walk = base.face_walk(dart)

    if not event.is_split:
        n0, n1, n2, n3, n4, n5 = range(n, n + 6)
        alpha = list(base.alpha) + [n1, n0, n3, n2, n5, n4]
        phi = list(base.phi) + [0] * 6
        pred, old_next = walk[-1], phi[dart]
        # fresh face walk: dart -> n0 -> n2 -> n4
        phi[dart], phi[n0], phi[n2], phi[n4] = n0, n2, n4, dart
        # the hole boundary detours around it: .. pred -> n5 -> n3 -> n1 -> ..
        phi[pred], phi[n5], phi[n3], phi[n1] = n5, n3, n1, old_next
        holes = list(e.holes)
        if holes[h] == dart:
            holes[h] = n5
        return MapWithHoles(RotationMap.from_phi(alpha, phi, base.root), holes)

    if event.l1 + event.l2 != sp_h - 1:
        raise SplitArityMismatch(
            f"T2({event.l1},{event.l2}) on a hole of semi-perimeter {sp_h}"
        )
    k = 2 * event.l1 + 1
    partner = walk[k]
    if partner == base.alpha[dart]:
        raise UnsupportedHoleTopology("split would identify an edge with itself")
    alpha = list(base.alpha)
    phi = list(base.phi)
    ca, cb = alpha[dart], alpha[partner]
    alpha[ca], alpha[cb] = cb, ca
    arc1, arc2 = walk[1:k], walk[k + 1:]
    if arc1:
        phi[arc1[-1]] = arc1[0]
    if arc2:
        phi[arc2[-1]] = arc2[0]

    survivors = [d for d in range(n) if d != dart and d != partner]
    new_id = {d: i for i, d in enumerate(survivors)}
    mark = e.holes[h]
    lobes = []
    for arc in (arc1, arc2):
        if arc:
            lobes.append(mark if mark in arc else arc[0])
    holes = [*e.holes[:h], *lobes, *e.holes[h + 1:]]
    return MapWithHoles(
        RotationMap.from_phi(
            [new_id[alpha[d]] for d in survivors],
            [new_id[phi[d]] for d in survivors],
            new_id[base.root],
        ),
        [new_id[m] for m in holes],
    )


def peel_type_of(e: MapWithHoles, dart: int, q: MapWithHoles) -> PeelEvent:
    """The event that peeling ``dart`` produces when ``q`` is the true map.

    Raises:
        NotActive: ``dart`` is not on a hole boundary of ``e``.
        NotSubmap: ``e`` does not embed in ``q`` root-to-root.
        UnsupportedHoleTopology: the revealed identification leaves the
            peeled hole (impossible for explorations of planar maps).
    """
    if dart not in e.active_darts:
        raise NotActive(f"dart {dart} is not on a hole boundary")
    iota = root_embedding(e, q)
    if iota is None:
        raise NotSubmap("exploration does not embed in the target map")
    interior_side = e.alpha[dart]
    if interior_side in e.active_darts:
        raise UnsupportedHoleTopology("peeled edge lies between two holes")
    crossed = q.alpha[iota[interior_side]]
    image = {}
    for d, D in enumerate(iota):
        if D >= 0:
            image[D] = d
    if crossed not in image:
        return T1
    partner = e.alpha[image[crossed]]
    if partner not in e.active_darts:
        raise UnsupportedHoleTopology("identified edge is interior")
    base = e.base
    if base.face_of[partner] != base.face_of[dart]:
        raise UnsupportedHoleTopology("identified edge lies on another hole")
    walk = base.face_walk(dart)
    k = walk.index(partner)
    # holes have even degree so a same-hole identification sits at odd range
    sp_h = len(walk) // 2
    return PeelEvent.t2((k - 1) // 2, sp_h - 1 - (k - 1) // 2)


@dataclass(frozen=True)
class ExplorationStep:
    """State before a peel, the dart peeled, and the resulting event."""

    state: MapWithHoles
    dart: int
    event: PeelEvent


def canonical_algorithm(e: MapWithHoles) -> Optional[int]:
    """Peel the marked dart of the first hole; stop when none remain."""
    return e.holes[0] if e.holes else None


def explore(
    q: MapWithHoles,
    algorithm: Callable[[MapWithHoles], Optional[int]] = canonical_algorithm,
    max_steps: Optional[int] = None,
) -> tuple[MapWithHoles, list[ExplorationStep]]:
    """Drive a peeling exploration of ``q``.

    ``algorithm`` maps each state to the active dart to peel next, or None to
    stop early.  Returns the final state and the step log.

    Raises:
        AlgorithmReturnedInactiveDart: the algorithm chose a non-active dart.
        NotSubmap: ``q`` is not a quadrangulation with this boundary (some
            state failed to embed).
    """
    e = initial_exploration(q.semi_perimeter)
    steps: list[ExplorationStep] = []
    while e.holes and (max_steps is None or len(steps) < max_steps):
        dart = algorithm(e)
        if dart is None:
            break
        if dart not in e.active_darts:
            raise AlgorithmReturnedInactiveDart(f"dart {dart}")
        event = peel_type_of(e, dart, q)
        steps.append(ExplorationStep(e, dart, event))
        e = peel(e, dart, event)
    return e, steps


def encode(q: MapWithHoles) -> str:
    """Canonical event code of a full map (no holes left unexplored)."""
    final, steps = explore(q)
    if final.holes:
        raise NotAHole("map still has holes after canonical exploration")
    return ",".join(str(s.event) for s in steps)


def replay(
    ell: int, events: Sequence[PeelEvent], allow_partial: bool = False
) -> MapWithHoles:
    """Replay peel events canonically (always on the first hole's mark).

    Raises:
        NotAHole: events continue after the exploration closed, or (unless
            ``allow_partial``) stop while holes remain.
        SplitArityMismatch: a split is inconsistent with its hole size.
    """
    e = initial_exploration(ell)
    for event in events:
        if not e.holes:
            raise NotAHole(f"event {event} after the exploration closed")
        e = peel(e, e.holes[0], event)
    if e.holes and not allow_partial:
        raise NotAHole("events ended while holes remain")
    return e


def decode(ell: int, code: str, allow_partial: bool = False) -> MapWithHoles:
    """Replay an event code from the initial state of semi-perimeter ``ell``.

    Raises:
        NotAHole: code continues after the exploration closed, or (unless
            ``allow_partial``) stops while holes remain.
        SplitArityMismatch: a split is inconsistent with its hole size.
    """
    # commas also appear inside T2(l1,l2), so split only before an event start
    tokens = re.split(r",(?=\s*T)", code.strip()) if code.strip() else []
    return replay(ell, [PeelEvent.parse(t) for t in tokens], allow_partial)
