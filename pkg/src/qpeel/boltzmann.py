"""Face-weighted laws on quadrangulations with boundary, and exact samplers.

For a weight ``q`` up to the critical value 1/12, the law on maps with
semi-perimeter ``ell`` gives a map with ``f`` internal faces probability
``q^f / W_ell``, where ``W_ell`` sums ``count(ell, f) * q^f``.  The series is
truncated at ``face_cap`` with a certified geometric bound on the discarded
tail; all retained arithmetic is exact rational, so identities that should
hold exactly (step-product decomposition, rerooting invariance) hold to the
last bit.

Sampling is exact as well: the face count is drawn from integer weights, then
a map is grown by peeling with each event chosen proportionally to the number
of completions the census table assigns to the resulting hole profile.  The
``*_events`` variants return just the event sequence, which is much cheaper
than building the map and is enough for most statistics.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from random import Random
from typing import Sequence, Union

from .census import completions, count
from .errors import (
    CensusMissing,
    EmptyClass,
    NotAHole,
    OutOfBounds,
    TailToleranceNotMet,
)
from .maps import MapWithHoles, validate_quadrangulation
from .peeling import T1, PeelEvent, possible_events, replay

__all__ = [
    "CRITICAL_Q",
    "BoltzmannParams",
    "PartitionValue",
    "partition",
    "prob_exact",
    "peel_probabilities",
    "sample_uniform",
    "sample_uniform_events",
    "sample_boltzmann",
    "sample_boltzmann_events",
    "sample_face_count",
]

CRITICAL_Q = Fraction(1, 12)

RationalLike = Union[Fraction, int, str]


@dataclass(frozen=True)
class BoltzmannParams:
    """Weight, truncation depth, and certified tail tolerance.

    ``q`` accepts any exact rational form (Fraction, int, or a string like
    "1/24"); floats are rejected to keep the arithmetic auditable.
    """

    q: RationalLike = Fraction(1, 24)
    face_cap: int = 60
    tail_tol: float = 1e-9

    def __post_init__(self):
        if isinstance(self.q, float):
            raise OutOfBounds(
                "pass q as an exact rational (Fraction, int, or 'a/b' string)"
            )
        object.__setattr__(self, "q", Fraction(self.q))
        if not 0 <= self.q <= CRITICAL_Q:
            raise OutOfBounds(f"q = {self.q} outside [0, 1/12]")
        if self.face_cap < 0:
            raise OutOfBounds(f"face_cap = {self.face_cap}")
        if self.tail_tol <= 0:
            raise OutOfBounds(f"tail_tol = {self.tail_tol}")


@dataclass(frozen=True)
class PartitionValue:
    """Truncated partition sum and its certified relative tail bound."""

    W: Fraction
    tail_bound: float


# (ell, q, face_cap) -> (W, certified relative tail); tolerance applied per call
_partition_cache: dict[tuple[int, Fraction, int], tuple[Fraction, float]] = {}


def partition(ell: int, params: BoltzmannParams) -> PartitionValue:
    """Truncated partition value W_ell = sum of count(ell, f) q^f, f <= cap.

    The tail beyond the cap is bounded by a geometric series with ratio 12q,
    valid because term ratios increase toward 12q from below.

    Raises:
        CensusMissing: ``ell`` negative.
        TailToleranceNotMet: certified relative tail exceeds ``tail_tol``
            (always the case at q = 1/12, where the geometric bound is void).
    """
    if ell == 0:
        return PartitionValue(Fraction(1), 0.0)  # only the vertex map
    if ell < 0:
        raise CensusMissing(f"no counts at semi-perimeter {ell}")
    q = params.q
    key = (ell, q, params.face_cap)
    cached = _partition_cache.get(key)
    if cached is None:
        if q == 0:
            w = Fraction(count(ell, 0))
            nxt = Fraction(0)
        else:
            w = Fraction(0)
            qf = Fraction(1)
            for f in range(params.face_cap + 1):
                w += count(ell, f) * qf
                qf *= q
            nxt = count(ell, params.face_cap + 1) * qf
        if nxt == 0:
            rel = 0.0
        elif 12 * q >= 1:
            rel = float("inf")
        else:
            rel = float((nxt / (1 - 12 * q)) / w)
        _partition_cache[key] = cached = (w, rel)
    w, rel = cached
    if rel > params.tail_tol:
        raise TailToleranceNotMet(
            f"relative tail {rel:.3g} > {params.tail_tol:.3g} "
            f"(ell={ell}, cap={params.face_cap})"
        )
    return PartitionValue(w, rel)


def prob_exact(m: MapWithHoles, params: BoltzmannParams) -> Fraction:
    """Point probability q^faces / W under the truncated law.  Exact.

    Raises:
        NotAHole: ``m`` still has holes.
    """
    if m.n_holes:
        raise NotAHole("the law is defined on hole-free maps")
    validate_quadrangulation(m)
    return params.q ** m.n_internal_faces / partition(m.semi_perimeter, params).W


def peel_probabilities(
    ell: int, params: BoltzmannParams
) -> dict[PeelEvent, Fraction]:
    """Law of the first peel event on a hole of semi-perimeter ``ell``.

    A fresh face comes with probability q W_{ell+1}/W_ell; the split
    T2(l1,l2) with probability W_l1 W_l2 / W_ell.  The values sum to one up
    to the truncation tail.

    Raises:
        CensusMissing: ``ell < 1``.
    """
    if ell < 1:
        raise CensusMissing(f"no peeling at semi-perimeter {ell}")
    w_here = partition(ell, params).W
    probs = {T1: params.q * partition(ell + 1, params).W / w_here}
    for event in possible_events(ell)[1:]:
        probs[event] = (
            partition(event.l1, params).W * partition(event.l2, params).W / w_here
        )
    return probs


@lru_cache(maxsize=1 << 18)
def _event_menu(
    sps: tuple[int, ...], faces_left: int
) -> tuple[tuple[PeelEvent, ...], tuple[int, ...], int]:
    """Choices for peeling the first hole, with completion counts.

    Returns (events, cumulative weights, total).  Only events leading to at
    least one completion appear.
    """
    head, rest = sps[0], sps[1:]
    events: list[PeelEvent] = []
    cum: list[int] = []
    total = 0
    for event in possible_events(head):
        if event.is_split:
            lobes = tuple(x for x in (event.l1, event.l2) if x)
            weight = completions(lobes + rest, faces_left)
        elif faces_left >= 1:
            weight = completions((head + 1,) + rest, faces_left - 1)
        else:
            continue
        if weight:
            events.append(event)
            total += weight
            cum.append(total)
    return tuple(events), tuple(cum), total


def sample_uniform_events(ell: int, faces: int, rng: Random) -> tuple[PeelEvent, ...]:
    """Canonical event sequence of a uniform draw from the (ell, faces)
    class.  Exactly uniform: every choice uses integer completion counts.

    Raises:
        EmptyClass: the class is empty.
    """
    if ell < 1 or faces < 0 or count(ell, faces) == 0:
        raise EmptyClass(f"no maps with ell={ell}, faces={faces}")
    sps: tuple[int, ...] = (ell,)
    faces_left = faces
    events: list[PeelEvent] = []
    while sps:
        menu, cum, total = _event_menu(sps, faces_left)
        event = menu[bisect_right(cum, rng.randrange(total))]
        events.append(event)
        if event.is_split:
            lobes = tuple(x for x in (event.l1, event.l2) if x)
            sps = lobes + sps[1:]
        else:
            sps = (sps[0] + 1,) + sps[1:]
            faces_left -= 1
    return tuple(events)


def sample_uniform(ell: int, faces: int, rng: Random) -> MapWithHoles:
    """Exactly uniform map from the (ell, faces) class."""
    return replay(ell, sample_uniform_events(ell, faces, rng))


# (ell, q, cap) -> (cumulative integer weights, certified relative tail)
_fcount_cache: dict[tuple[int, Fraction, int], tuple[tuple[int, ...], float]] = {}


def sample_face_count(ell: int, params: BoltzmannParams, rng: Random) -> int:
    """Face count drawn with probability proportional to count(ell,f) q^f,
    f <= face_cap.  Integer arithmetic throughout."""
    key = (ell, params.q, params.face_cap)
    entry = _fcount_cache.get(key)
    if entry is None:
        tail = partition(ell, params).tail_bound  # certify before sampling
        a, b = params.q.numerator, params.q.denominator
        acc = 0
        out = []
        for f in range(params.face_cap + 1):
            acc += count(ell, f) * a**f * b ** (params.face_cap - f)
            out.append(acc)
        _fcount_cache[key] = entry = (tuple(out), tail)
    cum, tail = entry
    if tail > params.tail_tol:
        raise TailToleranceNotMet(f"relative tail {tail:.3g} (ell={ell})")
    return bisect_right(cum, rng.randrange(cum[-1]))


def sample_boltzmann_events(
    ell: int, params: BoltzmannParams, rng: Random
) -> tuple[PeelEvent, ...]:
    """Event sequence of a draw from the truncated face-weighted law."""
    return sample_uniform_events(ell, sample_face_count(ell, params, rng), rng)


def sample_boltzmann(ell: int, params: BoltzmannParams, rng: Random) -> MapWithHoles:
    """Map drawn from the truncated face-weighted law (f first, then
    uniform within the class)."""
    return replay(ell, sample_boltzmann_events(ell, params, rng))
