"""Distributional checks of the spatial Markov property of peeling.

Conditionally on what a stopped exploration has revealed, the unexplored
regions behind its holes are independent face-weighted quadrangulations of
the matching boundary lengths.  This module verifies that statement by
simulation, both against a fixed conditioning map (weak form) and against
map-valued stopping rules (strong form).  It also constructs a stopping
rule from a one-way contour walk on the faces whose stopped map no
edge-by-edge exploration algorithm can realize, together with the
branch-by-branch certificate of that impossibility, and checks an exact
invariance of the law (rerooting).
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from random import Random
from typing import Callable, Iterable, Optional, Sequence

from .boltzmann import (
    BoltzmannParams,
    peel_probabilities,
    prob_exact,
    sample_boltzmann,
)
from .census import generate_all
from .errors import (
    CensusMissing,
    DegenerateTable,
    EventNeverHit,
    NotAHole,
    NotSubmap,
    OutOfBounds,
    UnsupportedHoleTopology,
    WrongPerimeter,
)
from .maps import MapWithHoles, canonical_code, is_submap, reroot, root_embedding
from .peeling import (
    PeelEvent,
    T1,
    encode,
    explore,
    initial_exploration,
    peel,
    peel_type_of,
)
from .stats import GofResult, chi_square_gof, independence_test

__all__ = [
    "CONTAINED",
    "NOT_CONTAINED",
    "UNDETERMINED",
    "ContourResult",
    "right_process",
    "left_process",
    "StoppingMapResult",
    "stopping_map_details",
    "stopping_map_Q",
    "containment_decider_Q",
    "StoppingRule",
    "stopping_rule_Q",
    "deterministic_prefix_rule",
    "first_type2_rule",
    "HoleMarginal",
    "PairIndependence",
    "MarkovTestReport",
    "weak_markov_test",
    "strong_markov_test",
    "rerooting_invariance_check",
    "BranchLeaf",
    "LeafReport",
    "BranchReport",
    "counterexample_branches",
]

# decisions a containment decider can return
CONTAINED = "contained"
NOT_CONTAINED = "not-contained"
UNDETERMINED = "undetermined-by-p"


@dataclass(frozen=True)
class ContourResult:
    """A one-way contour walk over the faces of a map.

    ``visits`` lists face ids in order, starting at the root face and ending
    either back there or, when ``hit_hole`` is set, at the first hole
    reached.  ``crossings[i]`` is the dart whose edge the walk crossed
    between ``visits[i]`` and ``visits[i + 1]``, taken on the side being
    left.

    ``first_pinch`` is the first index >= 1 whose face shows up at another
    positive index; ``last_pinch`` is the final index carrying that same
    face.  Both are None when no face repeats.  The start and end of a
    completed walk are the only visits of the root face, so a plain loop
    does not count as a pinch.
    """

    visits: tuple[int, ...]
    crossings: tuple[int, ...]
    hit_hole: bool
    first_pinch: Optional[int]
    last_pinch: Optional[int]

    @property
    def steps(self) -> int:
        return len(self.crossings)

    @property
    def loop_length(self) -> int:
        """Crossings kept once the pinched stretch is cut out."""
        if self.first_pinch is None:
            return self.steps
        return self.first_pinch + (self.steps - self.last_pinch)


def _contour(m: MapWithHoles, forward: bool) -> ContourResult:
    if m.semi_perimeter != 1:
        raise WrongPerimeter(
            f"contour walks need a two-sided root face, got {2 * m.semi_perimeter}"
        )
    base = m.base
    alpha = base.alpha
    rot: Sequence[int]
    if forward:
        rot = base.phi
        near = base.root
    else:
        inv = [0] * base.n_darts
        for d, nxt in enumerate(base.phi):
            inv[nxt] = d
        rot = inv
        near = base.phi[base.root]
    face_of = base.face_of
    hole_set = set(m.hole_faces)
    visits = [base.root_face]
    crossings: list[int] = []
    seen: set[int] = set()
    hit_hole = False
    while True:
        crossings.append(near)
        seen.add(min(near, alpha[near]))
        far = alpha[near]
        here = face_of[far]
        visits.append(here)
        if here == base.root_face:
            break
        if here in hole_set:
            hit_hole = True
            break
        cand = rot[far]
        while cand != far and min(cand, alpha[cand]) in seen:
            cand = rot[cand]
        if cand == far:
            # unreachable on four-sided faces: every arrival leaves an odd
            # number of used sides, so an unused one remains
            raise UnsupportedHoleTopology(f"no exit from face {here}")
        near = cand
    first = last = None
    tally = Counter(visits[1:])
    for i in range(1, len(visits)):
        if tally[visits[i]] > 1:
            first = i
            last = max(k for k in range(1, len(visits)) if visits[k] == visits[i])
            break
    return ContourResult(tuple(visits), tuple(crossings), hit_hole, first, last)


def right_process(m: MapWithHoles) -> ContourResult:
    r"""Forward contour walk on the faces, crossing each edge at most once.

    The walk starts at the root face, crosses the root edge first, and at
    every face tries the sides in face-walk order from the one just
    crossed, taking the first unvisited edge::

            +-----a-----+       arrived through a (the far side of the
            |   * <-,   |       crossing) into this face; candidates are
            b    \   \  c       scanned in walk order a -> c -> d -> b,
            |     `--- \|       so c is crossed if unvisited, else d,
            +-----d-----+       else b.

    It ends on the first return to the root face, or at the first hole it
    enters (``hit_hole``).  Holes and the root face are never left again.

    Raises:
        WrongPerimeter: the root face does not have two sides.
    """
    return _contour(m, forward=True)


def left_process(m: MapWithHoles) -> ContourResult:
    """Mirror of right_process: starts across the other root-face edge and
    scans candidates in reverse face-walk order."""
    return _contour(m, forward=False)


@dataclass(frozen=True)
class StoppingMapResult:
    """A pinch-cut contour submap together with the walk that produced it."""

    submap: MapWithHoles
    walk: ContourResult
    kept_crossings: tuple[int, ...]

    @property
    def used_full_contour(self) -> bool:
        """True when the walk never pinched, so nothing was cut out."""
        return self.walk.first_pinch is None


def _replay_crossings(q: MapWithHoles, crossings: Iterable[int]) -> MapWithHoles:
    """Peel the edges of hole-free ``q`` named by contour crossings, in order.

    Each crossing dart sits in an already-discovered face of ``q`` on an
    edge not yet revealed; the matching frontier dart of the exploration is
    peeled with the event ``q`` dictates.
    """
    e = initial_exploration(q.semi_perimeter)
    for near in crossings:
        iota = root_embedding(e, q)
        position = {img: d for d, img in enumerate(iota) if img >= 0}
        h = e.alpha[position[near]]
        e = peel(e, h, peel_type_of(e, h, q))
    return e


def stopping_map_details(q: MapWithHoles) -> StoppingMapResult:
    """Walk the forward contour of ``q`` and replay it with the stretch
    between the first and last visit of the first repeated face cut out.

    When the walk never revisits a face the whole contour is replayed,
    which ``used_full_contour`` flags.

    Raises:
        NotAHole: ``q`` still has holes.
        WrongPerimeter: the root face does not have two sides.
    """
    if q.n_holes:
        raise NotAHole("the contour submap is built from a completed map")
    walk = right_process(q)
    if walk.first_pinch is None:
        kept = walk.crossings
    else:
        kept = (
            walk.crossings[: walk.first_pinch] + walk.crossings[walk.last_pinch :]
        )
    return StoppingMapResult(_replay_crossings(q, kept), walk, kept)


def stopping_map_Q(q: MapWithHoles) -> MapWithHoles:
    """The submap of ``q`` discovered by its pinch-cut forward contour."""
    return stopping_map_details(q).submap


def containment_decider_Q(p: MapWithHoles) -> str:
    """Decide from a partial exploration whether the pinch-cut contour
    submap of the complete map lies inside it.

    Both one-way contours are run on ``p``, each stopping at the first hole
    it enters (or completing).  The submap is inside ``p`` for every
    completion exactly when the two walks share a discovered (non-hole)
    face away from their common start; otherwise it is inside none.

    Raises:
        WrongPerimeter: the root face does not have two sides.
    """
    right = right_process(p)
    left = left_process(p)
    holes = set(p.hole_faces)
    seen_right = {f for f in right.visits[1:] if f not in holes}
    seen_left = {f for f in left.visits[1:] if f not in holes}
    return CONTAINED if seen_right & seen_left else NOT_CONTAINED


@dataclass(frozen=True)
class StoppingRule:
    """A map-valued stopping rule: an extractor with its containment decider.

    ``extract`` maps a complete map ``q`` to the stopped exploration
    ``S(q)``, which must embed in ``q`` root to root.  ``decide`` classifies
    a partial exploration ``p`` by whether ``S(q)`` lies inside ``p``: for
    every completion ``q`` of ``p`` (CONTAINED), for none (NOT_CONTAINED),
    or for some but not others (UNDETERMINED).
    """

    name: str
    extract: Callable[[MapWithHoles], MapWithHoles]
    decide: Callable[[MapWithHoles], str]


def _peel_type_partial(
    e: MapWithHoles, dart: int, p: MapWithHoles
) -> Optional[PeelEvent]:
    """Peel event at ``dart`` read off the partial map ``p``, or None when
    the crossed edge leads into a hole of ``p`` and the event is therefore
    not determined yet.

    Raises:
        NotSubmap: ``e`` does not embed in ``p``.
    """
    iota = root_embedding(e, p)
    if iota is None:
        raise NotSubmap("exploration does not embed in the partial map")
    crossed = p.alpha[iota[e.alpha[dart]]]
    if crossed not in set(iota) and p.base.face_of[crossed] in set(p.hole_faces):
        return None
    return peel_type_of(e, dart, p)


def deterministic_prefix_rule(k: int) -> StoppingRule:
    """Stop after the first ``k`` steps of the canonical exploration.

    The decider replays those steps against the partial map.  As soon as a
    step's outcome rests on an unexplored hole, the stopped map reveals an
    edge the partial map has not, so no completion can keep it inside:
    the decision is NOT_CONTAINED, never UNDETERMINED.

    Raises:
        OutOfBounds: ``k`` negative.
    """
    if k < 0:
        raise OutOfBounds(f"prefix length {k}")

    def extract(q: MapWithHoles) -> MapWithHoles:
        final, _ = explore(q, max_steps=k)
        return final

    def decide(p: MapWithHoles) -> str:
        e = initial_exploration(p.semi_perimeter)
        for _ in range(k):
            if not e.holes:
                break
            event = _peel_type_partial(e, e.holes[0], p)
            if event is None:
                return NOT_CONTAINED
            e = peel(e, e.holes[0], event)
        return CONTAINED

    return StoppingRule(f"prefix-{k}", extract, decide)


def first_type2_rule() -> StoppingRule:
    """Stop the canonical exploration right after its first two-sided event.

    Complete explorations always end by closing a hole, so a split always
    arrives.  The decider mirrors deterministic_prefix_rule: an outcome
    resting on an unexplored hole means NOT_CONTAINED.
    """

    def extract(q: MapWithHoles) -> MapWithHoles:
        final, steps = explore(q)
        for i, step in enumerate(steps):
            if step.event.is_split:
                return steps[i + 1].state if i + 1 < len(steps) else final
        raise NotSubmap("complete exploration produced no split")

    def decide(p: MapWithHoles) -> str:
        e = initial_exploration(p.semi_perimeter)
        while e.holes:
            event = _peel_type_partial(e, e.holes[0], p)
            if event is None:
                return NOT_CONTAINED
            e = peel(e, e.holes[0], event)
            if event.is_split:
                return CONTAINED
        return CONTAINED

    return StoppingRule("first-split", extract, decide)


def _refines(coarse: MapWithHoles, fine: MapWithHoles) -> bool:
    """True when ``fine`` knows everything ``coarse`` does: the interior of
    ``coarse`` embeds root to root in ``fine``, identifications included."""
    return root_embedding(coarse, fine) is not None


@dataclass(frozen=True)
class HoleMarginal:
    """Goodness of fit of one hole's observed fill distribution."""

    group: Optional[str]
    hole: int
    semi_perimeter: int
    gof: GofResult


@dataclass(frozen=True)
class PairIndependence:
    """Contingency test between the fills of two holes."""

    group: Optional[str]
    holes: tuple[int, int]
    gof: GofResult


@dataclass(frozen=True)
class MarkovTestReport:
    """Chi-square evidence that unexplored regions follow the product law."""

    marginals: tuple[HoleMarginal, ...]
    independence: tuple[PairIndependence, ...]
    n_sampled: int
    n_used: int
    reference: str
    truncation: str

    def p_values(self) -> list[float]:
        out = [m.gof.p_value for m in self.marginals]
        out.extend(pair.gof.p_value for pair in self.independence)
        return out

    def min_p(self) -> float:
        values = self.p_values()
        return min(values) if values else 1.0

    def rows(self) -> list[dict[str, object]]:
        """One flat record per test performed, ready for tabular output."""
        table: list[dict[str, object]] = []
        for m in self.marginals:
            table.append(
                {
                    "kind": "marginal",
                    "group": m.group or "",
                    "holes": str(m.hole),
                    "semi_perimeter": m.semi_perimeter,
                    "statistic": m.gof.statistic,
                    "dof": m.gof.dof,
                    "p_value": m.gof.p_value,
                    "n": m.gof.n,
                }
            )
        for pair in self.independence:
            table.append(
                {
                    "kind": "independence",
                    "group": pair.group or "",
                    "holes": f"{pair.holes[0]}x{pair.holes[1]}",
                    "semi_perimeter": "",
                    "statistic": pair.gof.statistic,
                    "dof": pair.gof.dof,
                    "p_value": pair.gof.p_value,
                    "n": pair.gof.n,
                }
            )
        return table


def _fill_labels(
    fills: Iterable[MapWithHoles],
) -> tuple[list[str], dict[str, MapWithHoles]]:
    """Event-code label for every fill plus one representative per label."""
    by_code: dict[bytes, str] = {}
    reps: dict[str, MapWithHoles] = {}
    labels: list[str] = []
    for fill in fills:
        key = canonical_code(fill)
        label = by_code.get(key)
        if label is None:
            label = encode(fill)
            by_code[key] = label
            reps[label] = fill
        labels.append(label)
    return labels, reps


def _group_label(s: MapWithHoles) -> str:
    sps = ",".join(str(s.hole_semi_perimeter(i)) for i in range(s.n_holes))
    digest = hashlib.sha1(canonical_code(s)).hexdigest()[:8]
    return f"{s.n_internal_faces}f[{sps}]#{digest}"


def _reference_strings(params: BoltzmannParams) -> tuple[str, str]:
    reference = (
        f"independent fills, each face-weighted with q={params.q} and at "
        f"most {params.face_cap} faces"
    )
    truncation = (
        "the reference treats hole fills as independent truncated laws; "
        "the joint cap on total faces couples them by at most the "
        f"certified tail bound ({params.tail_tol:g})"
    )
    return reference, truncation


def _hole_tests(
    group: Optional[str],
    conditioning: MapWithHoles,
    fills_list: Sequence[tuple[MapWithHoles, ...]],
    params: BoltzmannParams,
    top_k: int,
    min_expected: float,
) -> tuple[list[HoleMarginal], list[PairIndependence]]:
    marginals: list[HoleMarginal] = []
    independence: list[PairIndependence] = []
    per_hole: list[list[str]] = []
    n = len(fills_list)
    for i in range(conditioning.n_holes):
        labels, reps = _fill_labels(fills[i] for fills in fills_list)
        per_hole.append(labels)
        expected = {
            label: float(prob_exact(rep, params)) for label, rep in reps.items()
        }
        gof = chi_square_gof(Counter(labels), expected, n, min_expected=min_expected)
        marginals.append(
            HoleMarginal(group, i, conditioning.hole_semi_perimeter(i), gof)
        )
    for i in range(conditioning.n_holes):
        for j in range(i + 1, conditioning.n_holes):
            pairs = Counter(zip(per_hole[i], per_hole[j]))
            independence.append(
                PairIndependence(group, (i, j), independence_test(pairs, top_k=top_k))
            )
    return marginals, independence


def weak_markov_test(
    ell: int,
    params: BoltzmannParams,
    subq: MapWithHoles,
    n_samples: int,
    rng: Random,
    *,
    top_k: int = 4,
    min_expected: float = 5.0,
) -> MarkovTestReport:
    """Sample the face-weighted law and test, conditionally on the sample
    containing ``subq``, that every hole's fill follows its own
    boundary-length law and that fills of different holes are independent.

    Conditioning is by rejection: each of the ``n_samples`` draws is kept
    only when ``subq`` embeds in it.  Per hole, observed fill frequencies
    are compared with exact point probabilities (cells with small expected
    counts pooled); per hole pair, a top-``top_k`` contingency test checks
    independence.

    Raises:
        NotAHole: ``subq`` has no holes, so there is nothing to condition on.
        WrongPerimeter: ``subq`` boundary length differs from ``ell``.
        EventNeverHit: conditioning can never succeed, or never did.
    """
    if not subq.holes:
        raise NotAHole("conditioning map has no holes")
    if subq.semi_perimeter != ell:
        raise WrongPerimeter(
            f"conditioning map has semi-perimeter {subq.semi_perimeter}, "
            f"expected {ell}"
        )
    if subq.n_internal_faces > params.face_cap:
        raise EventNeverHit(
            "conditioning map has more faces than the cap allows"
        )
    accepted: list[tuple[MapWithHoles, ...]] = []
    for _ in range(n_samples):
        m = sample_boltzmann(ell, params, rng)
        fills = is_submap(subq, m)
        if fills is not None:
            accepted.append(fills)
    if not accepted:
        raise EventNeverHit(
            f"no sample out of {n_samples} contained the conditioning map"
        )
    marginals, independence = _hole_tests(
        None, subq, accepted, params, top_k, min_expected
    )
    reference, truncation = _reference_strings(params)
    return MarkovTestReport(
        tuple(marginals),
        tuple(independence),
        n_samples,
        len(accepted),
        reference,
        truncation,
    )


def strong_markov_test(
    ell: int,
    params: BoltzmannParams,
    rule: StoppingRule,
    n_samples: int,
    rng: Random,
    *,
    min_group: int = 50,
    top_k: int = 4,
    min_expected: float = 5.0,
) -> MarkovTestReport:
    """Test that, given the map a stopping rule extracts, the unexplored
    regions follow the product of boundary-length laws.

    Each sample is grouped by the shape of its extracted map; every group
    that reaches ``min_group`` members and still has a hole is tested the
    way weak_markov_test tests its conditioning map.  A group too small to
    resolve even two fill classes after pooling carries no information and
    is skipped.

    Raises:
        NotSubmap: the rule extracted a map its sample does not contain.
        EventNeverHit: no group was large enough with a hole to test.
    """
    groups: dict[bytes, list[tuple[MapWithHoles, ...]]] = {}
    reps: dict[bytes, MapWithHoles] = {}
    for _ in range(n_samples):
        m = sample_boltzmann(ell, params, rng)
        stopped = rule.extract(m)
        if stopped.n_holes:
            fills = is_submap(stopped, m)
            if fills is None:
                raise NotSubmap(
                    f"rule {rule.name!r} extracted a map its sample does not contain"
                )
        else:
            if canonical_code(stopped) != canonical_code(m):
                raise NotSubmap(
                    f"rule {rule.name!r} extracted a complete map differing "
                    "from its sample"
                )
            fills = ()
        key = canonical_code(stopped)
        groups.setdefault(key, []).append(fills)
        reps.setdefault(key, stopped)
    marginals: list[HoleMarginal] = []
    independence: list[PairIndependence] = []
    n_used = 0
    ordered = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0]))
    for key, fills_list in ordered:
        stopped = reps[key]
        if len(fills_list) < min_group or not stopped.n_holes:
            continue
        try:
            more_marginals, more_independence = _hole_tests(
                _group_label(stopped), stopped, fills_list, params, top_k, min_expected
            )
        except DegenerateTable:
            continue
        n_used += len(fills_list)
        marginals.extend(more_marginals)
        independence.extend(more_independence)
    if not marginals:
        raise EventNeverHit(
            f"no stopped shape reached {min_group} samples with a hole to test"
        )
    reference, truncation = _reference_strings(params)
    return MarkovTestReport(
        tuple(marginals),
        tuple(independence),
        n_samples,
        n_used,
        reference,
        truncation,
    )


def rerooting_invariance_check(
    ell: int, fmax: int, params: BoltzmannParams
) -> Fraction:
    """Largest exact change in point probability when the root moves along
    the boundary, over every map with at most ``fmax`` faces.

    The law depends only on boundary length and face count, so the result
    must be exactly zero.

    Raises:
        CensusMissing: ``fmax`` negative.
    """
    if fmax < 0:
        raise CensusMissing(f"no census below zero faces (fmax={fmax})")
    worst = Fraction(0)
    for faces in range(fmax + 1):
        for m in generate_all(ell, faces):
            reference = prob_exact(m, params)
            for dart in m.boundary_walk():
                gap = abs(prob_exact(reroot(m, dart), params) - reference)
                if gap > worst:
                    worst = gap
    return worst


@dataclass(frozen=True)
class BranchLeaf:
    """One closed branch of the divergence tree: a fixed peel sequence
    applied to the two-sided initial state."""

    name: str
    description: str
    peels: tuple[tuple[int, PeelEvent], ...]
    cut_pendant: bool  # the final pinch must land inside the contour's cut


# Every branch an edge-by-edge algorithm can take from the two-sided initial
# state, driven to a stage whose discovered map provably differs from the
# pinch-cut contour submap of any completion.  Dart numbers follow the
# surgery's allocation order: the initial state has darts 0..3 (1 behind the
# root edge, 3 behind the second boundary edge) and each fresh face appends
# six.
_LEAVES: tuple[BranchLeaf, ...] = (
    BranchLeaf(
        "pinch-right",
        "reveal the face behind the root edge, then peel its middle free "
        "side and identify it with the side nearest the root, pinching "
        "their shared corner into a pendant edge",
        ((1, T1), (7, PeelEvent.t2(0, 1))),
        cut_pendant=True,
    ),
    BranchLeaf(
        "pinch-left",
        "the same identification as pinch-right, peeled from the other "
        "side of the pair",
        ((1, T1), (5, PeelEvent.t2(1, 0))),
        cut_pendant=True,
    ),
    BranchLeaf(
        "wrap-around",
        "reveal the face behind the root edge, the face behind its far "
        "free side, then the face behind its middle side, and close a "
        "fresh side onto the second boundary edge, wrapping around the "
        "root face",
        ((1, T1), (9, T1), (7, T1), (19, PeelEvent.t2(1, 2))),
        cut_pendant=False,
    ),
    BranchLeaf(
        "second-face-pinch",
        "reveal the faces behind both boundary edges, then pinch two "
        "adjacent free sides of the second face into a pendant edge",
        ((1, T1), (3, T1), (13, PeelEvent.t2(0, 2))),
        cut_pendant=False,
    ),
    BranchLeaf(
        "first-face-pinch-late",
        "reveal the faces behind both boundary edges, then pinch the "
        "first face's two near free sides as pinch-right does",
        ((1, T1), (3, T1), (7, PeelEvent.t2(0, 2))),
        cut_pendant=True,
    ),
    BranchLeaf(
        "deep-wrap-far",
        "reveal the faces behind both boundary edges, a third face behind "
        "the second one, a fourth behind the first one, and close a fresh "
        "side of the fourth onto a remaining side of the second",
        ((1, T1), (3, T1), (15, T1), (7, T1), (25, PeelEvent.t2(3, 1))),
        cut_pendant=False,
    ),
    BranchLeaf(
        "deep-wrap-near",
        "like deep-wrap-far with the third face grown from the first face "
        "instead of the second",
        ((1, T1), (3, T1), (9, T1), (7, T1), (25, PeelEvent.t2(1, 3))),
        cut_pendant=False,
    ),
)


@dataclass(frozen=True)
class LeafReport:
    """What one branch leaf discovers, checked against every completion in
    the census window.

    Per compatible completion ``q`` the leaf state is compared, in the
    refinement order, with that completion's contour submap.  ``n_in_event``
    counts completions whose cut loop keeps more than three crossings;
    ``n_on_course_in_event`` counts those among them the leaf still refines
    into (so a continuation could end up discovering the submap exactly),
    and ``n_beyond_in_event`` those where the leaf strictly refines the
    submap (discovered it plus extra structure).  ``n_equal`` counts exact
    coincidences over all compatible completions.
    """

    leaf: BranchLeaf
    discovered: MapWithHoles
    probability: Fraction
    n_compatible: int
    n_in_event: int
    n_on_course_in_event: int
    n_beyond_in_event: int
    n_equal: int
    pendant_in_cut: Optional[bool]

    @property
    def diverges(self) -> bool:
        """The leaf never coincides with a contour submap and, on every
        long-loop completion, no continuation can reach one."""
        return (
            self.n_compatible > 0
            and self.n_equal == 0
            and self.n_on_course_in_event == 0
        )


@dataclass(frozen=True)
class BranchReport:
    """Divergence certificate: every algorithmic branch fails to realize the
    pinch-cut contour submap."""

    leaves: tuple[LeafReport, ...]
    fmax: int

    def diverges_everywhere(self) -> bool:
        return all(leaf.diverges for leaf in self.leaves)

    def total_probability(self) -> Fraction:
        return sum((leaf.probability for leaf in self.leaves), Fraction(0))


def counterexample_branches(
    params: BoltzmannParams, fmax: int = 4
) -> BranchReport:
    """Certificate that no edge-by-edge exploration realizes the pinch-cut
    contour submap.

    Each leaf below is a peel sequence of positive probability under the
    face-weighted law.  For every census completion with at most ``fmax``
    faces that contains a leaf's discovered map, the leaf differs from the
    completion's contour submap, and on completions whose cut loop is
    longer than three edges it has stepped off course for good: it knows
    an identification or a face the submap lacks, so no continuation of it
    discovers the submap exactly.  For the leaves flagged ``cut_pendant``,
    the edge the final step identifies lies in the stretch the contour
    cuts out, on every compatible completion.

    Raises:
        CensusMissing: ``fmax`` smaller than a leaf's face count, leaving
            it without completions to check.
    """
    census: list[MapWithHoles] = []
    for faces in range(fmax + 1):
        census.extend(generate_all(1, faces))
    details_cache: dict[int, StoppingMapResult] = {}
    reports: list[LeafReport] = []
    for leaf in _LEAVES:
        e = initial_exploration(1)
        probability = Fraction(1)
        before_last = e
        pinch_interior = -1
        for dart, event in leaf.peels:
            before_last = e
            pinch_interior = e.alpha[dart]
            hole = e.hole_faces.index(e.base.face_of[dart])
            probability *= peel_probabilities(
                e.hole_semi_perimeter(hole), params
            )[event]
            e = peel(e, dart, event)
        if e.n_internal_faces > fmax:
            raise CensusMissing(
                f"leaf {leaf.name!r} has {e.n_internal_faces} faces, "
                f"beyond fmax={fmax}"
            )
        n_compatible = n_event = n_course = n_beyond = n_equal = 0
        pendant_ok: Optional[bool] = True if leaf.cut_pendant else None
        for idx, q in enumerate(census):
            iota = root_embedding(e, q)
            if iota is None:
                continue
            n_compatible += 1
            details = details_cache.get(idx)
            if details is None:
                details = details_cache[idx] = stopping_map_details(q)
            submap = details.submap
            leaf_below = _refines(e, submap)
            submap_below = _refines(submap, e)
            if leaf_below and submap_below:
                n_equal += 1
            if details.walk.loop_length > 3:
                n_event += 1
                n_course += leaf_below
                n_beyond += submap_below and not leaf_below
            if leaf.cut_pendant:
                # the edge of q the final identification step crossed
                ib = root_embedding(before_last, q)
                crossed = ib[pinch_interior]
                identified = min(crossed, q.alpha[crossed])
                walk = details.walk
                cut = frozenset(
                    min(c, q.alpha[c])
                    for c in walk.crossings[walk.first_pinch : walk.last_pinch]
                ) if walk.first_pinch is not None else frozenset()
                if identified not in cut:
                    pendant_ok = False
        reports.append(
            LeafReport(
                leaf,
                e,
                probability,
                n_compatible,
                n_event,
                n_course,
                n_beyond,
                n_equal,
                pendant_ok,
            )
        )
    return BranchReport(tuple(reports), fmax)


stopping_rule_Q = StoppingRule(
    "pinch-cut-contour", stopping_map_Q, containment_decider_Q
)
