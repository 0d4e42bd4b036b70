"""Edge-length geometry on the face-adjacency skeleton of a quadrangulation.

Each face of a complete quadrangulation with boundary becomes a vertex of a
``DualSkeleton``: one hub for the outer face, with an edge end per boundary
walk position, plus one degree-4 vertex per internal face.  A ``MetricMap``
assigns every skeleton edge a positive length.  Decorations place a real
value at each internal vertex and an independent Brownian bridge with
matching endpoints along each edge; edge ends on the hub read a fixed
boundary condition at their walk position.

The sampling weight of a configuration is ``q`` per internal vertex, the
reference measure ``mu`` per vertex value, and ``exp(-lam w) *
bridge_mass(x, y, w)`` per edge of length ``w`` with endpoint values ``x``
and ``y``.  ``mcmc_sample_metric`` draws from this law restricted to
skeletons with at most ``skeleton_cap`` internal vertices; the cap keeps
every family finite for any positive ``q``, and the statistical checks in
this module are two-sample or two-route, so normalising constants never
enter.

``type3_peel`` explores a decorated map by length, one stretch of edge at a
time.  Cutting the root edge at distance ``t`` maps the surviving ensemble
weight-for-weight onto segments of length ``t`` times fresh maps whose
boundary carries the cut-point value, and the cut does not change which
skeletons satisfy the cap.  Two consequences are checked empirically:
``p3_shape_test`` fits the exponential-over-square-root shape of the
survival density, and ``mid_edge_markov_test`` compares the remainder
beyond the cut against fresh maps with the tip value spliced into the
boundary.

A quadratic vertex coupling of strength ``beta`` rescales into these
parameters via ``(q, lam, beta) -> (q beta**2, lam beta, 1)``, so ``beta``
is fixed to 1 here and ``q`` and ``lam`` stay free.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from random import Random
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate as _integrate
from scipy.special import ndtr as _ndtr
from scipy.stats import ks_2samp as _ks_2samp

from .census import generate_all
from .decorated import BoundaryCondition, SpinMeasure, _as_bc
from .errors import (
    BadGrid,
    BinTooThin,
    CapUnsatisfiable,
    EventNeverHit,
    InsufficientHits,
    MissingSpin,
    NonpositiveLength,
    NotActive,
    NotAHole,
    OutOfBounds,
    QuadratureFailure,
    SingularForm,
)
from .maps import MapWithHoles, RotationMap, validate_quadrangulation
from .markov import HoleMarginal, MarkovTestReport
from .stats import GofResult, independence_test

_LOG_2PI = math.log(2.0 * math.pi)

Lengths = Union[Sequence[float], Mapping[int, float]]
VertexValues = Union[Sequence[float], Mapping[int, float]]
Boundary = Union[BoundaryCondition, Sequence[float]]


# ---------------------------------------------------------------------------
# dual skeletons


class DualSkeleton:
    """Face-adjacency skeleton of a complete quadrangulation with boundary.

    Vertices are the primal faces and keep the primal face ids: the hub
    ``root_vertex`` is the outer face, with one edge end per boundary walk
    position, and every internal face becomes a vertex of degree 4.  Darts,
    ``alpha`` and the root dart are shared with the primal map; the rotation
    around a dual vertex is the primal face walk, so ``rot.vertex_of[d]``
    is the face on the left of ``d``.  Edges are keyed by their smaller
    dart, listed ascending in ``edges``.
    """

    __slots__ = (
        "primal",
        "rot",
        "semi_perimeter",
        "root_vertex",
        "internal_vertices",
        "edges",
        "edge_index",
        "boundary_position",
    )

    def __init__(self, primal: MapWithHoles):
        if primal.n_holes:
            raise NotAHole("the dual skeleton is defined on complete maps")
        validate_quadrangulation(primal)
        rot = RotationMap(primal.alpha, primal.phi, primal.root)
        self.primal = primal
        self.rot = rot
        self.semi_perimeter = primal.semi_perimeter
        self.root_vertex = rot.vertex_of[rot.root]
        self.internal_vertices = tuple(
            v for v in range(rot.n_vertices) if v != self.root_vertex
        )
        self.edges = tuple(d for d in range(rot.n_darts) if d < rot.alpha[d])
        self.edge_index = {c: i for i, c in enumerate(self.edges)}
        self.boundary_position = {
            d: k for k, d in enumerate(primal.boundary_walk())
        }

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_internal(self) -> int:
        return len(self.internal_vertices)

    def edge_of(self, dart: int) -> int:
        """Index into ``edges`` of the edge carrying ``dart``."""
        return self.edge_index[min(dart, self.rot.alpha[dart])]

    def degree(self, vertex: int) -> int:
        return len(self.rot.vertices[vertex])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DualSkeleton) and self.primal == other.primal

    def __hash__(self) -> int:
        return hash(("dual", self.primal))

    def __repr__(self) -> str:
        return (
            f"DualSkeleton(ell={self.semi_perimeter}, "
            f"internal={self.n_internal}, edges={self.n_edges})"
        )


@lru_cache(maxsize=None)
def capped_skeletons(ell: int, cap: int) -> tuple[DualSkeleton, ...]:
    """All dual skeletons of semi-perimeter ``ell`` with at most ``cap``
    internal vertices, in census order.

    Raises:
        OutOfBounds: ``ell < 1``.
        CapUnsatisfiable: ``cap < 0``.
    """
    if ell < 1:
        raise OutOfBounds(f"semi-perimeter {ell}")
    if cap < 0:
        raise CapUnsatisfiable(f"cap {cap} excludes every skeleton")
    out: list[DualSkeleton] = []
    for f in range(cap + 1):
        out.extend(DualSkeleton(m) for m in generate_all(ell, f))
    return tuple(out)


class _SkelCtx:
    """Per-skeleton lookup tables shared by the density and the sampler.

    ``ends[i]`` codes the two endpoints of edge i as (kind, index) pairs,
    smaller-dart end first: kind 0 is a hub end indexed by boundary walk
    position, kind 1 an internal vertex indexed by its slot in
    ``internal_vertices``.  ``incident[j]`` lists (edge, kind, index) for
    the opposite ends of the non-loop edges at internal slot j; loops at a
    vertex couple it to itself and drop out of every value conditional.
    """

    __slots__ = (
        "skel",
        "n_edges",
        "n_internal",
        "ends",
        "dart_code",
        "incident",
        "root_edge",
        "far_end",
        "grounded",
    )

    def __init__(self, skel: DualSkeleton):
        rot = skel.rot
        slot = {v: j for j, v in enumerate(skel.internal_vertices)}
        pos = skel.boundary_position

        def code(d: int) -> tuple[int, int]:
            v = rot.vertex_of[d]
            if v == skel.root_vertex:
                return 0, pos[d]
            return 1, slot[v]

        self.skel = skel
        self.n_edges = skel.n_edges
        self.n_internal = skel.n_internal
        self.dart_code = {d: code(d) for d in range(rot.n_darts)}
        self.ends = tuple(
            (*self.dart_code[c], *self.dart_code[rot.alpha[c]])
            for c in skel.edges
        )

        inc: list[list[tuple[int, int, int]]] = [[] for _ in range(self.n_internal)]
        for i, (ka, ia, kb, ib) in enumerate(self.ends):
            if ka == 1 and kb == 1 and ia == ib:
                continue
            if ka == 1:
                inc[ia].append((i, kb, ib))
            if kb == 1:
                inc[ib].append((i, ka, ia))
        self.incident = tuple(tuple(x) for x in inc)

        r = rot.root
        self.root_edge = skel.edge_of(r)
        self.far_end = self.dart_code[rot.alpha[r]]

        touched: set[int] = set()
        adj: list[list[int]] = [[] for _ in range(self.n_internal)]
        for ka, ia, kb, ib in self.ends:
            if ka == 0 and kb == 1:
                touched.add(ib)
            elif ka == 1 and kb == 0:
                touched.add(ia)
            elif ka == 1 and kb == 1 and ia != ib:
                adj[ia].append(ib)
                adj[ib].append(ia)
        stack = list(touched)
        while stack:
            j = stack.pop()
            for k in adj[j]:
                if k not in touched:
                    touched.add(k)
                    stack.append(k)
        self.grounded = len(touched) == self.n_internal


@lru_cache(maxsize=None)
def _ctx(skel: DualSkeleton) -> _SkelCtx:
    return _SkelCtx(skel)


# ---------------------------------------------------------------------------
# Brownian bridge factors


def bridge_mass(u: float, v: float, w: float) -> float:
    """Two-point factor ``exp(-(u - v)**2 / (2 w)) / sqrt(2 pi w)``.

    This is the density at ``v`` of a standard Brownian motion run for
    duration ``w`` from ``u``; it is symmetric in its endpoints and
    satisfies the splitting identity checked by
    ``bridge_decompose_check``.

    Raises:
        NonpositiveLength: ``w <= 0``.
    """
    if w <= 0:
        raise NonpositiveLength(f"duration {w}")
    d = u - v
    return math.exp(-d * d / (2.0 * w)) / math.sqrt(2.0 * math.pi * w)


def bridge_decompose_check(
    u: float, v: float, w1: float, w2: float, *, tol: float = 1e-8
) -> float:
    """Integrate out a cut point and compare against the one-piece mass.

    Returns the absolute gap between ``bridge_mass(u, v, w1 + w2)`` and the
    integral over x of ``bridge_mass(u, x, w1) * bridge_mass(x, v, w2)``.
    The integral runs over a window wide enough that the discarded tails
    are below machine noise.

    Raises:
        NonpositiveLength: a duration is not positive.
        QuadratureFailure: the integrator's error estimate, or the gap
            itself, exceeds ``tol``.
    """
    if w1 <= 0 or w2 <= 0:
        raise NonpositiveLength(f"durations {w1}, {w2}")
    lo, hi = min(u, v), max(u, v)
    span = 12.0 * math.sqrt(max(w1, w2)) + (hi - lo) + 1.0
    val, err = _integrate.quad(
        lambda x: bridge_mass(u, x, w1) * bridge_mass(x, v, w2),
        lo - span,
        hi + span,
        points=sorted({u, v}),
        limit=200,
        epsabs=1e-13,
        epsrel=1e-13,
    )
    gap = abs(val - bridge_mass(u, v, w1 + w2))
    if err > tol or gap > tol:
        raise QuadratureFailure(
            f"gap {gap:.3e} with integrator error {err:.3e} against {tol:.3e}"
        )
    return gap


def _grid_steps(w: float, h: float) -> int:
    """Number of steps of ``h`` tiling ``[0, w]``.

    Raises:
        BadGrid: ``h`` is not positive or does not tile the duration.
    """
    if not (h > 0 and math.isfinite(h)):
        raise BadGrid(f"grid step {h}")
    n = round(w / h)
    if n < 1 or abs(w - n * h) > 1e-9 * max(w, 1.0):
        raise BadGrid(f"step {h} does not tile a duration of {w}")
    return n


@dataclass(frozen=True)
class BridgePath:
    """A path tabulated on the uniform grid ``k * h`` over ``[0, w]``.

    ``values[k]`` is the path at ``k * h``; the first and last entries are
    the endpoint values ``u`` and ``v``.  Positions between nodes
    interpolate linearly; positions within a relative 1e-9 of a node snap
    to it, so restricting and then reading back a grid point is exact.

    Raises:
        NonpositiveLength: ``w <= 0``.
        BadGrid: the step does not tile ``[0, w]`` or ``values`` disagrees
            with the grid or the endpoints.
    """

    u: float
    v: float
    w: float
    h: float
    values: tuple[float, ...]

    def __post_init__(self):
        if self.w <= 0:
            raise NonpositiveLength(f"duration {self.w}")
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        n = _grid_steps(self.w, self.h)
        if len(self.values) != n + 1:
            raise BadGrid(f"{len(self.values)} values for {n} steps of {self.h}")
        if self.values[0] != self.u or self.values[-1] != self.v:
            raise BadGrid("path values disagree with the endpoints")

    @property
    def n_steps(self) -> int:
        return len(self.values) - 1

    def value_at(self, s: float) -> float:
        """Path value at position ``s`` along ``[0, w]``.

        Raises:
            BadGrid: ``s`` outside ``[0, w]``.
        """
        if s < 0 or s > self.w:
            raise BadGrid(f"position {s} outside [0, {self.w}]")
        r = s / self.h
        k = round(r)
        if 0 <= k <= self.n_steps and abs(s - k * self.h) <= 1e-9 * self.h:
            return self.values[k]
        i = int(r)
        frac = r - i
        return self.values[i] + frac * (self.values[i + 1] - self.values[i])


def bridge_sample(u: float, v: float, w: float, h: float, rng: Random) -> BridgePath:
    """Draw a Brownian bridge from ``u`` to ``v`` over duration ``w``.

    Sequential conditioning: given the value x at time t, the node at
    t + h is Gaussian with mean ``x + (v - x) h / (w - t)`` and variance
    ``h (w - t - h) / (w - t)``.  Endpoints are set exactly.

    Raises:
        NonpositiveLength: ``w <= 0``.
        BadGrid: ``h`` does not tile ``[0, w]``.
    """
    if w <= 0:
        raise NonpositiveLength(f"duration {w}")
    n = _grid_steps(w, h)
    vals = [0.0] * (n + 1)
    vals[0] = float(u)
    vals[n] = float(v)
    x = float(u)
    for k in range(1, n):
        rem = w - (k - 1) * h
        mean = x + (v - x) * (h / rem)
        sd = math.sqrt(h * (rem - h) / rem)
        x = rng.gauss(mean, sd)
        vals[k] = x
    return BridgePath(float(u), float(v), w, h, tuple(vals))


# ---------------------------------------------------------------------------
# parameters, metric maps and the density


@dataclass(frozen=True)
class McmcConfig:
    """Knobs for the Metropolis-within-Gibbs sampler.

    ``length_step`` and ``spin_step`` are the scales of the log-length and
    value random walks.  Every ``refresh_every`` sweeps the sampler makes
    one independence proposal (fresh skeleton, fresh lengths, fresh
    values); that move is what carries the chain between skeletons.
    """

    length_step: float = 0.8
    spin_step: float = 1.0
    burn_in: int = 500
    thinning: int = 1
    refresh_every: int = 1

    def __post_init__(self):
        if not (self.length_step > 0 and math.isfinite(self.length_step)):
            raise OutOfBounds(f"length step {self.length_step}")
        if not (self.spin_step > 0 and math.isfinite(self.spin_step)):
            raise OutOfBounds(f"value step {self.spin_step}")
        if self.burn_in < 0:
            raise OutOfBounds(f"burn-in {self.burn_in}")
        if self.thinning < 1:
            raise OutOfBounds(f"thinning {self.thinning}")
        if self.refresh_every < 1:
            raise OutOfBounds(f"refresh period {self.refresh_every}")


@dataclass(frozen=True)
class MetricParams:
    """Weights for metric maps with values.

    ``q`` multiplies once per internal vertex, ``lam`` is the exponential
    rate per unit of edge length, and ``mu`` is the reference measure for
    internal vertex values.  ``skeleton_cap`` bounds the internal vertex
    count of sampled skeletons; under the cap every family is finite, so
    any positive ``q`` is usable.  Boundary values are arbitrary reals
    regardless of ``mu``: exploration tips produce values off any atom.

    Raises:
        OutOfBounds: a weight is not a positive real, ``mu`` carries
            vector atoms, or a field has the wrong type.
        CapUnsatisfiable: ``skeleton_cap < 0``.
    """

    q: float = 1.0
    lam: float = 1.0
    mu: SpinMeasure = field(default_factory=SpinMeasure.ising)
    skeleton_cap: int = 2
    mcmc: McmcConfig = field(default_factory=McmcConfig)

    def __post_init__(self):
        if isinstance(self.q, bool) or not isinstance(self.q, (int, float)):
            raise OutOfBounds(f"vertex weight {self.q!r}")
        if isinstance(self.lam, bool) or not isinstance(self.lam, (int, float)):
            raise OutOfBounds(f"length rate {self.lam!r}")
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "lam", float(self.lam))
        if not (self.q > 0 and math.isfinite(self.q)):
            raise OutOfBounds(f"vertex weight q={self.q}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise OutOfBounds(f"length rate lam={self.lam}")
        if not isinstance(self.mu, SpinMeasure):
            raise OutOfBounds("mu must be a SpinMeasure")
        if self.mu.is_discrete and any(
            isinstance(a, tuple) for a in self.mu.support
        ):
            raise OutOfBounds("metric decorations are scalar; vector atoms unsupported")
        if self.skeleton_cap < 0:
            raise CapUnsatisfiable(f"cap {self.skeleton_cap} excludes every skeleton")
        if not isinstance(self.mcmc, McmcConfig):
            raise OutOfBounds("mcmc must be a McmcConfig")


@dataclass(frozen=True)
class MetricMap:
    """A dual skeleton with one positive length per edge.

    ``lengths[i]`` belongs to ``skeleton.edges[i]``.

    Raises:
        NonpositiveLength: a length is missing, not finite or not positive.
    """

    skeleton: DualSkeleton
    lengths: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))
        if len(self.lengths) != self.skeleton.n_edges:
            raise NonpositiveLength(
                f"{len(self.lengths)} lengths for {self.skeleton.n_edges} edges"
            )
        for x in self.lengths:
            if not (x > 0 and math.isfinite(x)):
                raise NonpositiveLength(f"edge length {x}")

    def length_of(self, dart: int) -> float:
        return self.lengths[self.skeleton.edge_of(dart)]

    @property
    def total_length(self) -> float:
        return sum(self.lengths)


def _scalar(x: object) -> float:
    if isinstance(x, (tuple, list)):
        raise OutOfBounds(f"metric decorations are scalar, got {x!r}")
    return float(x)  # type: ignore[arg-type]


def _boundary_values(b: Boundary, ell: int) -> tuple[float, ...]:
    """Boundary condition coerced to plain floats, support unchecked."""
    bc = _as_bc(b, ell)
    return tuple(_scalar(x) for x in bc)


def _edge_lengths(ctx: _SkelCtx, lengths: Lengths) -> list[float]:
    if isinstance(lengths, Mapping):
        out = []
        for c in ctx.skel.edges:
            if c not in lengths:
                raise NonpositiveLength(f"edge {c} carries no length")
            out.append(float(lengths[c]))
    else:
        out = [float(x) for x in lengths]
        if len(out) != ctx.n_edges:
            raise NonpositiveLength(f"{len(out)} lengths for {ctx.n_edges} edges")
    for x in out:
        if not (x > 0 and math.isfinite(x)):
            raise NonpositiveLength(f"edge length {x}")
    return out


def _vertex_values(ctx: _SkelCtx, values: VertexValues) -> list[float]:
    if isinstance(values, Mapping):
        out = []
        for v in ctx.skel.internal_vertices:
            if v not in values:
                raise MissingSpin(f"internal vertex {v} carries no value")
            out.append(_scalar(values[v]))
        return out
    out = [_scalar(x) for x in values]
    if len(out) != ctx.n_internal:
        raise MissingSpin(
            f"{len(out)} values for {ctx.n_internal} internal vertices"
        )
    return out


def _atom_log_weight(mu: SpinMeasure, x: float) -> float:
    try:
        i = mu.support.index(x)
    except ValueError:
        raise OutOfBounds(
            f"value {x!r} is not an atom of the reference measure"
        ) from None
    return math.log(mu.weights[i])


def _log_weight(
    ctx: _SkelCtx,
    w: Sequence[float],
    s: Sequence[float],
    bvals: Sequence[float],
    lam: float,
    logq: float,
    vertex_logw: Callable[[float], float],
) -> float:
    """Log of the unnormalised weight; inputs are assumed validated."""
    total = ctx.n_internal * logq
    for x in s:
        total += vertex_logw(x)
    for i, (ka, ia, kb, ib) in enumerate(ctx.ends):
        we = w[i]
        x = bvals[ia] if ka == 0 else s[ia]
        y = bvals[ib] if kb == 0 else s[ib]
        d = x - y
        total += -lam * we - d * d / (2.0 * we) - 0.5 * (_LOG_2PI + math.log(we))
    return total


def metric_density(
    skeleton: DualSkeleton,
    lengths: Lengths,
    vertex_spins: VertexValues,
    b: Boundary,
    params: MetricParams,
    *,
    log: bool = False,
) -> float:
    """Unnormalised weight of one metric map with internal vertex values.

    The weight is ``q`` per internal vertex, the reference weight of each
    vertex value, and ``exp(-lam w) * bridge_mass(x, y, w)`` per edge with
    endpoint values x, y and length w.  Hub ends read ``b`` at their walk
    position; boundary values may be any real, whatever ``mu`` is.

    ``lengths`` is a sequence aligned with ``skeleton.edges`` or a mapping
    keyed by the edge's smaller dart; ``vertex_spins`` is a sequence
    aligned with ``skeleton.internal_vertices`` or a mapping keyed by
    vertex id.  With ``log`` the natural logarithm is returned, which is
    the usable scale once maps grow past a few dozen edges.

    Raises:
        NonpositiveLength: a length is missing or not positive.
        MissingSpin: an internal vertex has no value.
        OutOfBounds: a value is not scalar, or is no atom of a discrete
            ``mu``.
        WrongPerimeter: ``b`` does not have ``2 * semi_perimeter`` values.
    """
    ctx = _ctx(skeleton)
    bvals = _boundary_values(b, skeleton.semi_perimeter)
    w = _edge_lengths(ctx, lengths)
    s = _vertex_values(ctx, vertex_spins)
    mu = params.mu
    if mu.is_discrete:
        def vlogw(x: float) -> float:
            return _atom_log_weight(mu, x)
    else:
        def vlogw(x: float) -> float:
            return 0.0
    val = _log_weight(ctx, w, s, bvals, params.lam, math.log(params.q), vlogw)
    return val if log else math.exp(val)


# ---------------------------------------------------------------------------
# the sampler


@dataclass(frozen=True)
class MetricSample:
    """One kept chain state: a skeleton from the capped census, its edge
    lengths and its internal vertex values."""

    skeleton_index: int
    skeleton: DualSkeleton
    lengths: tuple[float, ...]
    spins: tuple[float, ...]

    @property
    def metric_map(self) -> MetricMap:
        return MetricMap(self.skeleton, self.lengths)

    def spin_dict(self) -> dict[int, float]:
        return dict(zip(self.skeleton.internal_vertices, self.spins))


@dataclass(frozen=True)
class TransitionRecord:
    """One logged proposal, for balance checks.

    ``log_ratio`` is the acceptance exponent actually used: the target
    log-density difference, plus ``log(w_new / w_old)`` for length moves
    (the log-scale Jacobian), minus the proposal log-density difference
    for refresh moves.  Exact conditional draws (kind "gibbs") are always
    accepted and record the plain target difference.
    """

    kind: str
    before: MetricSample
    proposed: MetricSample
    log_ratio: float
    accepted: bool


@dataclass(frozen=True)
class ChainDiagnostics:
    """Acceptance counters and a crude effective sample size."""

    sweeps: int
    kept: int
    refresh_proposed: int
    refresh_accepted: int
    length_proposed: int
    length_accepted: int
    spin_proposed: int
    spin_accepted: int
    ess_total_length: float

    @property
    def refresh_rate(self) -> float:
        return self.refresh_accepted / max(1, self.refresh_proposed)

    @property
    def length_rate(self) -> float:
        return self.length_accepted / max(1, self.length_proposed)

    @property
    def spin_rate(self) -> float:
        return self.spin_accepted / max(1, self.spin_proposed)


@dataclass(frozen=True)
class MetricChain:
    """Output of ``mcmc_sample_metric``."""

    ell: int
    boundary: BoundaryCondition
    params: MetricParams
    samples: tuple[MetricSample, ...]
    diagnostics: ChainDiagnostics
    transitions: tuple[TransitionRecord, ...] = ()

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def _edge_proposal_logpdf(delta: float, w: float, lam: float) -> float:
    """Log-density of the refresh length draw for an endpoint gap ``delta``.

    The draw targets the exact conditional length law, proportional to
    ``w**-0.5 exp(-lam w - delta**2 / (2 w))``; its normaliser is
    ``sqrt(pi / lam) exp(-sqrt(2 lam) |delta|)``.  Gaps below 1e-9 use the
    plain Gamma(1/2) branch, matching the sampler exactly.
    """
    base = 0.5 * math.log(lam / math.pi) - 0.5 * math.log(w) - lam * w
    ad = abs(delta)
    if ad < 1e-9:
        return base
    return base + math.sqrt(2.0 * lam) * ad - delta * delta / (2.0 * w)


def proposal_log_density(
    sample: MetricSample, b: Boundary, params: MetricParams
) -> float:
    """Log-density of ``sample`` under the independence refresh proposal.

    The proposal draws the skeleton uniformly from the capped census, each
    vertex value from the normalised reference measure, and then each
    length from the exact conditional law given its endpoint gap.
    """
    skel = sample.skeleton
    ctx = _ctx(skel)
    bvals = _boundary_values(b, skel.semi_perimeter)
    lam = params.lam
    skels = capped_skeletons(skel.semi_perimeter, params.skeleton_cap)
    total = -math.log(len(skels))
    mu = params.mu
    if mu.is_discrete:
        log_mass = math.log(mu.mass)
        for v in sample.spins:
            total += _atom_log_weight(mu, v) - log_mass
    else:
        for v in sample.spins:
            total += -0.5 * v * v - 0.5 * _LOG_2PI
    s = sample.spins
    for i, (ka, ia, kb, ib) in enumerate(ctx.ends):
        x = bvals[ia] if ka == 0 else s[ia]
        y = bvals[ib] if kb == 0 else s[ib]
        total += _edge_proposal_logpdf(x - y, sample.lengths[i], lam)
    return total


def _ess(xs: Sequence[float]) -> float:
    """Effective sample size from the initial positive autocorrelation
    pairs of the sequence."""
    n = len(xs)
    if n < 8:
        return float(n)
    a = np.asarray(xs, dtype=float)
    a = a - a.mean()
    if float(a @ a) == 0.0:
        return float(n)
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(a, m)
    ac = np.fft.irfft(f * np.conj(f), m)[:n]
    rho = ac / ac[0]
    tail = 0.0
    k = 1
    while k + 1 < n:
        pair = float(rho[k] + rho[k + 1])
        if pair <= 0.0:
            break
        tail += pair
        k += 2
    tau = 1.0 + 2.0 * tail
    return max(1.0, min(float(n), n / tau))


def _run_chain(
    ell: int,
    bvals: tuple[float, ...],
    params: MetricParams,
    steps: int,
    rng: Random,
    collect: Callable[[int, int, list[float], list[float]], None],
    record: Optional[list] = None,
) -> ChainDiagnostics:
    """Metropolis-within-Gibbs over the capped ensemble.

    One sweep is an optional independence refresh, a log-scale random walk
    on every edge length, then one update per internal vertex value: an
    exact conditional draw for discrete ``mu``, a Gaussian random walk
    otherwise.  ``collect(k, si, w, s)`` receives each kept state after
    burn-in and thinning; the lists are live and must be copied.
    """
    skels = capped_skeletons(ell, params.skeleton_cap)
    ctxs = [_ctx(sk) for sk in skels]
    mu = params.mu
    if not mu.is_discrete:
        for c in ctxs:
            if not c.grounded:
                raise SingularForm("an internal vertex is insulated from the boundary")

    cfg = params.mcmc
    lam = params.lam
    logq = math.log(params.q)
    K = len(skels)
    log_k = math.log(K)

    disc = mu.is_discrete
    if disc:
        atoms = [float(a) for a in mu.support]
        atom_logw = [math.log(x) for x in mu.weights]
        mass = mu.mass
        cum = []
        acc = 0.0
        for x in mu.weights:
            acc += x / mass
            cum.append(acc)
        log_mass = math.log(mass)
        atom_logp = {a: lw - log_mass for a, lw in zip(atoms, atom_logw)}

        def vertex_logw(x: float) -> float:
            return atom_logp[x] + log_mass

        def draw_mu() -> float:
            r = rng.random()
            for a, cw in zip(atoms, cum):
                if r < cw:
                    return a
            return atoms[-1]

    else:

        def vertex_logw(x: float) -> float:
            return 0.0

        def draw_mu() -> float:
            return rng.gauss(0.0, 1.0)

    def log_pi(c: _SkelCtx, w: list[float], s: list[float]) -> float:
        return _log_weight(c, w, s, bvals, lam, logq, vertex_logw)

    def log_prop(c: _SkelCtx, w: list[float], s: list[float]) -> float:
        t = -log_k
        if disc:
            for v in s:
                t += atom_logp[v]
        else:
            for v in s:
                t += -0.5 * v * v - 0.5 * _LOG_2PI
        for i, (ka, ia, kb, ib) in enumerate(c.ends):
            x = bvals[ia] if ka == 0 else s[ia]
            y = bvals[ib] if kb == 0 else s[ib]
            t += _edge_proposal_logpdf(x - y, w[i], lam)
        return t

    lam_s = 2.0 * lam

    def draw_length(delta: float) -> float:
        # inverse of an inverse-Gaussian draw targets the conditional law
        # with density ~ w**-0.5 exp(-lam w - delta**2 / (2 w))
        ad = abs(delta)
        if ad < 1e-9:
            return rng.gammavariate(0.5, 1.0 / lam)
        mu_ig = math.sqrt(lam_s) / ad
        y = rng.gauss(0.0, 1.0) ** 2
        if y > 0.0:
            r = 4.0 * lam_s / (mu_ig * y)
            x = mu_ig * (
                1.0 + (mu_ig * y / lam_s) * 0.5 * (1.0 - math.sqrt(1.0 + r))
            )
        else:
            x = mu_ig
        if rng.random() <= mu_ig / (mu_ig + x):
            return 1.0 / x
        return x / (mu_ig * mu_ig)

    def draw_state() -> tuple[int, list[float], list[float]]:
        j = rng.randrange(K)
        c = ctxs[j]
        ss = [draw_mu() for _ in range(c.n_internal)]
        ww = []
        for ka, ia, kb, ib in c.ends:
            x = bvals[ia] if ka == 0 else ss[ia]
            y = bvals[ib] if kb == 0 else ss[ib]
            ww.append(draw_length(x - y))
        return j, ww, ss

    si, w, s = draw_state()
    c = ctxs[si]

    def snap(j: int, ww: Sequence[float], ss: Sequence[float]) -> MetricSample:
        return MetricSample(j, skels[j], tuple(ww), tuple(ss))

    n_ref = a_ref = n_len = a_len = n_spin = a_spin = 0
    trace: list[float] = []
    kept = 0
    total_sweeps = cfg.burn_in + steps * cfg.thinning

    for sweep in range(total_sweeps):
        if sweep % cfg.refresh_every == 0:
            j2, w2, s2 = draw_state()
            c2 = ctxs[j2]
            lr = (log_pi(c2, w2, s2) - log_prop(c2, w2, s2)) - (
                log_pi(c, w, s) - log_prop(c, w, s)
            )
            n_ref += 1
            ok = lr >= 0 or rng.random() < math.exp(lr)
            if record is not None:
                record.append(
                    TransitionRecord("refresh", snap(si, w, s), snap(j2, w2, s2), lr, ok)
                )
            if ok:
                si, w, s, c = j2, w2, s2, c2
                a_ref += 1

        for i in range(c.n_edges):
            ka, ia, kb, ib = c.ends[i]
            x = bvals[ia] if ka == 0 else s[ia]
            y = bvals[ib] if kb == 0 else s[ib]
            d2 = (x - y) * (x - y)
            w1 = w[i]
            z = rng.gauss(0.0, cfg.length_step)
            w2e = w1 * math.exp(z)
            lr = (
                (-lam * w2e - d2 / (2.0 * w2e) - 0.5 * math.log(w2e))
                - (-lam * w1 - d2 / (2.0 * w1) - 0.5 * math.log(w1))
                + z
            )
            n_len += 1
            ok = lr >= 0 or rng.random() < math.exp(lr)
            if record is not None:
                before = snap(si, w, s)
                wp = list(w)
                wp[i] = w2e
                record.append(
                    TransitionRecord("length", before, snap(si, wp, s), lr, ok)
                )
            if ok:
                w[i] = w2e
                a_len += 1

        if disc:
            for j in range(c.n_internal):
                logs = []
                for a_i, atom in enumerate(atoms):
                    t = atom_logw[a_i]
                    for e, ok_, oi in c.incident[j]:
                        o = bvals[oi] if ok_ == 0 else s[oi]
                        t -= (atom - o) * (atom - o) / (2.0 * w[e])
                    logs.append(t)
                mlog = max(logs)
                weights = [math.exp(t - mlog) for t in logs]
                tot = sum(weights)
                r = rng.random() * tot
                pick = len(weights) - 1
                run = 0.0
                for idx, wt in enumerate(weights):
                    run += wt
                    if r < run:
                        pick = idx
                        break
                n_spin += 1
                a_spin += 1
                if record is not None:
                    before = snap(si, w, s)
                    sp = list(s)
                    sp[j] = atoms[pick]
                    lr = logs[pick] - logs[atoms.index(s[j])]
                    record.append(
                        TransitionRecord("gibbs", before, snap(si, w, sp), lr, True)
                    )
                s[j] = atoms[pick]
        else:
            for j in range(c.n_internal):
                s1 = s[j]
                s2v = s1 + rng.gauss(0.0, cfg.spin_step)
                dlp = 0.0
                for e, ok_, oi in c.incident[j]:
                    o = bvals[oi] if ok_ == 0 else s[oi]
                    dlp += ((s1 - o) * (s1 - o) - (s2v - o) * (s2v - o)) / (
                        2.0 * w[e]
                    )
                n_spin += 1
                ok = dlp >= 0 or rng.random() < math.exp(dlp)
                if record is not None:
                    before = snap(si, w, s)
                    sp = list(s)
                    sp[j] = s2v
                    record.append(
                        TransitionRecord("spin", before, snap(si, w, sp), dlp, ok)
                    )
                if ok:
                    s[j] = s2v
                    a_spin += 1

        k = sweep - cfg.burn_in
        if k >= 0 and (k + 1) % cfg.thinning == 0:
            collect(kept, si, w, s)
            trace.append(sum(w))
            kept += 1

    return ChainDiagnostics(
        sweeps=total_sweeps,
        kept=kept,
        refresh_proposed=n_ref,
        refresh_accepted=a_ref,
        length_proposed=n_len,
        length_accepted=a_len,
        spin_proposed=n_spin,
        spin_accepted=a_spin,
        ess_total_length=_ess(trace),
    )


def mcmc_sample_metric(
    ell: int,
    b: Boundary,
    params: MetricParams,
    steps: int,
    rng: Random,
    *,
    log_transitions: bool = False,
) -> MetricChain:
    """Draw ``steps`` metric maps with values from the capped ensemble.

    The chain alternates an independence refresh (fresh skeleton, fresh
    reference values, lengths from the exact per-edge conditional law), a
    log-scale random walk per edge length, and per-vertex value updates.
    Burn-in and thinning come from ``params.mcmc``.  With
    ``log_transitions`` every proposal is kept as a ``TransitionRecord``,
    which is only sane for short runs.

    Raises:
        OutOfBounds: ``steps < 1`` or a bad boundary value.
        WrongPerimeter: ``b`` does not have ``2 * ell`` values.
        CapUnsatisfiable: the cap admits no skeleton.
        SingularForm: a skeleton insulates a vertex from the boundary,
            which the dual of a complete map never does; kept as a guard
            for the Lebesgue reference measure.
    """
    if steps < 1:
        raise OutOfBounds(f"steps {steps}")
    bvals = _boundary_values(b, ell)
    skels = capped_skeletons(ell, params.skeleton_cap)
    samples: list[MetricSample] = []

    def collect(k: int, si: int, w: list[float], s: list[float]) -> None:
        samples.append(MetricSample(si, skels[si], tuple(w), tuple(s)))

    record: Optional[list] = [] if log_transitions else None
    diag = _run_chain(ell, bvals, params, steps, rng, collect, record)
    return MetricChain(
        ell,
        _as_bc(b, ell),
        params,
        tuple(samples),
        diag,
        tuple(record) if record else (),
    )


# ---------------------------------------------------------------------------
# decorated metric maps and length exploration


@dataclass(frozen=True)
class DecoratedMetricMap:
    """A metric map with boundary values, vertex values and edge paths.

    ``paths[i]`` runs from the smaller-dart end of ``skeleton.edges[i]``
    to its alpha end; its endpoints must equal the incident values exactly
    and its duration must equal the edge length.

    Raises:
        WrongPerimeter: boundary length mismatch.
        MissingSpin: wrong number of vertex values.
        BadGrid: a path disagrees with its edge or its endpoint values.
        OutOfBounds: a non-scalar value.
    """

    mm: MetricMap
    boundary: BoundaryCondition
    spins: tuple[float, ...]
    paths: tuple[BridgePath, ...]

    def __post_init__(self):
        skel = self.mm.skeleton
        if not isinstance(self.boundary, BoundaryCondition):
            object.__setattr__(
                self, "boundary", BoundaryCondition(tuple(self.boundary))
            )
        _as_bc(self.boundary, skel.semi_perimeter)
        object.__setattr__(self, "spins", tuple(_scalar(x) for x in self.spins))
        bvals = tuple(_scalar(x) for x in self.boundary)
        if len(self.spins) != skel.n_internal:
            raise MissingSpin(
                f"{len(self.spins)} values for {skel.n_internal} internal vertices"
            )
        if len(self.paths) != skel.n_edges:
            raise BadGrid(f"{len(self.paths)} paths for {skel.n_edges} edges")
        ctx = _ctx(skel)
        for i, p in enumerate(self.paths):
            if p.w != self.mm.lengths[i]:
                raise BadGrid(
                    f"path {i} spans {p.w}, edge length {self.mm.lengths[i]}"
                )
            ka, ia, kb, ib = ctx.ends[i]
            x = bvals[ia] if ka == 0 else self.spins[ia]
            y = bvals[ib] if kb == 0 else self.spins[ib]
            if p.u != x or p.v != y:
                raise BadGrid(f"path {i} endpoints differ from the incident values")

    def end_value(self, dart: int) -> float:
        """The fixed value at the vertex end of ``dart``."""
        ctx = _ctx(self.mm.skeleton)
        k, i = ctx.dart_code[dart]
        return _scalar(self.boundary[i]) if k == 0 else self.spins[i]


def decorate_metric_map(
    mm: MetricMap,
    b: Boundary,
    spins: VertexValues,
    rng: Random,
    *,
    grid: int = 64,
) -> DecoratedMetricMap:
    """Attach vertex values and bridge paths to a metric map.

    Each edge gets an independent bridge between its endpoint values on a
    uniform grid of ``grid`` steps, so the step is ``w_e / grid``.

    Raises:
        BadGrid: ``grid < 1``.
        WrongPerimeter / MissingSpin / OutOfBounds: value problems.
    """
    if grid < 1:
        raise BadGrid(f"grid {grid}")
    skel = mm.skeleton
    ctx = _ctx(skel)
    bvals = _boundary_values(b, skel.semi_perimeter)
    s = _vertex_values(ctx, spins)
    paths = []
    for i, (ka, ia, kb, ib) in enumerate(ctx.ends):
        x = bvals[ia] if ka == 0 else s[ia]
        y = bvals[ib] if kb == 0 else s[ib]
        w = mm.lengths[i]
        paths.append(bridge_sample(x, y, w, w / grid, rng))
    return DecoratedMetricMap(
        mm, _as_bc(b, skel.semi_perimeter), tuple(s), tuple(paths)
    )


def sample_decorated_metric(
    ell: int,
    b: Boundary,
    params: MetricParams,
    steps: int,
    rng: Random,
    *,
    grid: int = 64,
) -> list[DecoratedMetricMap]:
    """Chain-sample ``steps`` maps and decorate each with bridge paths."""
    chain = mcmc_sample_metric(ell, b, params, steps, rng)
    return [
        decorate_metric_map(sm.metric_map, chain.boundary, sm.spins, rng, grid=grid)
        for sm in chain
    ]


@dataclass(frozen=True)
class Type3Result:
    """What one length-peel revealed.

    ``segment`` lists (distance from the peeled end, value) pairs covering
    the newly revealed stretch, endpoints included, grid nodes in between;
    ``tip_value`` is the value at its far end.  When the peel exhausts the
    edge, ``full`` is set and, if the far vertex was hidden, it is reported
    together with the darts that become active around it, in rotation
    order after the arrival dart.
    """

    dart: int
    edge: int
    requested: float
    consumed: float
    full: bool
    segment: tuple[tuple[float, float], ...]
    tip_value: float
    revealed_vertex: Optional[int]
    new_active: tuple[int, ...]


@dataclass(frozen=True)
class MetricExploration:
    """Progress of a length exploration over one decorated metric map.

    ``consumed[i]`` is how much of edge i has been revealed from its
    smaller-dart end and from its alpha end.  A dart is active when its
    vertex is revealed and its edge still has unexplored length.
    """

    dmm: DecoratedMetricMap
    consumed: tuple[tuple[float, float], ...]
    revealed: frozenset[int]
    closed: frozenset[int]

    def remaining(self, e: int) -> float:
        a, b = self.consumed[e]
        return self.dmm.mm.lengths[e] - a - b

    def is_active(self, dart: int) -> bool:
        skel = self.dmm.mm.skeleton
        if not 0 <= dart < skel.rot.n_darts:
            return False
        return (
            skel.rot.vertex_of[dart] in self.revealed
            and skel.edge_of(dart) not in self.closed
        )

    def active_darts(self) -> tuple[int, ...]:
        skel = self.dmm.mm.skeleton
        return tuple(d for d in range(skel.rot.n_darts) if self.is_active(d))

    @property
    def finished(self) -> bool:
        return len(self.closed) == self.dmm.mm.skeleton.n_edges


def start_metric_exploration(dmm: DecoratedMetricMap) -> MetricExploration:
    """Fresh exploration: the hub is revealed, nothing is consumed."""
    skel = dmm.mm.skeleton
    return MetricExploration(
        dmm,
        ((0.0, 0.0),) * skel.n_edges,
        frozenset({skel.root_vertex}),
        frozenset(),
    )


def _first_node_after(p: float, h: float, tol: float) -> int:
    k = math.floor(p / h)
    while k * h <= p + tol:
        k += 1
    return k


def _last_node_before(p: float, h: float, tol: float) -> int:
    k = math.ceil(p / h)
    while k * h >= p - tol:
        k -= 1
    return k


def type3_peel(
    expl: MetricExploration, dart: int, length: float
) -> tuple[MetricExploration, Type3Result]:
    """Reveal up to ``length`` of the edge at ``dart``, from its end.

    Peeling less than the unexplored remainder exposes an interior point
    whose value is read off the stored bridge; peeling to or past the far
    end closes the edge, reveals the far vertex if it was hidden, and
    activates the other edge ends around it.  Two peels of L/2 then L/2
    reveal the same points and values as one peel of L whenever the stops
    land on grid nodes.

    Raises:
        NonpositiveLength: ``length <= 0``.
        NotActive: the dart's vertex is not revealed, its edge is spent,
            or the dart is outside the map.
    """
    if not (length > 0 and math.isfinite(length)):
        raise NonpositiveLength(f"peel length {length}")
    dmm = expl.dmm
    skel = dmm.mm.skeleton
    rot = skel.rot
    if not 0 <= dart < rot.n_darts:
        raise NotActive(f"dart {dart} outside the map")
    e = skel.edge_of(dart)
    if rot.vertex_of[dart] not in expl.revealed:
        raise NotActive(f"dart {dart} sits at an unrevealed vertex")
    if e in expl.closed:
        raise NotActive(f"edge {e} is already fully explored")

    from_canon = dart == skel.edges[e]
    c_this, c_far = (
        expl.consumed[e] if from_canon else expl.consumed[e][::-1]
    )
    rem = dmm.mm.lengths[e] - c_this - c_far
    full = length >= rem
    step = rem if full else length
    a, bdist = c_this, c_this + step

    path = dmm.paths[e]
    w, h = path.w, path.h
    if from_canon:
        lo, hi = a, bdist
    else:
        lo, hi = w - bdist, w - a
    tol = 1e-9 * h
    ks = range(
        _first_node_after(lo, h, tol), _last_node_before(hi, h, tol) + 1
    )
    mid = [
        ((k * h if from_canon else w - k * h), path.values[k]) for k in ks
    ]
    if not from_canon:
        mid.reverse()
    v_a = path.value_at(a if from_canon else w - a)
    v_b = path.value_at(bdist if from_canon else w - bdist)
    segment = ((a, v_a), *mid, (bdist, v_b))

    cons = list(expl.consumed)
    na, nb = expl.consumed[e]
    if from_canon:
        na += step
    else:
        nb += step
    cons[e] = (na, nb)
    revealed = expl.revealed
    closed = expl.closed
    revealed_vertex: Optional[int] = None
    new_active: tuple[int, ...] = ()
    if full:
        closed = closed | {e}
        far = rot.alpha[dart]
        vf = rot.vertex_of[far]
        if vf not in revealed:
            revealed = revealed | {vf}
            revealed_vertex = vf
            ring = []
            d2 = rot.sigma[far]
            while d2 != far:
                ring.append(d2)
                d2 = rot.sigma[d2]
            new_active = tuple(ring)

    out = MetricExploration(dmm, tuple(cons), revealed, closed)
    res = Type3Result(
        dart, e, length, step, full, segment, v_b, revealed_vertex, new_active
    )
    return out, res


# ---------------------------------------------------------------------------
# distributional checks


@dataclass(frozen=True)
class P3Point:
    """Survival density estimate at one cut depth."""

    t: float
    estimate: float
    log_estimate: float
    se_log: float
    n_hits: int


@dataclass(frozen=True)
class P3Report:
    """Least-squares fit of the log survival estimate against depth.

    The estimate at each t is the chain average of the conditional window
    probability that the root-edge value at depth t falls within ``eps``
    of the root boundary value, normalised by the window mass of the
    centred Gaussian with variance t.  For a survival density of the form
    ``exp(-c t) / sqrt(2 pi t)`` times the two-point factor, the fitted
    line has slope ``-c`` and intercept exactly 0; standard errors come
    from batch means and carry the cross-depth covariance.
    """

    points: tuple[P3Point, ...]
    slope: float
    slope_se: float
    intercept: float
    intercept_se: float
    r_squared: float
    eps: float
    n_samples: int
    diagnostics: ChainDiagnostics

    @property
    def rate(self) -> float:
        """The fitted exponential rate, ``-slope``."""
        return -self.slope

    def rows(self) -> list[dict[str, object]]:
        """One record per grid depth, ready for tabular output."""
        return [
            {
                "t": p.t,
                "estimate": p.estimate,
                "log_estimate": p.log_estimate,
                "se_log": p.se_log,
                "n_hits": p.n_hits,
            }
            for p in self.points
        ]


def p3_shape_test(
    ell: int,
    b: Boundary,
    params: MetricParams,
    t_grid: Sequence[float],
    n_samples: int,
    rng: Random,
    *,
    eps: float = 0.05,
    batches: int = 50,
    min_hits: int = 50,
) -> P3Report:
    """Estimate the root-edge survival density and fit its shape.

    For each kept chain state with root-edge length w > t, the value at
    depth t given the edge's endpoint values is Gaussian with mean
    ``b0 + (t / w)(z - b0)`` and variance ``t (w - t) / w``; its window
    probability is averaged over all states (zero when w <= t) and
    normalised by the window mass of the centred Gaussian with variance
    t.  Cutting at depth t maps survivors weight-for-weight onto fresh
    maps with the tip value in the boundary, and the window is centred at
    ``b0`` where that substitution changes nothing, so the normalised
    estimate equals ``exp(-lam t)`` up to noise and a residual window
    bias quadratic in ``eps`` through the splice weight alone.

    Raises:
        OutOfBounds: empty or non-increasing ``t_grid``, bad ``eps`` or
            counts.
        InsufficientHits: fewer than ``min_hits`` survivors at some depth.
    """
    ts = [float(t) for t in t_grid]
    if not ts or any(t <= 0 for t in ts) or any(
        t2 <= t1 for t1, t2 in zip(ts, ts[1:])
    ):
        raise OutOfBounds(f"depth grid {t_grid!r}")
    if not (eps > 0 and math.isfinite(eps)):
        raise OutOfBounds(f"window width {eps}")
    if n_samples < 100:
        raise OutOfBounds(f"{n_samples} samples is too few to fit anything")
    if batches < 3:
        raise OutOfBounds(f"{batches} batches")
    batches = min(batches, n_samples // 20)

    bvals = _boundary_values(b, ell)
    ctxs = [_ctx(sk) for sk in capped_skeletons(ell, params.skeleton_cap)]
    fars = [(c.root_edge, c.far_end) for c in ctxs]
    b0 = bvals[0]

    w_arr = np.empty(n_samples)
    z_arr = np.empty(n_samples)

    def collect(k: int, si: int, w: list[float], s: list[float]) -> None:
        e, (fk, fi) = fars[si]
        w_arr[k] = w[e]
        z_arr[k] = bvals[fi] if fk == 0 else s[fi]

    diag = _run_chain(ell, bvals, params, n_samples, rng, collect)

    usable = n_samples - n_samples % batches
    w_arr = w_arr[:usable]
    z_arr = z_arr[:usable]

    T = len(ts)
    bm = np.empty((batches, T))
    points = []
    full = np.empty(usable)
    for j, t in enumerate(ts):
        mask = w_arr > t
        hits = int(mask.sum())
        if hits < min_hits:
            raise InsufficientHits(f"{hits} survivors at depth {t}")
        wm = w_arr[mask]
        mean = b0 + (t / wm) * (z_arr[mask] - b0)
        sd = np.sqrt(t * (wm - t) / wm)
        p = _ndtr((b0 + eps - mean) / sd) - _ndtr((b0 - eps - mean) / sd)
        full[:] = 0.0
        full[mask] = p
        # window mass of the centred Gaussian with variance t, so the
        # normalised estimate is free of the quadratic window bias
        scale = 1.0 / (2.0 * float(_ndtr(eps / math.sqrt(t))) - 1.0)
        bm[:, j] = full.reshape(batches, -1).mean(axis=1) * scale
        points.append((t, hits))

    est = bm.mean(axis=0)
    if np.any(est <= 0):
        raise InsufficientHits("a depth had no window mass in any batch")
    cov = np.cov(bm, rowvar=False) / batches
    cov = np.atleast_2d(cov)
    y = np.log(est)
    sigma = cov / np.outer(est, est)
    sigma[np.diag_indices_from(sigma)] *= 1.0 + 1e-9

    X = np.column_stack([np.ones(T), np.asarray(ts)])
    solve = np.linalg.solve
    A = X.T @ solve(sigma, X)
    rhs = X.T @ solve(sigma, y)
    cov_beta = np.linalg.inv(A)
    beta = cov_beta @ rhs
    resid = y - X @ beta
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0

    pts = tuple(
        P3Point(
            t=t,
            estimate=float(est[j]),
            log_estimate=float(y[j]),
            se_log=float(math.sqrt(max(sigma[j, j], 0.0))),
            n_hits=hits,
        )
        for j, (t, hits) in enumerate(points)
    )
    return P3Report(
        points=pts,
        slope=float(beta[1]),
        slope_se=float(math.sqrt(max(cov_beta[1, 1], 0.0))),
        intercept=float(beta[0]),
        intercept_se=float(math.sqrt(max(cov_beta[0, 0], 0.0))),
        r_squared=r2,
        eps=eps,
        n_samples=usable,
        diagnostics=diag,
    )


def _ks_gof(a: Sequence[float], b: Sequence[float]) -> GofResult:
    res = _ks_2samp(np.asarray(a), np.asarray(b))
    return GofResult(
        float(res.statistic),
        0,
        float(res.pvalue),
        len(a) + len(b),
        (("left", len(a), 0.0), ("right", len(b), 0.0)),
    )


def mid_edge_markov_test(
    ell: int,
    b: Boundary,
    params: MetricParams,
    t: float,
    n_samples: int,
    rng: Random,
    *,
    bins: int = 4,
    min_stratum: int = 400,
    top_k: int = 6,
) -> MarkovTestReport:
    """Stop on the root edge at depth ``t`` and test the remainder law.

    Chain states whose root edge survives depth ``t`` get a tip value
    drawn from the exact conditional bridge law.  Survivors are kept when
    the tip falls in one of ``bins`` narrow windows centred at evenly
    spaced tip quantiles; each window extends 0.35 of the gap to the
    nearest neighbouring centre on either side, so windows are disjoint
    and tips between them are discarded.  Within each window the
    remainder (residual root-edge length, skeleton class, and the value
    at the far end of the root edge when it is internal) is compared
    two-sample against a fresh chain whose boundary carries the
    window-mean tip value at position 0, the splice the cut implies.
    Freezing the reference at a point value biases the comparison at
    second order in the tip spread, which is why narrow windows replace
    a full partition into quantile bins.  With ``bins == 1`` every
    survivor lands in a single stratum.

    Raises:
        NonpositiveLength: ``t <= 0``.
        OutOfBounds: bad counts or bins.
        WrongPerimeter: ``b`` does not have ``2 * ell`` values.
        EventNeverHit: no sampled root edge exceeds ``t``.
        BinTooThin: no tip-value stratum reached ``min_stratum``.
    """
    if not (t > 0 and math.isfinite(t)):
        raise NonpositiveLength(f"stop depth {t}")
    if n_samples < 10:
        raise OutOfBounds(f"{n_samples} samples")
    if bins < 1:
        raise OutOfBounds(f"{bins} bins")

    bvals = _boundary_values(b, ell)
    skels = capped_skeletons(ell, params.skeleton_cap)
    ctxs = [_ctx(sk) for sk in skels]
    fars = [(c.root_edge, c.far_end) for c in ctxs]
    b0 = bvals[0]

    w_arr = np.empty(n_samples)
    z_arr = np.empty(n_samples)
    si_arr = np.empty(n_samples, dtype=np.int64)

    def collect(k: int, si: int, w: list[float], s: list[float]) -> None:
        e, (fk, fi) = fars[si]
        w_arr[k] = w[e]
        z_arr[k] = bvals[fi] if fk == 0 else s[fi]
        si_arr[k] = si

    _run_chain(ell, bvals, params, n_samples, rng, collect)

    mask = w_arr > t
    n_hit = int(mask.sum())
    if n_hit == 0:
        raise EventNeverHit(f"no root edge survived depth {t} in {n_samples} states")
    wm = w_arr[mask]
    zm = z_arr[mask]
    sm = si_arr[mask]
    mean = b0 + (t / wm) * (zm - b0)
    sd = np.sqrt(t * (wm - t) / wm)
    tips = np.array([rng.gauss(m, s) for m, s in zip(mean, sd)])

    if bins == 1:
        assign = np.zeros(n_hit, dtype=np.int64)
    else:
        centers = np.quantile(tips, (np.arange(bins) + 0.5) / bins)
        gaps = np.diff(centers)
        half = np.empty(bins)
        half[0] = gaps[0]
        half[-1] = gaps[-1]
        if bins > 2:
            half[1:-1] = np.minimum(gaps[:-1], gaps[1:])
        half *= 0.35
        assign = np.full(n_hit, -1, dtype=np.int64)
        for kbin in range(bins):
            assign[np.abs(tips - centers[kbin]) <= half[kbin]] = kbin

    internal_far = np.array([fars[i][1][0] == 1 for i in range(len(skels))])

    marginals: list[HoleMarginal] = []
    n_used = 0
    for kbin in range(bins):
        sel = assign == kbin
        n_bin = int(sel.sum())
        if n_bin < min_stratum:
            continue
        n_used += n_bin
        xbar = float(tips[sel].mean())
        group = f"bin[{kbin}]@{xbar:.3g}"

        b2 = (xbar,) + bvals[1:]
        fw = np.empty(n_bin)
        fz = np.empty(n_bin)
        fsi = np.empty(n_bin, dtype=np.int64)

        def fcollect(k: int, si: int, w: list[float], s: list[float]) -> None:
            e, (fk, fi) = fars[si]
            fw[k] = w[e]
            fz[k] = b2[fi] if fk == 0 else s[fi]
            fsi[k] = si

        _run_chain(ell, b2, params, n_bin, rng, fcollect)

        residual = wm[sel] - t
        marginals.append(
            HoleMarginal(
                f"{group}:length", 0, ell, _ks_gof(residual.tolist(), fw.tolist())
            )
        )

        pairs: dict[tuple[str, int], int] = {}
        for v in sm[sel]:
            key = ("stopped", int(v))
            pairs[key] = pairs.get(key, 0) + 1
        for v in fsi:
            key = ("fresh", int(v))
            pairs[key] = pairs.get(key, 0) + 1
        marginals.append(
            HoleMarginal(
                f"{group}:skeleton", 0, ell, independence_test(pairs, top_k=top_k)
            )
        )

        cond_far = zm[sel][internal_far[sm[sel]]]
        fresh_far = fz[internal_far[fsi]]
        if len(cond_far) >= min_stratum // 2 and len(fresh_far) >= min_stratum // 2:
            if params.mu.is_discrete:
                fpairs: dict[tuple[str, float], int] = {}
                for v in cond_far:
                    key = ("stopped", float(v))
                    fpairs[key] = fpairs.get(key, 0) + 1
                for v in fresh_far:
                    key = ("fresh", float(v))
                    fpairs[key] = fpairs.get(key, 0) + 1
                gof = independence_test(fpairs, top_k=top_k)
            else:
                gof = _ks_gof(cond_far.tolist(), fresh_far.tolist())
            marginals.append(HoleMarginal(f"{group}:farvalue", 0, ell, gof))

    if not marginals:
        raise BinTooThin(
            f"{n_hit} survivors, but no tip window reached {min_stratum}"
        )

    return MarkovTestReport(
        marginals=tuple(marginals),
        independence=(),
        n_sampled=n_samples,
        n_used=n_used,
        reference=(
            "fresh capped chains with the window-mean tip value spliced "
            "into boundary position 0"
        ),
        truncation=(
            f"skeletons capped at {params.skeleton_cap} internal vertices; "
            "cutting the root edge preserves the cap, so the comparison has "
            "no truncation bias"
        ),
    )
