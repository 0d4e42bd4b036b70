"""Spin decorations on the faces of quadrangulations with boundary.

The outer face is replaced by one phantom face per boundary-walk position,
each carrying a fixed boundary value.  A quadratic energy couples values
across every edge, a reference measure weighs each internal face's value,
and the decorated law weighs a map by q^faces times the resulting partition
value.  Partition values close exactly: summation for atomic measures,
linear algebra for the Lebesgue case.

The decorated fill-law test mirrors the undecorated one: conditionally on a
sample containing a fixed submap, and stratified by the spins the submap
reveals, every hole's fill (shape and spins together) must follow the same
family of laws with the revealed spins as boundary values.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product
from random import Random
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .boltzmann import CRITICAL_Q, RationalLike
from .census import count, generate_all
from .errors import (
    BinTooThin,
    CensusMissing,
    DegenerateTable,
    EventNeverHit,
    MissingSpin,
    NotAHole,
    OutOfBounds,
    SingularForm,
    TailToleranceNotMet,
    TooManyFaces,
    WrongPerimeter,
)
from .maps import MapWithHoles, is_submap, reroot, root_embedding
from .markov import HoleMarginal, MarkovTestReport, PairIndependence
from .peeling import encode
from .stats import chi_square_gof, independence_test

__all__ = [
    "EXACT_FACE_LIMIT",
    "SpinMeasure",
    "BoundaryCondition",
    "Decoration",
    "DecoratedParams",
    "internal_faces",
    "face_adjacency",
    "pendant_spans",
    "hamiltonian",
    "partition_decorated",
    "sample_decoration",
    "sample_decorated",
    "hole_boundary_condition",
    "decorated_weak_markov_test",
    "gibbs_ratio_check",
    "decorated_rerooting_check",
]

# exact summation guard: atomic partition values enumerate support^faces
EXACT_FACE_LIMIT = 20

Spin = Union[float, tuple[float, ...]]


def _sq(a: Spin, b: Spin) -> float:
    """Squared distance between two values, scalar or vector."""
    if isinstance(a, tuple) or isinstance(b, tuple):
        return sum((x - y) ** 2 for x, y in zip(a, b, strict=True))
    return (a - b) ** 2


@dataclass(frozen=True)
class SpinMeasure:
    """Reference measure for one face's value.

    Three kinds: ``ising`` (unit atoms at -1 and +1), ``gaussian`` (Lebesgue
    on the line), and ``discrete`` (a finite list of weighted atoms, scalar
    or vector).
    """

    kind: str
    support: tuple[Spin, ...] = ()
    weights: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("ising", "gaussian", "discrete"):
            raise OutOfBounds(f"unknown spin measure kind {self.kind!r}")
        if self.kind == "gaussian":
            if self.support or self.weights:
                raise OutOfBounds("the Lebesgue measure takes no atoms")
            return
        if not self.support:
            raise OutOfBounds("atomic measure needs a nonempty support")
        if len(self.weights) != len(self.support):
            raise OutOfBounds(
                f"{len(self.support)} atoms but {len(self.weights)} weights"
            )
        if any(w <= 0 for w in self.weights):
            raise OutOfBounds("atom weights must be positive")
        if len(set(self.support)) != len(self.support):
            raise OutOfBounds("support values repeat")

    @classmethod
    def ising(cls) -> "SpinMeasure":
        return cls("ising", (-1.0, 1.0), (1.0, 1.0))

    @classmethod
    def gaussian(cls) -> "SpinMeasure":
        return cls("gaussian")

    @classmethod
    def discrete(
        cls, support: Sequence[Spin], weights: Optional[Sequence[float]] = None
    ) -> "SpinMeasure":
        sup = tuple(
            tuple(float(x) for x in v) if isinstance(v, (tuple, list)) else float(v)
            for v in support
        )
        w = (1.0,) * len(sup) if weights is None else tuple(float(x) for x in weights)
        return cls("discrete", sup, w)

    @property
    def is_discrete(self) -> bool:
        return self.kind != "gaussian"

    @property
    def mass(self) -> float:
        """Total mass of an atomic measure."""
        if not self.is_discrete:
            raise OutOfBounds("the Lebesgue measure has no finite mass")
        return sum(self.weights)

    def __contains__(self, value: Spin) -> bool:
        return not self.is_discrete or value in self.support


@dataclass(frozen=True)
class BoundaryCondition:
    """Fixed values on the 2*ell outer positions, indexed along the boundary
    walk starting at the root dart."""

    values: tuple[Spin, ...]

    def __post_init__(self):
        if not self.values or len(self.values) % 2:
            raise WrongPerimeter(
                f"boundary condition has {len(self.values)} values, "
                "expected a positive even number"
            )

    @classmethod
    def constant(cls, ell: int, value: Spin) -> "BoundaryCondition":
        if ell < 1:
            raise WrongPerimeter(f"semi-perimeter {ell}")
        return cls((value,) * (2 * ell))

    def shifted(self, t: int) -> "BoundaryCondition":
        """Values seen after moving the root ``t`` positions along the walk."""
        n = len(self.values)
        t %= n
        return BoundaryCondition(self.values[t:] + self.values[:t])

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, k: int) -> Spin:
        return self.values[k]

    def __iter__(self):
        return iter(self.values)


def _as_bc(
    b, ell: int, mu: Optional[SpinMeasure] = None
) -> BoundaryCondition:
    """Coerce to a boundary condition of length 2*ell, checking support."""
    bc = b if isinstance(b, BoundaryCondition) else BoundaryCondition(tuple(b))
    if len(bc) != 2 * ell:
        raise WrongPerimeter(
            f"boundary condition has {len(bc)} values, expected {2 * ell}"
        )
    if mu is not None and mu.is_discrete:
        for v in bc:
            if v not in mu.support:
                raise OutOfBounds(f"boundary value {v!r} outside the support")
    return bc


@dataclass(frozen=True)
class Decoration:
    """Values on the internal faces of one map, keyed by face id."""

    faces: tuple[int, ...]
    values: tuple[Spin, ...]

    def __post_init__(self):
        if len(self.faces) != len(self.values):
            raise OutOfBounds(
                f"{len(self.faces)} faces but {len(self.values)} values"
            )
        if any(a >= b for a, b in zip(self.faces, self.faces[1:])):
            raise OutOfBounds("faces must be strictly increasing")

    @classmethod
    def of(cls, mapping: Mapping[int, Spin]) -> "Decoration":
        items = sorted(mapping.items())
        return cls(tuple(f for f, _ in items), tuple(v for _, v in items))

    def value(self, face: int) -> Spin:
        i = bisect_right(self.faces, face) - 1
        if i < 0 or self.faces[i] != face:
            raise MissingSpin(f"face {face} carries no value")
        return self.values[i]

    def as_dict(self) -> dict[int, Spin]:
        return dict(zip(self.faces, self.values))

    def __len__(self) -> int:
        return len(self.faces)


@dataclass(frozen=True)
class DecoratedParams:
    """Face weight, truncation depth, energy scale, and per-face measure.

    The default weight sits well below 1/12 because the decorated partition
    sum scales each face by the measure's mass; the tail certificate needs
    12 * mass * q < 1.
    """

    q: RationalLike = Fraction(1, 48)
    face_cap: int = 5
    tail_tol: float = 1e-2
    beta: float = 1.0
    mu: SpinMeasure = SpinMeasure.ising()

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
        if self.beta <= 0:
            raise OutOfBounds(f"beta = {self.beta}")


def internal_faces(m: MapWithHoles) -> tuple[int, ...]:
    """Face ids of ``m`` that are neither the root face nor a hole."""
    skip = set(m.hole_faces)
    skip.add(m.base.root_face)
    return tuple(f for f in range(m.base.n_faces) if f not in skip)


@lru_cache(maxsize=None)
def _face_terms(
    m: MapWithHoles,
) -> tuple[
    tuple[int, ...],
    tuple[tuple[tuple[int, int], int], ...],
    tuple[tuple[tuple[int, int], int], ...],
    tuple[tuple[int, int], ...],
]:
    """Edge terms of a complete map, faces resolved to slots and positions.

    Returns (internal faces, internal-internal terms ((slot, slot), mult),
    internal-outer terms ((slot, position), mult), and outer spans: position
    pairs joined by an edge with the outer face on both sides).  Edges with
    the same internal face on both sides separate nothing and are dropped.
    """
    if m.n_holes:
        raise NotAHole("phantom faces are defined on complete maps")
    base = m.base
    rf = base.root_face
    pos = {d: k for k, d in enumerate(m.boundary_walk())}
    faces = internal_faces(m)
    slot = {f: i for i, f in enumerate(faces)}
    ii: Counter = Counter()
    ib: Counter = Counter()
    spans: list[tuple[int, int]] = []
    for d in range(base.n_darts):
        a = base.alpha[d]
        if d > a:
            continue
        fd, fa = base.face_of[d], base.face_of[a]
        if fd == rf and fa == rf:
            spans.append((pos[d], pos[a]) if pos[d] < pos[a] else (pos[a], pos[d]))
        elif fd == rf:
            ib[(slot[fa], pos[d])] += 1
        elif fa == rf:
            ib[(slot[fd], pos[a])] += 1
        elif fd != fa:
            ii[(slot[fd], slot[fa]) if fd < fa else (slot[fa], slot[fd])] += 1
    return (
        faces,
        tuple(sorted(ii.items())),
        tuple(sorted(ib.items())),
        tuple(sorted(spans)),
    )


def face_adjacency(m: MapWithHoles) -> dict[tuple[int, int], int]:
    """Multigraph of edges between distinct faces, one count per edge.

    Internal faces keep their face ids; the phantom face at boundary-walk
    position k appears as ``-1 - k``.  Only pairs with at least one internal
    side are listed: edges with the outer face on both sides pair two
    boundary values instead (see ``pendant_spans``), and edges with the same
    internal face on both sides separate nothing.

    Raises:
        NotAHole: ``m`` still has holes.
    """
    faces, ii, ib, _ = _face_terms(m)
    out: dict[tuple[int, int], int] = {}
    for (i, j), mult in ii:
        out[(faces[i], faces[j])] = mult
    for (i, k), mult in ib:
        out[(-1 - k, faces[i])] = mult
    return out


def pendant_spans(m: MapWithHoles) -> tuple[tuple[int, int], ...]:
    """Boundary-walk position pairs joined by an edge with no internal side
    (the edges of trees hanging in the outer face)."""
    return _face_terms(m)[3]


def hamiltonian(
    m: MapWithHoles,
    sigma: Union[Decoration, Mapping[int, Spin]],
    b,
    beta: float = 1.0,
) -> float:
    """Quadratic energy of a decoration: half ``beta`` times the summed
    squared differences across every edge, each edge counted once.

    Sides on the outer face read the boundary value at their walk position,
    so an edge with the outer face on both sides compares two boundary
    values.

    Raises:
        MissingSpin: ``sigma`` lacks a value for some internal face.
        WrongPerimeter: ``b`` does not have one value per boundary position.
    """
    faces, ii, ib, spans = _face_terms(m)
    bc = _as_bc(b, m.semi_perimeter)
    if not isinstance(sigma, Decoration):
        sigma = Decoration.of(sigma)
    vals = [sigma.value(f) for f in faces]
    total = 0.0
    for (i, j), mult in ii:
        total += mult * _sq(vals[i], vals[j])
    for (i, k), mult in ib:
        total += mult * _sq(vals[i], bc[k])
    for k1, k2 in spans:
        total += _sq(bc[k1], bc[k2])
    return 0.5 * beta * total


def _atom_configs(
    mu: SpinMeasure, n: int
) -> tuple[tuple[tuple[Spin, ...], float], ...]:
    """All decorations of ``n`` faces by atoms, with their weight products."""
    atoms = tuple(zip(mu.support, mu.weights))
    out = []
    for combo in product(atoms, repeat=n):
        values = tuple(v for v, _ in combo)
        w = 1.0
        for _, x in combo:
            w *= x
        out.append((values, w))
    return tuple(out)


def _energy_terms(
    m: MapWithHoles, bc: BoundaryCondition, beta: float
) -> tuple[tuple[int, ...], list, float]:
    """Per-config energy pieces: faces, [(slots..., coefficient)], constant."""
    faces, ii, ib, spans = _face_terms(m)
    const = 0.0
    for k1, k2 in spans:
        const += _sq(bc[k1], bc[k2])
    return faces, [ii, ib], 0.5 * beta * const


def _config_energy(
    vals: Sequence[Spin],
    bc: BoundaryCondition,
    beta: float,
    ii,
    ib,
) -> float:
    total = 0.0
    for (i, j), mult in ii:
        total += mult * _sq(vals[i], vals[j])
    for (i, k), mult in ib:
        total += mult * _sq(vals[i], bc[k])
    return 0.5 * beta * total


def _gaussian_data(
    m: MapWithHoles, bc: BoundaryCondition, beta: float
) -> tuple[np.ndarray, np.ndarray, float, "np.ndarray"]:
    """Precision structure of the Lebesgue case: (L, c, constant, chol).

    The energy is beta/2 (x^T L x - 2 c^T x + constant) over internal-face
    values x; ``chol`` is the lower Cholesky factor of L.

    Raises:
        SingularForm: L is not positive definite.
        OutOfBounds: a boundary value is not scalar.
    """
    faces, ii, ib, spans = _face_terms(m)
    for v in bc:
        if isinstance(v, tuple):
            raise OutOfBounds("the Lebesgue case takes scalar values")
    n = len(faces)
    L = np.zeros((n, n))
    c = np.zeros(n)
    const = 0.0
    for (i, j), mult in ii:
        L[i, i] += mult
        L[j, j] += mult
        L[i, j] -= mult
        L[j, i] -= mult
    for (i, k), mult in ib:
        L[i, i] += mult
        c[i] += mult * bc[k]
        const += mult * bc[k] ** 2
    for k1, k2 in spans:
        const += (bc[k1] - bc[k2]) ** 2
    if n == 0:
        return L, c, const, L
    try:
        chol = np.linalg.cholesky(L)
    except np.linalg.LinAlgError as exc:
        raise SingularForm(
            "an internal face is insulated from the boundary"
        ) from exc
    return L, c, const, chol


def partition_decorated(m: MapWithHoles, b, params: DecoratedParams) -> float:
    """Partition value: the decoration integral of exp(-energy).

    Atomic measures are summed exactly over support^faces; the Lebesgue
    case closes through the determinant and mean of its precision form.
    A map with no internal faces integrates nothing, leaving only the
    boundary-to-boundary terms.

    Raises:
        NotAHole: ``m`` still has holes.
        TooManyFaces: exact summation asked over more than 20 faces.
        SingularForm: the Lebesgue precision form is not positive definite.
    """
    bc = _as_bc(b, m.semi_perimeter, params.mu)
    beta = params.beta
    if params.mu.is_discrete:
        faces, (ii, ib), const = _energy_terms(m, bc, beta)
        if len(faces) > EXACT_FACE_LIMIT:
            raise TooManyFaces(
                f"{len(faces)} faces; exact summation stops at {EXACT_FACE_LIMIT}"
            )
        z = 0.0
        for vals, w in _atom_configs(params.mu, len(faces)):
            z += w * math.exp(-const - _config_energy(vals, bc, beta, ii, ib))
        return z
    L, c, const, chol = _gaussian_data(m, bc, beta)
    n = len(c)
    if n == 0:
        return math.exp(-0.5 * beta * const)
    mean_term = float(c @ np.linalg.solve(L, c))
    logdet = 2.0 * float(np.log(np.diag(chol)).sum())
    return math.exp(
        -0.5 * beta * (const - mean_term)
        + 0.5 * n * math.log(2.0 * math.pi / beta)
        - 0.5 * logdet
    )


# ---------------------------------------------------------------------------
# the decorated law: truncated tables and exact conditional decorations

_census_cache: dict[tuple[int, int], tuple[MapWithHoles, ...]] = {}


def _census(ell: int, f: int) -> tuple[MapWithHoles, ...]:
    key = (ell, f)
    got = _census_cache.get(key)
    if got is None:
        _census_cache[key] = got = tuple(generate_all(ell, f))
    return got


@dataclass(frozen=True)
class _Table:
    maps: tuple[MapWithHoles, ...]
    cum: tuple[float, ...]
    total: float
    tail_bound: float


_tables: dict[tuple, _Table] = {}


def _law_table(
    ell: int,
    bc: BoundaryCondition,
    params: DecoratedParams,
    face_cap: Optional[int] = None,
    certified: bool = True,
) -> _Table:
    """Weights q^faces * partition value over the truncated class, with a
    geometric bound on the neglected tail.

    The bound is enforced only when ``certified``: sampling stands in for
    the untruncated law and must prove the tail negligible, while exact
    statements about the truncated family itself (conditional fill laws,
    ratio and rerooting identities) hold at any cap.

    Raises:
        TailToleranceNotMet: certified and the bound exceeds ``tail_tol``
            (always the case when 12 * mass * q >= 1, where the geometric
            bound is void).
    """
    cap = params.face_cap if face_cap is None else face_cap
    key = (ell, bc.values, params, cap)
    table = _tables.get(key)
    if table is None:
        maps: list[MapWithHoles] = []
        cum: list[float] = []
        acc = 0.0
        for f in range(cap + 1):
            qf = float(params.q**f)
            if qf == 0.0 and f > 0:
                break
            for m in _census(ell, f):
                acc += qf * partition_decorated(m, bc, params)
                maps.append(m)
                cum.append(acc)
        mass = (
            params.mu.mass
            if params.mu.is_discrete
            else math.sqrt(2.0 * math.pi / params.beta)
        )
        per_face = float(params.q) * mass
        nxt = count(ell, cap + 1) * per_face ** (cap + 1)
        if nxt == 0.0:
            rel = 0.0
        elif 12.0 * per_face >= 1.0:
            rel = float("inf")
        else:
            rel = nxt / (1.0 - 12.0 * per_face) / acc
        _tables[key] = table = _Table(tuple(maps), tuple(cum), acc, rel)
    if certified and table.tail_bound > params.tail_tol:
        raise TailToleranceNotMet(
            f"relative tail {table.tail_bound:.3g} > {params.tail_tol:.3g} "
            f"(ell={ell}, cap={cap})"
        )
    return table


@lru_cache(maxsize=None)
def _atom_sampler(
    m: MapWithHoles, bc: BoundaryCondition, params: DecoratedParams
) -> tuple[tuple[tuple[Spin, ...], ...], tuple[float, ...]]:
    """Configurations of ``m`` with cumulative conditional weights."""
    faces, (ii, ib), const = _energy_terms(m, bc, params.beta)
    if len(faces) > EXACT_FACE_LIMIT:
        raise TooManyFaces(
            f"{len(faces)} faces; exact summation stops at {EXACT_FACE_LIMIT}"
        )
    configs: list[tuple[Spin, ...]] = []
    cum: list[float] = []
    acc = 0.0
    for vals, w in _atom_configs(params.mu, len(faces)):
        acc += w * math.exp(-const - _config_energy(vals, bc, params.beta, ii, ib))
        configs.append(vals)
        cum.append(acc)
    return tuple(configs), tuple(cum)


@lru_cache(maxsize=None)
def _gaussian_sampler(
    m: MapWithHoles, bc: BoundaryCondition, params: DecoratedParams
) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and lower Cholesky factor of the precision matrix."""
    L, c, _, chol = _gaussian_data(m, bc, params.beta)
    mean = np.linalg.solve(L, c) if len(c) else c
    return mean, chol


def sample_decoration(
    m: MapWithHoles, b, params: DecoratedParams, rng: Random
) -> Decoration:
    """Decoration drawn from the exact conditional law given the map.

    Atomic measures invert the exact configuration CDF; the Lebesgue case
    draws the multivariate normal determined by the precision form.
    """
    bc = _as_bc(b, m.semi_perimeter, params.mu)
    faces = _face_terms(m)[0]
    if not faces:
        return Decoration((), ())
    if params.mu.is_discrete:
        configs, cum = _atom_sampler(m, bc, params)
        i = bisect_right(cum, rng.random() * cum[-1])
        return Decoration(faces, configs[min(i, len(configs) - 1)])
    mean, chol = _gaussian_sampler(m, bc, params)
    z = np.array([rng.gauss(0.0, 1.0) for _ in faces])
    x = mean + np.linalg.solve(chol.T, z) / math.sqrt(params.beta)
    return Decoration(faces, tuple(float(v) for v in x))


def sample_decorated(
    ell: int, b, params: DecoratedParams, rng: Random
) -> tuple[MapWithHoles, Decoration]:
    """Map and decoration drawn from the truncated decorated law: the map
    with probability proportional to q^faces times its partition value,
    then the decoration from its exact conditional."""
    bc = _as_bc(b, ell, params.mu)
    table = _law_table(ell, bc, params)
    i = bisect_right(table.cum, rng.random() * table.total)
    m = table.maps[min(i, len(table.maps) - 1)]
    return m, sample_decoration(m, bc, params, rng)


def hole_boundary_condition(
    q: MapWithHoles,
    hole: int,
    spins: Union[Decoration, Mapping[int, Spin]],
    b,
) -> BoundaryCondition:
    """Boundary values a fill of the given hole inherits.

    Position k of the fill's own boundary walk meets the hole walk at
    position -k (gluing runs the two walks against each other), so the
    fill's value at k is the spin of the face looking into the hole there:
    an internal face's spin, or the outer boundary value where the hole
    touches the root face.

    Raises:
        MissingSpin: a face across the hole has no value (not revealed, or
            another hole).
    """
    bc = _as_bc(b, q.semi_perimeter)
    if not isinstance(spins, Decoration):
        spins = Decoration.of(spins)
    base = q.base
    walk = q.hole_walk(hole)
    n = len(walk)
    rpos = {d: k for k, d in enumerate(q.boundary_walk())}
    hole_set = set(q.hole_faces)
    out: list[Spin] = []
    for k in range(n):
        a = base.alpha[walk[(n - k) % n]]
        f = base.face_of[a]
        if f == base.root_face:
            out.append(bc[rpos[a]])
        elif f in hole_set:
            raise MissingSpin(f"face across hole {hole} is another hole")
        else:
            out.append(spins.value(f))
    return BoundaryCondition(tuple(out))


def _spin_key(values: Sequence[Spin]) -> str:
    return ",".join(
        "(" + ",".join(f"{x:g}" for x in v) + ")" if isinstance(v, tuple) else f"{v:g}"
        for v in values
    )


def _fill_class_probs(
    reps: Mapping[str, MapWithHoles],
    bc: BoundaryCondition,
    params: DecoratedParams,
    fill_cap: int,
    with_spins: bool,
) -> dict[str, float]:
    """Exact probability of each observed fill class under the hole's law."""
    ell = next(iter(reps.values())).semi_perimeter if reps else 1
    total = _law_table(ell, bc, params, face_cap=fill_cap, certified=False).total
    # several observed classes can share a fill shape; enumerate each once
    shapes: dict[str, MapWithHoles] = {}
    for label, p in reps.items():
        shapes.setdefault(label.split("|", 1)[0] if with_spins else label, p)
    out: dict[str, float] = {}
    for shape, p in shapes.items():
        qf = float(params.q**p.n_internal_faces)
        if not with_spins:
            out[shape] = qf * partition_decorated(p, bc, params) / total
            continue
        faces, (ii, ib), const = _energy_terms(p, bc, params.beta)
        for vals, w in _atom_configs(params.mu, len(faces)):
            key = f"{shape}|{_spin_key(sorted(vals))}"
            mass = (
                qf
                * w
                * math.exp(
                    -const - _config_energy(vals, bc, params.beta, ii, ib)
                )
                / total
            )
            out[key] = out.get(key, 0.0) + mass
    return out


def decorated_weak_markov_test(
    ell: int,
    b,
    params: DecoratedParams,
    subq: MapWithHoles,
    n_samples: int,
    rng: Random,
    *,
    bins: int = 4,
    min_stratum: int = 30,
    top_k: int = 4,
    min_expected: float = 5.0,
) -> MarkovTestReport:
    """Sample the decorated law and test, conditionally on the sample
    containing ``subq`` and stratified by the spins ``subq`` reveals, that
    every hole's fill follows the decorated law whose boundary values are
    the revealed spins.

    Atomic measures stratify by exact revealed values and test the joint
    class (fill shape, multiset of fill spins); the Lebesgue case stratifies
    by per-face quantile bins (an approximation knob: the reference uses
    each bin's mean as the boundary value) and tests fill shapes only.
    Spin multisets rather than placed spins keep the observable independent
    of how fills are relabeled on extraction; shapes with at most one face,
    which dominate every truncated law, lose nothing.

    Raises:
        NotAHole: ``subq`` has no holes.
        WrongPerimeter: ``subq`` boundary length differs from ``ell``.
        EventNeverHit: conditioning can never succeed, or never did.
        BinTooThin: no spin stratum reached ``min_stratum`` samples.
    """
    bc = _as_bc(b, ell, params.mu)
    if not subq.holes:
        raise NotAHole("conditioning map has no holes")
    if subq.semi_perimeter != ell:
        raise WrongPerimeter(
            f"conditioning map has semi-perimeter {subq.semi_perimeter}, "
            f"expected {ell}"
        )
    if subq.n_internal_faces > params.face_cap:
        raise EventNeverHit("conditioning map has more faces than the cap allows")
    sub_faces = internal_faces(subq)
    face_dart = {}
    for d in range(subq.base.n_darts):
        f = subq.base.face_of[d]
        if f in sub_faces and f not in face_dart:
            face_dart[f] = d
    single_hole = subq.n_holes == 1
    sub_darts = [d for d in range(subq.base.n_darts) if subq.base.face_of[d] in face_dart]

    revealed_list: list[tuple[Spin, ...]] = []
    rows: list[tuple[tuple[MapWithHoles, ...], tuple[Spin, ...]]] = []
    for _ in range(n_samples):
        m, sigma = sample_decorated(ell, bc, params, rng)
        iota = root_embedding(subq, m)
        if iota is None:
            continue
        fills = is_submap(subq, m)
        face_of_m = m.base.face_of
        revealed = tuple(
            sigma.value(face_of_m[iota[face_dart[f]]]) for f in sub_faces
        )
        leftover: tuple[Spin, ...] = ()
        if single_hole:
            covered = {face_of_m[iota[d]] for d in sub_darts}
            leftover = tuple(
                sorted(
                    sigma.value(f)
                    for f in internal_faces(m)
                    if f not in covered
                )
            )
        revealed_list.append(revealed)
        rows.append((fills, leftover))
    if not rows:
        raise EventNeverHit(
            f"no sample out of {n_samples} contained the conditioning map"
        )

    # stratify the accepted samples by what subq reveals
    if params.mu.is_discrete:
        keys = revealed_list
        rep_value = {key: key for key in set(keys)}
        tag = "spin"
    else:
        arr = np.array(revealed_list, dtype=float).reshape(len(rows), len(sub_faces))
        edges = [
            np.quantile(arr[:, j], np.linspace(0, 1, bins + 1)[1:-1])
            for j in range(len(sub_faces))
        ]
        coded = [
            tuple(int(np.searchsorted(edges[j], v)) for j, v in enumerate(row))
            for row in arr
        ]
        keys = coded
        rep_value = {}
        for key in set(coded):
            members = [i for i, k in enumerate(coded) if k == key]
            rep_value[key] = tuple(
                float(arr[members, j].mean()) for j in range(len(sub_faces))
            )
        tag = "bin"

    groups: dict[tuple, list[int]] = {}
    for i, key in enumerate(keys):
        groups.setdefault(key, []).append(i)
    ordered = sorted(groups.items(), key=lambda kv: (-len(kv[1]), repr(kv[0])))
    with_spins = params.mu.is_discrete and single_hole
    fill_cap = params.face_cap - subq.n_internal_faces

    marginals: list[HoleMarginal] = []
    independence: list[PairIndependence] = []
    n_used = 0
    for key, members in ordered:
        if len(members) < min_stratum:
            continue
        label = f"{tag}[{_spin_key(rep_value[key])}]"
        spins = Decoration(sub_faces, tuple(rep_value[key]))
        per_hole: list[list[str]] = []
        try:
            for h in range(subq.n_holes):
                bch = hole_boundary_condition(subq, h, spins, bc)
                labels: list[str] = []
                reps: dict[str, MapWithHoles] = {}
                for i in members:
                    fills, leftover = rows[i]
                    shape = encode(fills[h])
                    cls = (
                        f"{shape}|{_spin_key(leftover)}" if with_spins else shape
                    )
                    labels.append(cls)
                    reps.setdefault(cls, fills[h])
                expected = _fill_class_probs(
                    reps, bch, params, fill_cap, with_spins
                )
                gof = chi_square_gof(
                    Counter(labels), expected, len(members), min_expected=min_expected
                )
                marginals.append(
                    HoleMarginal(label, h, subq.hole_semi_perimeter(h), gof)
                )
                per_hole.append(
                    [lbl.split("|", 1)[0] for lbl in labels]
                    if with_spins
                    else labels
                )
        except DegenerateTable:
            continue
        n_used += len(members)
        for i in range(subq.n_holes):
            for j in range(i + 1, subq.n_holes):
                pairs = Counter(zip(per_hole[i], per_hole[j]))
                independence.append(
                    PairIndependence(
                        label, (i, j), independence_test(pairs, top_k=top_k)
                    )
                )
    if not marginals:
        raise BinTooThin(
            f"no spin stratum reached {min_stratum} of {len(rows)} accepted samples"
        )
    reference = (
        "independent fills weighted by q^faces times the boundary-energy "
        f"partition value, q={params.q}, beta={params.beta:g}, at most "
        f"{fill_cap} fill faces"
    )
    truncation = (
        "per-hole references spend the face budget left by the conditioning "
        "map; exact for a single hole, an upper coupling bound otherwise"
    )
    return MarkovTestReport(
        tuple(marginals),
        tuple(independence),
        n_samples,
        n_used,
        reference,
        truncation,
    )


def gibbs_ratio_check(ell: int, b, fmax: int, params: DecoratedParams) -> float:
    """Largest gap between two routes to a probability ratio at fixed face
    count: the sampling table against fresh partition values.

    Raises:
        CensusMissing: ``fmax`` outside the tabulated window.
    """
    if fmax < 0 or fmax > params.face_cap:
        raise CensusMissing(f"fmax = {fmax} outside [0, {params.face_cap}]")
    bc = _as_bc(b, ell, params.mu)
    table = _law_table(ell, bc, params, certified=False)
    weights = [
        table.cum[i] - (table.cum[i - 1] if i else 0.0)
        for i in range(len(table.maps))
    ]
    worst = 0.0
    offset = 0
    for f in range(fmax + 1):
        block = _census(ell, f)
        zs = [partition_decorated(m, bc, params) for m in block]
        ws = weights[offset : offset + len(block)]
        for i in range(len(block)):
            for j in range(len(block)):
                if i == j:
                    continue
                worst = max(worst, abs(ws[i] / ws[j] - zs[i] / zs[j]))
        offset += len(block)
    return worst


def decorated_rerooting_check(
    ell: int, fmax: int, b, params: DecoratedParams
) -> float:
    """Largest probability gap between a decorated map and its rerooting
    under the correspondingly shifted boundary values.

    Atomic measures compare every configuration's joint probability; the
    Lebesgue case compares map marginals and a fixed probe decoration's
    energy.

    Raises:
        CensusMissing: ``fmax`` outside the tabulated window.
    """
    if fmax < 0 or fmax > params.face_cap:
        raise CensusMissing(f"fmax = {fmax} outside [0, {params.face_cap}]")
    bc = _as_bc(b, ell, params.mu)
    w0 = _law_table(ell, bc, params, certified=False).total
    worst = 0.0
    for t in range(1, 2 * ell):
        bs = bc.shifted(t)
        wt = _law_table(ell, bs, params, certified=False).total
        for f in range(fmax + 1):
            qf = float(params.q**f)
            for m in _census(ell, f):
                m2 = reroot(m, m.boundary_walk()[t])
                faces = _face_terms(m)[0]
                if params.mu.is_discrete:
                    for vals, w in _atom_configs(params.mu, len(faces)):
                        sigma = Decoration(faces, vals)
                        p1 = qf * w * math.exp(
                            -hamiltonian(m, sigma, bc, params.beta)
                        ) / w0
                        p2 = qf * w * math.exp(
                            -hamiltonian(m2, sigma, bs, params.beta)
                        ) / wt
                        worst = max(worst, abs(p1 - p2))
                else:
                    probe = Decoration(
                        faces, tuple(0.3 * (i + 1) for i in range(len(faces)))
                    )
                    worst = max(
                        worst,
                        abs(
                            hamiltonian(m, probe, bc, params.beta)
                            - hamiltonian(m2, probe, bs, params.beta)
                        ),
                        abs(
                            qf * partition_decorated(m, bc, params) / w0
                            - qf * partition_decorated(m2, bs, params) / wt
                        ),
                    )
    return worst
