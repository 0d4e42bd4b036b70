"""Rooted planar maps as rotation systems, with holes, gluing, and submaps.

A map is stored as two permutations of the dart set {0..2E-1}: ``alpha``
(edge involution, fixed-point free) and ``sigma`` (counterclockwise rotation
around each vertex).  Faces are the orbits of ``phi = sigma o alpha``
(apply ``alpha`` first); the face of a dart lies to its left, and walking
``phi`` from a dart traverses that face keeping it on the left.

``MapWithHoles`` adds an ordered list of marked darts, one per hole.  A hole
is a face whose interior is not part of the map; its marked dart is where
boundary walks start.  The root face (the face of the root dart) is the outer
boundary and is never a hole.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .errors import (
    DartNotOnBoundary,
    EulerViolation,
    InvalidPermutation,
    NonQuadFace,
    NotAHole,
    PerimeterMismatch,
    UnsupportedHoleTopology,
)

__all__ = [
    "RotationMap",
    "MapWithHoles",
    "Cemetery",
    "CEMETERY",
    "validate_quadrangulation",
    "glue",
    "is_submap",
    "root_embedding",
    "reroot",
    "canonical_code",
    "to_raw",
    "from_raw",
]


def _check_permutation(perm: Sequence[int], n: int, name: str) -> None:
    if len(perm) != n:
        raise InvalidPermutation(f"{name} has length {len(perm)}, expected {n}")
    seen = [False] * n
    for v in perm:
        if not isinstance(v, int) or not 0 <= v < n or seen[v]:
            raise InvalidPermutation(f"{name} is not a permutation of 0..{n - 1}")
        seen[v] = True


def _orbits(perm: Sequence[int]) -> tuple[tuple[tuple[int, ...], ...], tuple[int, ...]]:
    """All cycles of a permutation, plus the dart -> cycle index table.

    Each cycle starts at its smallest element and follows the permutation;
    cycles are ordered by that smallest element.
    """
    n = len(perm)
    orbit_of = [-1] * n
    orbits: list[tuple[int, ...]] = []
    for start in range(n):
        if orbit_of[start] >= 0:
            continue
        idx = len(orbits)
        cycle = [start]
        orbit_of[start] = idx
        d = perm[start]
        while d != start:
            orbit_of[d] = idx
            cycle.append(d)
            d = perm[d]
        orbits.append(tuple(cycle))
    return tuple(orbits), tuple(orbit_of)


class RotationMap:
    """A connected rooted map on the sphere.

    Args:
        alpha: edge involution on darts, fixed-point free.
        sigma: counterclockwise rotation around vertices.
        root: the root dart.

    Derived tables are computed eagerly: ``phi`` (face permutation),
    ``faces`` / ``face_of``, ``vertices`` / ``vertex_of``.  Instances are
    immutable; equality is structural on ``(alpha, sigma, root)``.
    """

    __slots__ = (
        "alpha",
        "sigma",
        "phi",
        "root",
        "n_darts",
        "n_edges",
        "faces",
        "face_of",
        "vertices",
        "vertex_of",
        "root_face",
    )

    def __init__(self, alpha: Sequence[int], sigma: Sequence[int], root: int):
        n = len(alpha)
        if n == 0 or n % 2:
            raise InvalidPermutation(f"dart count must be positive and even, got {n}")
        _check_permutation(alpha, n, "alpha")
        _check_permutation(sigma, n, "sigma")
        for d in range(n):
            if alpha[d] == d or alpha[alpha[d]] != d:
                raise InvalidPermutation("alpha is not a fixed-point-free involution")
        if not 0 <= root < n:
            raise InvalidPermutation(f"root {root} outside dart range 0..{n - 1}")

        self.alpha = tuple(alpha)
        self.sigma = tuple(sigma)
        self.root = root
        self.n_darts = n
        self.n_edges = n // 2
        self.phi = tuple(self.sigma[self.alpha[d]] for d in range(n))
        self.faces, self.face_of = _orbits(self.phi)
        self.vertices, self.vertex_of = _orbits(self.sigma)
        self.root_face = self.face_of[root]

        # connectivity under <alpha, sigma>
        seen = [False] * n
        stack = [0]
        seen[0] = True
        count = 1
        while stack:
            d = stack.pop()
            for e in (self.alpha[d], self.sigma[d]):
                if not seen[e]:
                    seen[e] = True
                    count += 1
                    stack.append(e)
        if count != n:
            raise InvalidPermutation("dart set is not connected")

    @classmethod
    def from_phi(cls, alpha: Sequence[int], phi: Sequence[int], root: int) -> "RotationMap":
        """Build from the face permutation instead of the vertex rotation."""
        n = len(alpha)
        _check_permutation(alpha, n, "alpha")
        _check_permutation(phi, n, "phi")
        sigma = tuple(phi[alpha[d]] for d in range(n))
        return cls(alpha, sigma, root)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_degree(self, face_id: int) -> int:
        return len(self.faces[face_id])

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    def face_walk(self, dart: int) -> tuple[int, ...]:
        """The face orbit of ``dart``, listed in phi order starting at it."""
        walk = [dart]
        d = self.phi[dart]
        while d != dart:
            walk.append(d)
            d = self.phi[d]
        return tuple(walk)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RotationMap)
            and self.alpha == other.alpha
            and self.sigma == other.sigma
            and self.root == other.root
        )

    def __hash__(self) -> int:
        return hash((self.alpha, self.sigma, self.root))

    def __repr__(self) -> str:
        return (
            f"RotationMap(E={self.n_edges}, V={self.n_vertices}, "
            f"F={self.n_faces}, root={self.root})"
        )


class MapWithHoles:
    """A rooted map together with an ordered list of holes.

    Each hole is identified by its marked dart; the hole face is the face of
    that dart.  Hole faces must be pairwise distinct, distinct from the root
    face, and of even degree.  The hole order is meaningful: explorations
    create holes in a definite order and gluing consumes them in that order.
    """

    __slots__ = ("base", "holes", "hole_faces", "_active")

    def __init__(self, base: RotationMap, holes: Sequence[int] = ()):
        self.base = base
        self.holes = tuple(holes)
        face_of = base.face_of
        hole_faces = []
        for mark in self.holes:
            if not 0 <= mark < base.n_darts:
                raise NotAHole(f"marked dart {mark} outside dart range")
            fid = face_of[mark]
            if fid == base.root_face:
                raise NotAHole("the root face cannot be a hole")
            if fid in hole_faces:
                raise NotAHole(f"face {fid} marked as a hole twice")
            if base.face_degree(fid) % 2:
                raise NotAHole(f"hole face {fid} has odd degree")
            hole_faces.append(fid)
        self.hole_faces = tuple(hole_faces)
        self._active: Optional[frozenset] = None

    # passthroughs to the base map
    @property
    def alpha(self) -> tuple[int, ...]:
        return self.base.alpha

    @property
    def sigma(self) -> tuple[int, ...]:
        return self.base.sigma

    @property
    def phi(self) -> tuple[int, ...]:
        return self.base.phi

    @property
    def root(self) -> int:
        return self.base.root

    @property
    def n_darts(self) -> int:
        return self.base.n_darts

    @property
    def n_edges(self) -> int:
        return self.base.n_edges

    @property
    def n_vertices(self) -> int:
        return self.base.n_vertices

    @property
    def n_holes(self) -> int:
        return len(self.holes)

    @property
    def n_internal_faces(self) -> int:
        """Faces that are neither the root face nor a hole."""
        return self.base.n_faces - 1 - len(self.holes)

    @property
    def semi_perimeter(self) -> int:
        deg = self.base.face_degree(self.base.root_face)
        if deg % 2:
            raise NotAHole(f"root face degree {deg} is odd")
        return deg // 2

    def hole_semi_perimeter(self, i: int) -> int:
        return self.base.face_degree(self.hole_faces[i]) // 2

    def hole_walk(self, i: int) -> tuple[int, ...]:
        """Boundary walk of hole ``i`` starting at its marked dart."""
        return self.base.face_walk(self.holes[i])

    def boundary_walk(self) -> tuple[int, ...]:
        """Root face walk starting at the root dart."""
        return self.base.face_walk(self.base.root)

    @property
    def active_darts(self) -> frozenset:
        """All darts lying on some hole boundary."""
        if self._active is None:
            face_of = self.base.face_of
            hole_set = set(self.hole_faces)
            self._active = frozenset(
                d for d in range(self.base.n_darts) if face_of[d] in hole_set
            )
        return self._active

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MapWithHoles)
            and self.base == other.base
            and self.holes == other.holes
        )

    def __hash__(self) -> int:
        return hash((self.base, self.holes))

    def __repr__(self) -> str:
        return (
            f"MapWithHoles(E={self.n_edges}, sp={self.semi_perimeter}, "
            f"faces={self.n_internal_faces}, holes={list(self.holes)})"
        )


class Cemetery:
    """Absorbing state below every map in the submap order."""

    _instance: Optional["Cemetery"] = None

    def __new__(cls) -> "Cemetery":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "CEMETERY"


CEMETERY = Cemetery()


def validate_quadrangulation(m: MapWithHoles) -> None:
    """Check that ``m`` is a quadrangulation with boundary.

    Requires planarity (V - E + F = 2) and that every face other than the
    root face and the registered holes has degree 4.  Permutation-level
    structure is already enforced by the constructors.

    Raises:
        EulerViolation: the rotation system is not planar.
        NonQuadFace: an internal face has degree != 4.
        NotAHole: the root face has odd degree.
    """
    base = m.base
    chi = base.euler_characteristic()
    if chi != 2:
        raise EulerViolation(f"V - E + F = {chi}, expected 2")
    m.semi_perimeter  # raises NotAHole on odd root face degree
    skip = set(m.hole_faces)
    skip.add(base.root_face)
    for fid, cycle in enumerate(base.faces):
        if fid in skip:
            continue
        if len(cycle) != 4:
            raise NonQuadFace(fid, len(cycle))


class _UnionFind:
    __slots__ = ("parent",)

    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def glue(q1, fills: Sequence[MapWithHoles]):
    """Fill every hole of ``q1`` with the given maps, in hole order.

    The boundary identification is orientation-reversing: dart ``k`` of the
    hole walk (from the marked dart) is matched with dart ``k`` of the fill's
    root face walk taken in the phi-inverse direction (from the fill's root).
    Matched boundary darts disappear; the darts crossing each matched edge
    from either side are identified.

    ``glue(CEMETERY, (q,))`` returns ``q``.  The result's holes are the
    fills' holes, concatenated in fill order.

    Raises:
        NotAHole: fill count differs from hole count.
        PerimeterMismatch: a fill's root face degree differs from its hole's.
    """
    if isinstance(q1, Cemetery):
        if len(fills) != 1:
            raise NotAHole(f"cemetery takes exactly one fill, got {len(fills)}")
        return fills[0]
    if len(fills) != q1.n_holes:
        raise NotAHole(f"{q1.n_holes} holes but {len(fills)} fills")

    n1 = q1.n_darts
    offsets = [n1]
    for f in fills[:-1]:
        offsets.append(offsets[-1] + f.n_darts)
    n_total = (offsets[-1] + fills[-1].n_darts) if fills else n1

    alpha = list(q1.alpha) + [0] * (n_total - n1)
    phi = list(q1.phi) + [0] * (n_total - n1)
    for off, f in zip(offsets, fills):
        fa, fp = f.alpha, f.phi
        for d in range(f.n_darts):
            alpha[off + d] = off + fa[d]
            phi[off + d] = off + fp[d]

    uf = _UnionFind(n_total)
    dead = [False] * n_total
    for i in range(q1.n_holes):
        f = fills[i]
        off = offsets[i]
        hole = q1.hole_walk(i)
        if f.base.face_degree(f.base.root_face) != len(hole):
            raise PerimeterMismatch(
                i, len(hole) // 2, f.base.face_degree(f.base.root_face) // 2
            )
        # fill root-face walk in the phi-inverse direction, starting at the root
        rev = [f.root]
        walk = f.base.face_walk(f.root)
        rev.extend(reversed(walk[1:]))
        for h, s in zip(hole, rev):
            s_g = off + s
            dead[h] = dead[s_g] = True
            uf.union(h, alpha[s_g])
            uf.union(s_g, alpha[h])

    # each identification class must keep exactly one live dart
    live_of_root: dict[int, int] = {}
    for d in range(n_total):
        if dead[d]:
            continue
        r = uf.find(d)
        if r in live_of_root:
            raise NotAHole("glued boundaries close a cycle with two live darts")
        live_of_root[r] = d

    live = [d for d in range(n_total) if not dead[d]]
    new_id = {d: i for i, d in enumerate(live)}

    def resolve(d: int) -> int:
        if dead[d]:
            r = uf.find(d)
            if r not in live_of_root:
                raise NotAHole("glued boundaries close a cycle with no live dart")
            d = live_of_root[r]
        return new_id[d]

    alpha_new = [resolve(alpha[d]) for d in live]
    phi_new = [new_id[phi[d]] for d in live]  # live faces never touch dead darts
    root_new = new_id[q1.root]
    holes_new = []
    for off, f in zip(offsets, fills):
        holes_new.extend(new_id[off + h] for h in f.holes)
    base = RotationMap.from_phi(alpha_new, phi_new, root_new)
    return MapWithHoles(base, holes_new)


def root_embedding(q1: MapWithHoles, q2: MapWithHoles) -> Optional[list[int]]:
    """The root-to-root embedding of the non-hole darts of ``q1`` into ``q2``.

    Returns the dart map as a list (-1 on hole darts), or None when no
    embedding exists.  The embedding is forced move by move from the root, so
    it is unique.  Non-hole darts of ``q1`` may only land on non-hole darts
    of ``q2``: what ``q1`` has discovered, ``q2`` must have discovered too.

    Raises:
        UnsupportedHoleTopology: the non-hole darts of ``q1`` are not
            connected under face walks and interior edge crossings.
    """
    if q1.semi_perimeter != q2.semi_perimeter:
        return None

    a1, p1, a2, p2 = q1.alpha, q1.phi, q2.alpha, q2.phi
    face_of2 = q2.base.face_of
    hole_faces2 = set(q2.hole_faces)
    inv_p1 = [0] * q1.n_darts
    for d in range(q1.n_darts):
        inv_p1[p1[d]] = d
    inv_p2 = [0] * q2.n_darts
    for d in range(q2.n_darts):
        inv_p2[p2[d]] = d

    active = q1.active_darts
    iota = [-1] * q1.n_darts  # q1 dart -> q2 dart
    image = [-1] * q2.n_darts  # q2 dart -> q1 dart
    iota[q1.root] = q2.root
    image[q2.root] = q1.root
    stack = [q1.root]
    mapped = 1
    while stack:
        d = stack.pop()
        D = iota[d]
        moves = [(p1[d], p2[D]), (inv_p1[d], inv_p2[D])]
        da = a1[d]
        if da not in active:
            moves.append((da, a2[D]))
        for e, E in moves:
            if iota[e] >= 0:
                if iota[e] != E:
                    return None
                continue
            if image[E] >= 0:
                return None
            if face_of2[E] in hole_faces2:
                return None
            iota[e] = E
            image[E] = e
            mapped += 1
            stack.append(e)

    n_interior = q1.n_darts - len(active)
    if mapped != n_interior:
        raise UnsupportedHoleTopology(
            "interior darts not reachable from the root by face walks"
        )
    return iota


def is_submap(q1, q2: MapWithHoles) -> Optional[tuple[MapWithHoles, ...]]:
    """Test whether ``q1`` is obtained from ``q2`` by hollowing out holes.

    Returns the tuple of fills (one per hole of ``q1``, in hole order) such
    that ``glue(q1, fills)`` reproduces ``q2``, or None when ``q1`` does not
    embed in ``q2``.  The embedding must send root to root; it is unique when
    it exists.  ``is_submap(CEMETERY, q2)`` returns ``(q2,)``.

    Raises:
        UnsupportedHoleTopology: the non-hole darts of ``q1`` are not
            connected under face walks and interior edge crossings, or a hole
            boundary of ``q1`` crosses an edge into another hole.
    """
    if isinstance(q1, Cemetery):
        return (q2,)

    iota = root_embedding(q1, q2)
    if iota is None:
        return None
    a1, a2, p2 = q1.alpha, q2.alpha, q2.phi
    inv_p2 = [0] * q2.n_darts
    for d in range(q2.n_darts):
        inv_p2[p2[d]] = d
    active = q1.active_darts
    image = [-1] * q2.n_darts
    for d, D in enumerate(iota):
        if D >= 0:
            image[D] = d

    # extract one fill per hole
    fills: list[MapWithHoles] = []
    claimed = [False] * q2.n_darts  # q2 darts assigned to some fill interior
    for i in range(q1.n_holes):
        hole = q1.hole_walk(i)
        two_p = len(hole)
        cross: list[int] = []  # X_k: q2 dart crossing matched edge k, outward
        for h in hole:
            ha = a1[h]
            if ha in active:
                raise UnsupportedHoleTopology(
                    "hole boundary edge shared with another hole boundary"
                )
            cross.append(a2[iota[ha]])

        # flood the region behind this hole: q2 darts not in the image
        inside: list[int] = []
        seen_inside = set()
        seeds = [x for x in cross if image[x] < 0]
        for s in seeds:
            if s in seen_inside:
                continue
            seen_inside.add(s)
            todo = [s]
            while todo:
                y = todo.pop()
                inside.append(y)
                for z in (p2[y], inv_p2[y]):
                    if z not in seen_inside:
                        seen_inside.add(z)
                        todo.append(z)
                z = a2[y]
                if image[z] < 0 and z not in seen_inside:
                    seen_inside.add(z)
                    todo.append(z)
        for y in inside:
            if claimed[y]:
                return None  # two holes flood the same region
            claimed[y] = True

        # doubled edges: cross[k] may itself be in the image of this hole's rim
        rim_pos = {iota[a1[h]]: k for k, h in enumerate(hole)}
        inside_sorted = sorted(inside)
        local = {y: two_p + j for j, y in enumerate(inside_sorted)}

        alpha_f = [0] * (two_p + len(inside))
        phi_f = [0] * (two_p + len(inside))
        for k in range(two_p):
            x = cross[k]
            if image[x] >= 0:
                j = rim_pos.get(x)
                if j is None:
                    return None  # crossing lands in the image but off this rim
                alpha_f[k] = j
            else:
                alpha_f[k] = local[x]
            phi_f[k] = (k - 1) % two_p
        for y in inside_sorted:
            k = local[y]
            ya = a2[y]
            alpha_f[k] = local[ya] if image[ya] < 0 else rim_pos[ya]
            phi_f[k] = local[p2[y]]

        holes_f = [local[q2.holes[j]] for j in range(q2.n_holes) if q2.holes[j] in seen_inside]
        base_f = RotationMap.from_phi(alpha_f, phi_f, 0)
        fills.append(MapWithHoles(base_f, holes_f))

    # every q2 dart must be accounted for: image or some fill interior
    for D in range(q2.n_darts):
        if image[D] < 0 and not claimed[D]:
            return None
    return tuple(fills)


def reroot(m: MapWithHoles, dart: int) -> MapWithHoles:
    """Move the root to another dart of the root face.

    Raises:
        DartNotOnBoundary: ``dart`` is not on the root face.
    """
    base = m.base
    if not 0 <= dart < base.n_darts or base.face_of[dart] != base.root_face:
        raise DartNotOnBoundary(f"dart {dart} is not on the root face")
    if dart == base.root:
        return m
    return MapWithHoles(RotationMap(base.alpha, base.sigma, dart), m.holes)


def canonical_code(m) -> bytes:
    """Label-independent encoding of a map with holes.

    Two maps get equal codes iff some dart relabeling maps one to the other
    preserving alpha, sigma, the root, and the ordered hole marks.  Darts are
    relabeled by breadth-first search from the root, following alpha then
    sigma from each dart.
    """
    if isinstance(m, Cemetery):
        return b"\xff"
    base = m.base
    n = base.n_darts
    alpha, sigma = base.alpha, base.sigma
    label = [-1] * n
    order = [base.root]
    label[base.root] = 0
    head = 0
    while head < len(order):
        d = order[head]
        head += 1
        for e in (alpha[d], sigma[d]):
            if label[e] < 0:
                label[e] = len(order)
                order.append(e)
    parts = [str(n)]
    parts.extend(f"{label[alpha[d]]}.{label[sigma[d]]}" for d in order)
    parts.append("h" + ",".join(str(label[h]) for h in m.holes))
    return ";".join(parts).encode("ascii")


def to_raw(m) -> dict:
    """Plain-JSON form: dart count, alpha, sigma, root, hole marks."""
    if isinstance(m, Cemetery):
        return {"cemetery": True}
    return {
        "darts": m.n_darts,
        "alpha": list(m.alpha),
        "sigma": list(m.sigma),
        "root": m.root,
        "holes": list(m.holes),
    }


def from_raw(data: dict):
    """Inverse of :func:`to_raw`; validates permutation structure."""
    if data.get("cemetery"):
        return CEMETERY
    base = RotationMap(data["alpha"], data["sigma"], data["root"])
    if base.n_darts != data.get("darts", base.n_darts):
        raise InvalidPermutation("declared dart count disagrees with alpha length")
    return MapWithHoles(base, data.get("holes", ()))
