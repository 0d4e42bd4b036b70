"""Core map layer: rotation systems, holes, gluing, submap extraction."""

import pytest

from qpeel.errors import (
    DartNotOnBoundary,
    EulerViolation,
    InvalidPermutation,
    NonQuadFace,
    NotAHole,
    PerimeterMismatch,
)
from qpeel.maps import (
    CEMETERY,
    MapWithHoles,
    RotationMap,
    canonical_code,
    from_raw,
    glue,
    is_submap,
    reroot,
    to_raw,
    validate_quadrangulation,
)


def one_edge_tree() -> MapWithHoles:
    # two vertices joined by one edge; root face is the whole plane, degree 2
    return MapWithHoles(RotationMap(alpha=(1, 0), sigma=(0, 1), root=0))


def initial_exploration(ell: int) -> MapWithHoles:
    """Root face of semi-perimeter ``ell`` with a single hole behind it."""
    n = 4 * ell
    alpha = [0] * n
    phi = [0] * n
    for i in range(2 * ell):
        alpha[2 * i] = 2 * i + 1
        alpha[2 * i + 1] = 2 * i
        phi[2 * i] = (2 * i + 2) % n
        phi[2 * i + 1] = (2 * i - 1) % n
    return MapWithHoles(RotationMap.from_phi(alpha, phi, 0), holes=(1,))


def quad_ring(ell: int) -> RotationMap:
    """Boundary of semi-perimeter ``ell`` enclosing one face of degree 2*ell."""
    base = initial_exploration(ell).base
    return base


def single_quad_exploration() -> MapWithHoles:
    # peel the hole of initial_exploration(1) and attach a fresh face:
    # quad face (1,4,6,8), root face (0,2), hole (3,9,7,5) marked at 9
    alpha = (1, 0, 3, 2, 5, 4, 7, 6, 9, 8)
    phi = (2, 4, 0, 9, 6, 3, 8, 5, 1, 7)
    return MapWithHoles(RotationMap.from_phi(alpha, phi, 0), holes=(9,))


def relabeled(m: MapWithHoles, perm) -> MapWithHoles:
    """Same map with dart d renamed perm[d]."""
    n = m.n_darts
    alpha = [0] * n
    sigma = [0] * n
    for d in range(n):
        alpha[perm[d]] = perm[m.alpha[d]]
        sigma[perm[d]] = perm[m.sigma[d]]
    return MapWithHoles(
        RotationMap(alpha, sigma, perm[m.root]), [perm[h] for h in m.holes]
    )


class TestRotationMap:
    def test_one_edge_tree_counts(self):
        t = one_edge_tree()
        assert (t.n_vertices, t.n_edges, t.base.n_faces) == (2, 1, 1)
        assert t.semi_perimeter == 1
        assert t.base.euler_characteristic() == 2
        validate_quadrangulation(t)

    def test_initial_exploration_shape(self):
        for ell in (1, 2, 3, 4):
            e0 = initial_exploration(ell)
            assert e0.n_vertices == 2 * ell
            assert e0.n_edges == 2 * ell
            assert e0.base.n_faces == 2
            assert e0.semi_perimeter == ell
            assert e0.hole_semi_perimeter(0) == ell
            assert e0.n_internal_faces == 0
            validate_quadrangulation(e0)

    def test_boundary_walks(self):
        e0 = initial_exploration(2)
        assert e0.boundary_walk() == (0, 2, 4, 6)
        assert e0.hole_walk(0) == (1, 7, 5, 3)
        assert e0.active_darts == frozenset({1, 3, 5, 7})

    def test_single_quad_exploration(self):
        e1 = single_quad_exploration()
        assert e1.n_vertices == 4
        assert e1.n_edges == 5
        assert e1.semi_perimeter == 1
        assert e1.hole_semi_perimeter(0) == 2
        assert e1.n_internal_faces == 1
        validate_quadrangulation(e1)

    def test_phi_is_sigma_after_alpha(self):
        e1 = single_quad_exploration()
        for d in range(e1.n_darts):
            assert e1.phi[d] == e1.sigma[e1.alpha[d]]

    def test_rejects_alpha_fixed_point(self):
        with pytest.raises(InvalidPermutation):
            RotationMap(alpha=(0, 1), sigma=(1, 0), root=0)

    def test_rejects_non_permutation(self):
        with pytest.raises(InvalidPermutation):
            RotationMap(alpha=(1, 1), sigma=(0, 1), root=0)

    def test_rejects_disconnected(self):
        with pytest.raises(InvalidPermutation):
            RotationMap(alpha=(1, 0, 3, 2), sigma=(0, 1, 2, 3), root=0)

    def test_rejects_odd_dart_count(self):
        with pytest.raises(InvalidPermutation):
            RotationMap(alpha=(0,), sigma=(0,), root=0)

    def test_rejects_root_out_of_range(self):
        with pytest.raises(InvalidPermutation):
            RotationMap(alpha=(1, 0), sigma=(0, 1), root=2)


class TestValidation:
    def test_torus_fails_euler(self):
        # one vertex, two edges, one face: V - E + F = 0
        m = MapWithHoles(RotationMap(alpha=(2, 3, 0, 1), sigma=(1, 2, 3, 0), root=0))
        with pytest.raises(EulerViolation):
            validate_quadrangulation(m)

    def test_hexagon_face_rejected_without_hole(self):
        m = MapWithHoles(quad_ring(3))  # inner face degree 6, not registered
        with pytest.raises(NonQuadFace) as exc:
            validate_quadrangulation(m)
        assert exc.value.degree == 6

    def test_square_inner_face_is_a_quad(self):
        validate_quadrangulation(MapWithHoles(quad_ring(2)))

    def test_hole_mark_on_root_face_rejected(self):
        with pytest.raises(NotAHole):
            MapWithHoles(quad_ring(2), holes=(0,))

    def test_duplicate_hole_rejected(self):
        with pytest.raises(NotAHole):
            MapWithHoles(quad_ring(2), holes=(1, 3))


class TestGlue:
    def test_fill_with_tree_gives_tree(self):
        glued = glue(initial_exploration(1), [one_edge_tree()])
        assert canonical_code(glued) == canonical_code(one_edge_tree())

    def test_fill_square_hole_with_its_face(self):
        e0 = initial_exploration(2)
        fill = MapWithHoles(quad_ring(2))
        glued = glue(e0, [fill])
        assert canonical_code(glued) == canonical_code(fill)

    def test_cemetery_glue(self):
        t = one_edge_tree()
        assert glue(CEMETERY, (t,)) is t
        with pytest.raises(NotAHole):
            glue(CEMETERY, (t, t))

    def test_fill_count_mismatch(self):
        with pytest.raises(NotAHole):
            glue(initial_exploration(1), [])

    def test_perimeter_mismatch(self):
        with pytest.raises(PerimeterMismatch):
            glue(initial_exploration(1), [MapWithHoles(quad_ring(2))])

    def test_holes_inherited_from_fills(self):
        e0 = initial_exploration(1)
        glued = glue(e0, [initial_exploration(1)])
        assert glued.n_holes == 1
        assert glued.hole_semi_perimeter(0) == 1
        assert canonical_code(glued) == canonical_code(e0)


class TestIsSubmap:
    def test_cemetery_below_everything(self):
        t = one_edge_tree()
        assert is_submap(CEMETERY, t) == (t,)

    def test_tree_inside_itself(self):
        assert is_submap(one_edge_tree(), one_edge_tree()) == ()

    def test_initial_inside_tree(self):
        fills = is_submap(initial_exploration(1), one_edge_tree())
        assert fills is not None and len(fills) == 1
        assert canonical_code(fills[0]) == canonical_code(one_edge_tree())

    def test_semi_perimeter_mismatch_is_none(self):
        assert is_submap(initial_exploration(2), one_edge_tree()) is None

    def test_full_map_accounting(self):
        # hole-free below a strictly larger map: extra material is not a fill
        assert is_submap(one_edge_tree(), MapWithHoles(quad_ring(1))) is None

    def test_round_trip_through_single_quad(self):
        e0 = initial_exploration(1)
        e1 = single_quad_exploration()
        fills = is_submap(e0, e1)
        assert fills is not None and len(fills) == 1
        assert fills[0].n_holes == 1
        glued = glue(e0, fills)
        assert canonical_code(glued) == canonical_code(e1)

    def test_self_submap_round_trip(self):
        for m in (initial_exploration(1), initial_exploration(3), single_quad_exploration()):
            fills = is_submap(m, m)
            assert fills is not None
            assert canonical_code(glue(m, fills)) == canonical_code(m)

    def test_square_filling_round_trip(self):
        e0 = initial_exploration(2)
        q = MapWithHoles(quad_ring(2))
        fills = is_submap(e0, q)
        assert fills is not None
        assert canonical_code(glue(e0, fills)) == canonical_code(q)


class TestRerootAndCode:
    def test_reroot_moves_root(self):
        q = MapWithHoles(quad_ring(2))
        q2 = reroot(q, 2)
        assert q2.root == 2
        assert q2.base.root_face == q2.base.face_of[2]
        assert reroot(q2, 0).base == q.base

    def test_reroot_off_boundary(self):
        with pytest.raises(DartNotOnBoundary):
            reroot(MapWithHoles(quad_ring(2)), 1)

    def test_code_invariant_under_relabeling(self):
        e1 = single_quad_exploration()
        perm = [7, 3, 9, 5, 0, 8, 2, 6, 4, 1]
        assert canonical_code(relabeled(e1, perm)) == canonical_code(e1)

    def test_code_distinguishes_roots(self):
        # the quad ring alone is rotation-symmetric, so compare with a marked
        # hole breaking the symmetry
        e0 = initial_exploration(2)
        assert canonical_code(e0) != canonical_code(reroot(e0, 2))

    def test_code_ignores_symmetric_reroot(self):
        q = MapWithHoles(quad_ring(2))
        assert canonical_code(q) == canonical_code(reroot(q, 2))

    def test_code_sees_hole_marks(self):
        e0 = initial_exploration(2)
        moved = MapWithHoles(e0.base, holes=(7,))
        assert canonical_code(e0) != canonical_code(moved)

    def test_cemetery_code(self):
        assert canonical_code(CEMETERY) == b"\xff"


class TestRaw:
    def test_round_trip(self):
        e1 = single_quad_exploration()
        again = from_raw(to_raw(e1))
        assert again == e1

    def test_cemetery_round_trip(self):
        assert from_raw(to_raw(CEMETERY)) is CEMETERY

    def test_raw_is_json_plain(self):
        import json

        blob = json.dumps(to_raw(one_edge_tree()))
        assert from_raw(json.loads(blob)) == one_edge_tree()
