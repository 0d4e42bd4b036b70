"""Peeling surgery, event inference, and the canonical codec."""

import pytest

from qpeel.errors import (
    AlgorithmReturnedInactiveDart,
    NotActive,
    NotAHole,
    NotSubmap,
    SplitArityMismatch,
)
from qpeel.maps import MapWithHoles, RotationMap, canonical_code, validate_quadrangulation
from qpeel.peeling import (
    T1,
    PeelEvent,
    decode,
    encode,
    explore,
    initial_exploration,
    peel,
    peel_type_of,
    possible_events,
)


def one_edge_tree() -> MapWithHoles:
    return MapWithHoles(RotationMap(alpha=(1, 0), sigma=(0, 1), root=0))


class TestEvents:
    def test_parse_and_str(self):
        assert str(PeelEvent.parse("T1")) == "T1"
        assert str(PeelEvent.parse("T2(3,14)")) == "T2(3,14)"
        assert PeelEvent.parse(" T2(0,0) ") == PeelEvent.t2(0, 0)

    def test_parse_rejects_garbage(self):
        for bad in ("T3", "T2(1)", "T2(-1,0)", "", "T2(a,b)"):
            with pytest.raises(NotAHole):
                PeelEvent.parse(bad)

    def test_order(self):
        evs = possible_events(2)
        assert [str(e) for e in evs] == ["T1", "T2(0,1)", "T2(1,0)"]
        assert sorted(evs, key=PeelEvent.sort_key) == list(evs)


class TestPeelSurgery:
    def test_first_kind_structure(self):
        # peeling the lone hole edge of the minimal state attaches one quad
        e1 = peel(initial_exploration(1), 1, T1)
        assert e1.phi == (2, 4, 0, 9, 6, 3, 8, 5, 1, 7)
        assert e1.alpha == (1, 0, 3, 2, 5, 4, 7, 6, 9, 8)
        assert e1.holes == (9,)
        assert e1.semi_perimeter == 1
        assert e1.hole_semi_perimeter(0) == 2
        assert e1.n_internal_faces == 1
        validate_quadrangulation(e1)

    def test_first_kind_keeps_unpeeled_mark(self):
        e0 = initial_exploration(2)
        e1 = peel(e0, 7, T1)  # active dart that is not the mark
        assert e1.holes == (1,)
        assert e1.hole_semi_perimeter(0) == 3
        validate_quadrangulation(e1)

    def test_closing_split_gives_tree(self):
        closed = peel(initial_exploration(1), 1, PeelEvent.t2(0, 0))
        assert canonical_code(closed) == canonical_code(one_edge_tree())

    def test_split_into_two_lobes(self):
        e = peel(initial_exploration(3), 1, PeelEvent.t2(1, 1))
        assert e.n_holes == 2
        assert e.hole_semi_perimeter(0) == 1
        assert e.hole_semi_perimeter(1) == 1
        assert e.semi_perimeter == 3
        assert e.n_internal_faces == 0
        validate_quadrangulation(e)

    def test_split_keeps_mark_in_surviving_lobe(self):
        # peel a non-mark dart so the old mark sits inside the second lobe
        e0 = initial_exploration(2)  # hole walk from mark: (1, 7, 5, 3)
        e = peel(e0, 7, PeelEvent.t2(0, 1))  # partner is 5, lobe 2 holds (3, 1)
        assert e.n_holes == 1
        # dart 1 survives the compaction as dart 1 (darts 5 and 7 removed)
        assert e.holes == (1,)

    def test_inactive_dart_rejected(self):
        with pytest.raises(NotActive):
            peel(initial_exploration(1), 0, T1)

    def test_split_arity_checked(self):
        with pytest.raises(SplitArityMismatch):
            peel(initial_exploration(1), 1, PeelEvent.t2(1, 0))


class TestCodec:
    def test_tree_code(self):
        assert encode(one_edge_tree()) == "T2(0,0)"
        got = decode(1, "T2(0,0)")
        assert canonical_code(got) == canonical_code(one_edge_tree())

    def test_single_face_maps_distinct(self):
        a = decode(1, "T1,T2(0,1),T2(0,0)")
        b = decode(1, "T1,T2(1,0),T2(0,0)")
        for q in (a, b):
            validate_quadrangulation(q)
            assert q.semi_perimeter == 1
            assert q.n_internal_faces == 1
            assert q.n_edges == 3
            assert q.n_vertices == 3
        assert canonical_code(a) != canonical_code(b)

    def test_round_trip_codes(self):
        codes = [
            "T2(0,0)",
            "T1,T2(0,1),T2(0,0)",
            "T1,T2(1,0),T2(0,0)",
            "T1,T1,T2(0,2),T2(0,1),T2(0,0)",
            "T1,T1,T2(2,0),T2(1,0),T2(0,0)",
            "T1,T1,T2(1,1),T2(0,0),T2(0,0)",
        ]
        for code in codes:
            q = decode(1, code)
            validate_quadrangulation(q)
            assert encode(q) == code

    def test_round_trip_wider_boundary(self):
        for code in ("T2(1,0),T2(0,0)", "T2(0,1),T2(0,0)", "T1,T2(0,2),T2(0,1),T2(0,0)"):
            q = decode(2, code)
            validate_quadrangulation(q)
            assert q.semi_perimeter == 2
            assert encode(q) == code

    def test_partial_decode(self):
        e = decode(3, "T2(1,1)", allow_partial=True)
        assert e.n_holes == 2
        with pytest.raises(NotAHole):
            decode(3, "T2(1,1)")

    def test_overlong_code(self):
        with pytest.raises(NotAHole):
            decode(1, "T2(0,0),T1")

    def test_decode_empty_needs_no_events(self):
        with pytest.raises(NotAHole):
            decode(1, "")


class TestEventInference:
    def test_sees_closing_split(self):
        e0 = initial_exploration(1)
        assert peel_type_of(e0, 1, one_edge_tree()) == PeelEvent.t2(0, 0)

    def test_sees_fresh_face(self):
        q = decode(1, "T1,T2(0,1),T2(0,0)")
        assert peel_type_of(initial_exploration(1), 1, q) == T1

    def test_split_labels_inferred(self):
        for code, expected in (
            ("T1,T2(0,1),T2(0,0)", PeelEvent.t2(0, 1)),
            ("T1,T2(1,0),T2(0,0)", PeelEvent.t2(1, 0)),
        ):
            q = decode(1, code)
            e1 = peel(initial_exploration(1), 1, T1)
            assert peel_type_of(e1, e1.holes[0], q) == expected

    def test_requires_embedding(self):
        e0 = initial_exploration(2)
        with pytest.raises(NotSubmap):
            peel_type_of(e0, 1, one_edge_tree())

    def test_inactive_dart(self):
        with pytest.raises(NotActive):
            peel_type_of(initial_exploration(1), 0, one_edge_tree())


class TestExplore:
    def test_explore_stops_when_closed(self):
        q = decode(1, "T1,T2(0,1),T2(0,0)")
        final, steps = explore(q)
        assert not final.holes
        assert [str(s.event) for s in steps] == ["T1", "T2(0,1)", "T2(0,0)"]
        assert canonical_code(final) == canonical_code(q)

    def test_explore_respects_max_steps(self):
        q = decode(1, "T1,T2(0,1),T2(0,0)")
        final, steps = explore(q, max_steps=1)
        assert len(steps) == 1
        assert final.n_holes == 1

    def test_bad_algorithm_caught(self):
        q = decode(1, "T1,T2(0,1),T2(0,0)")
        with pytest.raises(AlgorithmReturnedInactiveDart):
            explore(q, algorithm=lambda e: 0)

    def test_custom_algorithm_other_dart(self):
        # peeling a different active dart of the same hole still explores q
        q = decode(1, "T1,T1,T2(1,1),T2(0,0),T2(0,0)")

        def last_active(e):
            return e.hole_walk(e.n_holes - 1)[-1] if e.holes else None

        final, steps = explore(q, algorithm=last_active)
        assert not final.holes
        assert canonical_code(final) == canonical_code(q)
