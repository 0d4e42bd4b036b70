"""Contour walks, the pinch-cut stopping map, and the Markov-property
batteries."""

from fractions import Fraction
from random import Random

import pytest

from qpeel.boltzmann import BoltzmannParams
from qpeel.census import generate_all
from qpeel.errors import (
    CensusMissing,
    EventNeverHit,
    NotAHole,
    NotSubmap,
    OutOfBounds,
    WrongPerimeter,
)
from qpeel.maps import (
    MapWithHoles,
    RotationMap,
    canonical_code,
    is_submap,
    root_embedding,
)
from qpeel.markov import (
    CONTAINED,
    NOT_CONTAINED,
    _LEAVES,
    StoppingRule,
    containment_decider_Q,
    counterexample_branches,
    deterministic_prefix_rule,
    first_type2_rule,
    left_process,
    rerooting_invariance_check,
    right_process,
    stopping_map_Q,
    stopping_map_details,
    stopping_rule_Q,
    strong_markov_test,
    weak_markov_test,
)
from qpeel.peeling import T1, PeelEvent, decode, explore, initial_exploration, peel
from qpeel.stats import ks_uniform

PARAMS = BoltzmannParams()

# smallest census map whose forward walk pinches at visit 3 and leaves the
# pinch face for the last time at visit 9 (found by scanning f = 5 then 6)
DEEP_PINCH_WITNESS = (
    "T1,T1,T1,T2(3,0),T1,T1,T1,T2(0,5),T2(0,4),T2(1,2),T2(0,0),T2(1,0),T2(0,0)"
)


def census_upto(fmax: int) -> list[MapWithHoles]:
    return [q for f in range(fmax + 1) for q in generate_all(1, f)]


def one_edge_tree() -> MapWithHoles:
    return MapWithHoles(RotationMap(alpha=(1, 0), sigma=(0, 1), root=0))


def t1_prefix() -> MapWithHoles:
    return peel(initial_exploration(1), 1, T1)


def canonical_prefixes(maps) -> list[MapWithHoles]:
    """Every distinct state the canonical exploration passes through."""
    seen: dict[tuple, MapWithHoles] = {}
    for q in maps:
        final, steps = explore(q)
        for st in [s.state for s in steps] + [final]:
            seen.setdefault((st.base.alpha, st.base.phi, st.holes), st)
    return list(seen.values())


def left_walk_to_face(q: MapWithHoles, target: int):
    """Backward contour stopped at the first arrival on ``target``."""
    base = q.base
    alpha = base.alpha
    inv = [0] * base.n_darts
    for d, nxt in enumerate(base.phi):
        inv[nxt] = d
    near = base.phi[base.root]
    crossings = []
    seen = set()
    while True:
        crossings.append(near)
        seen.add(min(near, alpha[near]))
        far = alpha[near]
        here = base.face_of[far]
        if here == target:
            return crossings, True
        if here == base.root_face:
            return crossings, False
        cand = inv[far]
        while cand != far and min(cand, alpha[cand]) in seen:
            cand = inv[cand]
        if cand == far:
            return crossings, False
        near = cand


class TestContour:
    def test_tree_returns_immediately(self):
        w = right_process(one_edge_tree())
        assert w.steps == 1
        assert w.visits[0] == w.visits[-1] == one_edge_tree().base.root_face
        assert not w.hit_hole
        assert w.first_pinch is None
        assert w.loop_length == 1

    def test_single_quad_members(self):
        for q in generate_all(1, 1):
            w = right_process(q)
            internal = next(
                f for f in range(q.base.n_faces) if f != q.base.root_face
            )
            assert w.visits[0] == w.visits[-1] == q.base.root_face
            assert set(w.visits[1:-1]) == {internal}
            assert not w.hit_hole
            assert w.loop_length == 2

    def test_deep_pinch_witness(self):
        w = right_process(decode(1, DEEP_PINCH_WITNESS))
        assert (w.first_pinch, w.last_pinch) == (3, 9)
        assert w.steps == 10
        assert w.loop_length == 4

    def test_every_walk_completes_without_repeating_edges(self):
        for q in census_upto(3):
            for walk in (right_process(q), left_process(q)):
                assert not walk.hit_hole
                assert walk.visits[0] == walk.visits[-1] == q.base.root_face
                edges = {min(c, q.alpha[c]) for c in walk.crossings}
                assert len(edges) == walk.steps
                assert walk.loop_length <= walk.steps

    def test_walk_into_holes(self):
        w = right_process(t1_prefix())
        assert w.hit_hole
        assert w.steps == 2  # root edge, then out a side of the new face
        lw = left_process(initial_exploration(1))
        assert lw.hit_hole and lw.steps == 1

    def test_needs_two_sided_root_face(self):
        with pytest.raises(WrongPerimeter):
            right_process(initial_exploration(2))


class TestStoppingMap:
    def test_submap_of_every_census_map(self):
        full = pinched = 0
        for q in census_upto(3):
            det = stopping_map_details(q)
            assert is_submap(det.submap, q) is not None
            if det.used_full_contour:
                full += 1
                assert det.kept_crossings == det.walk.crossings
            else:
                pinched += 1
                assert len(det.kept_crossings) == det.walk.loop_length
        assert (full, pinched) == (29, 37)

    def test_tree_is_its_own_stopping_map(self):
        det = stopping_map_details(one_edge_tree())
        assert det.used_full_contour
        assert canonical_code(det.submap) == canonical_code(one_edge_tree())

    def test_single_quad_keeps_one_face(self):
        for q in generate_all(1, 1):
            s = stopping_map_Q(q)
            assert s.n_internal_faces == 1
            assert is_submap(s, q) is not None

    def test_right_then_left_reach_the_same_cut(self):
        # the kept tail of the forward walk crosses exactly the edges the
        # backward walk crosses before first reaching the pinch face
        pinched = 0
        for q in census_upto(4):
            det = stopping_map_details(q)
            w = det.walk
            if w.first_pinch is None:
                continue
            pinched += 1
            tail = {min(c, q.alpha[c]) for c in w.crossings[w.last_pinch :]}
            lcross, hit = left_walk_to_face(q, w.visits[w.first_pinch])
            assert hit
            assert {min(c, q.alpha[c]) for c in lcross} == tail
        assert pinched == 257

    def test_requires_complete_map(self):
        with pytest.raises(NotAHole):
            stopping_map_details(t1_prefix())


class TestDecider:
    def test_complete_maps_are_contained(self):
        for q in census_upto(2):
            assert containment_decider_Q(q) == CONTAINED

    def test_bare_and_one_step_states_are_not(self):
        assert containment_decider_Q(initial_exploration(1)) == NOT_CONTAINED
        assert containment_decider_Q(t1_prefix()) == NOT_CONTAINED

    def test_matches_ground_truth_on_every_census_prefix(self):
        # the decision is a function of the partial map alone; check it
        # against the refinement ground truth over every completion
        census = census_upto(3)
        submaps = [stopping_map_Q(q) for q in census]
        for p in canonical_prefixes(census):
            truths = [
                root_embedding(submaps[i], p) is not None
                for i, q in enumerate(census)
                if root_embedding(p, q) is not None
            ]
            assert truths, "prefix lost its own completion"
            assert all(truths) or not any(truths)
            expected = CONTAINED if truths[0] else NOT_CONTAINED
            assert containment_decider_Q(p) == expected


class TestStoppingRules:
    def test_prefix_zero_is_always_contained(self):
        rule = deterministic_prefix_rule(0)
        assert rule.decide(initial_exploration(1)) == CONTAINED
        assert rule.decide(one_edge_tree()) == CONTAINED

    def test_prefix_decisions(self):
        rule = deterministic_prefix_rule(1)
        assert rule.decide(initial_exploration(1)) == NOT_CONTAINED
        assert rule.decide(t1_prefix()) == CONTAINED
        for q in generate_all(1, 1):
            assert rule.decide(q) == CONTAINED

    def test_prefix_length_validated(self):
        with pytest.raises(OutOfBounds):
            deterministic_prefix_rule(-1)

    def test_first_split_on_tree(self):
        s = first_type2_rule().extract(one_edge_tree())
        assert canonical_code(s) == canonical_code(one_edge_tree())

    def test_decisions_never_overclaim(self):
        # whenever a rule says contained on a partial map, its extraction
        # from every completion embeds in that partial map
        census = census_upto(3)
        rules = [deterministic_prefix_rule(k) for k in (0, 1, 2)]
        rules.append(first_type2_rule())
        for p in canonical_prefixes(census_upto(2)):
            for rule in rules:
                if rule.decide(p) != CONTAINED:
                    continue
                for q in census:
                    if root_embedding(p, q) is None:
                        continue
                    assert root_embedding(rule.extract(q), p) is not None, (
                        rule.name
                    )


class TestWeakMarkov:
    def test_trivial_conditioning_is_vacuous(self):
        rep = weak_markov_test(1, PARAMS, initial_exploration(1), 20000, Random(0))
        assert rep.n_used == rep.n_sampled == 20000
        assert len(rep.marginals) == 1
        assert rep.min_p() > 0.01

    def test_first_reveal_fill_marginal(self):
        rep = weak_markov_test(1, PARAMS, t1_prefix(), 100000, Random(1))
        assert rep.n_used > 8000
        assert len(rep.marginals) == 1
        assert rep.marginals[0].semi_perimeter == 2
        assert rep.min_p() > 0.01
        gof = rep.marginals[0].gof
        assert gof.dof == len(gof.cells) - 1

    def test_two_hole_independence(self):
        subq = peel(initial_exploration(3), 1, PeelEvent.t2(1, 1))
        rep = weak_markov_test(3, PARAMS, subq, 30000, Random(2))
        assert len(rep.marginals) == 2
        assert len(rep.independence) == 1
        assert rep.independence[0].holes == (0, 1)
        assert rep.min_p() > 0.01

    def test_report_rows_are_flat(self):
        subq = peel(initial_exploration(3), 1, PeelEvent.t2(1, 1))
        rep = weak_markov_test(3, PARAMS, subq, 5000, Random(3))
        rows = rep.rows()
        assert len(rows) == 3
        assert {r["kind"] for r in rows} == {"marginal", "independence"}
        for r in rows:
            assert 0.0 <= r["p_value"] <= 1.0

    def test_conditioning_must_be_reachable(self):
        with pytest.raises(EventNeverHit):
            weak_markov_test(
                1, BoltzmannParams(face_cap=0), t1_prefix(), 100, Random(0)
            )

    def test_conditioning_never_observed(self):
        rare = t1_prefix()
        for dart, event in _LEAVES[5].peels[1:]:
            rare = peel(rare, dart, event)
        with pytest.raises(EventNeverHit):
            weak_markov_test(1, PARAMS, rare, 50, Random(0))

    def test_perimeter_checked(self):
        with pytest.raises(WrongPerimeter):
            weak_markov_test(2, PARAMS, t1_prefix(), 100, Random(0))

    def test_needs_a_hole(self):
        with pytest.raises(NotAHole):
            weak_markov_test(1, PARAMS, generate_all(1, 1)[0], 100, Random(0))


class TestStrongMarkov:
    def test_prefix_rule(self):
        rep = strong_markov_test(
            1, PARAMS, deterministic_prefix_rule(1), 40000, Random(3)
        )
        # the one-step groups with a hole: only the fresh-face outcome
        assert len(rep.marginals) == 1
        assert rep.marginals[0].group.startswith("1f[2]")
        assert rep.min_p() > 0.01

    def test_first_split_rule(self):
        rep = strong_markov_test(1, PARAMS, first_type2_rule(), 30000, Random(4))
        assert len(rep.marginals) >= 2
        assert rep.min_p() > 0.01

    def test_pinch_cut_rule(self):
        # the contour stopping map satisfies the same conditional law even
        # though no peeling algorithm realizes it
        rep = strong_markov_test(1, PARAMS, stopping_rule_Q, 30000, Random(8))
        assert rep.min_p() > 0.01
        assert any(m.group.startswith("1f[1]") for m in rep.marginals)

    def test_rule_must_extract_submaps(self):
        rule = StoppingRule("bogus", lambda q: t1_prefix(), lambda p: CONTAINED)
        with pytest.raises(NotSubmap):
            strong_markov_test(1, PARAMS, rule, 500, Random(0))

    def test_needs_a_testable_group(self):
        # revealing everything leaves no hole whose fill could be tested
        rule = StoppingRule("identity", lambda q: q, lambda p: CONTAINED)
        with pytest.raises(EventNeverHit):
            strong_markov_test(1, PARAMS, rule, 200, Random(0))


class TestRerooting:
    def test_exactly_invariant(self):
        assert rerooting_invariance_check(1, 2, PARAMS) == Fraction(0)
        assert rerooting_invariance_check(2, 2, PARAMS) == Fraction(0)
        assert rerooting_invariance_check(3, 1, PARAMS) == Fraction(0)

    def test_needs_a_census_window(self):
        with pytest.raises(CensusMissing):
            rerooting_invariance_check(1, -1, PARAMS)


@pytest.fixture(scope="module")
def branch_report():
    return counterexample_branches(PARAMS, fmax=4)


class TestCounterexample:
    def test_every_branch_diverges(self, branch_report):
        assert len(branch_report.leaves) == 7
        assert branch_report.diverges_everywhere()
        for leaf in branch_report.leaves:
            assert leaf.probability > 0
            assert leaf.n_compatible > 0
            assert leaf.n_equal == 0
            assert leaf.n_on_course_in_event == 0

    def test_leaf_probabilities(self, branch_report):
        by_name = {r.leaf.name: r for r in branch_report.leaves}
        # the two-step pinches telescope to q itself
        assert by_name["pinch-right"].probability == PARAMS.q
        assert by_name["pinch-left"].probability == PARAMS.q
        assert (
            by_name["second-face-pinch"].probability
            == by_name["first-face-pinch-late"].probability
        )
        assert (
            by_name["deep-wrap-far"].probability
            == by_name["deep-wrap-near"].probability
        )
        total = branch_report.total_probability()
        assert 0 < total < 1

    def test_census_window_counts(self, branch_report):
        assert [r.n_compatible for r in branch_report.leaves] == [
            66, 66, 15, 65, 65, 5, 5,
        ]
        assert [r.n_in_event for r in branch_report.leaves] == [
            53, 53, 4, 41, 53, 5, 5,
        ]

    def test_pinched_pendants_fall_in_the_cut(self, branch_report):
        flags = {
            r.leaf.name: r.pendant_in_cut for r in branch_report.leaves
        }
        assert flags == {
            "pinch-right": True,
            "pinch-left": True,
            "wrap-around": None,
            "second-face-pinch": None,
            "first-face-pinch-late": True,
            "deep-wrap-far": None,
            "deep-wrap-near": None,
        }

    def test_one_boundary_dart_never_opens_the_event(self):
        # after the first reveal, exactly one hole dart has every closure
        # capping the cut loop at three edges or fewer
        census = census_upto(4)
        st = t1_prefix()
        all_short = {}
        for dart in st.hole_walk(0):
            walk = st.base.face_walk(dart)
            short = True
            for k in range(1, len(walk), 2):
                if walk[k] == st.alpha[dart]:
                    continue
                ev = PeelEvent.t2((k - 1) // 2, (len(walk) - 1 - k) // 2)
                e = peel(st, dart, ev)
                for q in census:
                    if root_embedding(e, q) is None:
                        continue
                    if right_process(q).loop_length > 3:
                        short = False
                        break
                if not short:
                    break
            all_short[dart] = short
        assert all_short == {9: False, 7: False, 5: False, 3: True}

    def test_window_must_cover_the_leaves(self):
        with pytest.raises(CensusMissing):
            counterexample_branches(PARAMS, fmax=1)


class TestCalibration:
    def test_p_values_uniform_under_the_null(self):
        pvals = []
        for seed in range(50):
            rep = weak_markov_test(1, PARAMS, t1_prefix(), 4000, Random(1000 + seed))
            pvals.append(rep.marginals[0].gof.p_value)
        assert ks_uniform(pvals) > 0.01
