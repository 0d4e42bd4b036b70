"""Partition values, exact probabilities, and the exact samplers."""

import math
from collections import Counter
from fractions import Fraction
from random import Random

import pytest

from qpeel.boltzmann import (
    BoltzmannParams,
    partition,
    peel_probabilities,
    prob_exact,
    sample_boltzmann,
    sample_boltzmann_events,
    sample_face_count,
    sample_uniform,
    sample_uniform_events,
)
from qpeel.census import count, generate_all
from qpeel.errors import EmptyClass, NotAHole, OutOfBounds, TailToleranceNotMet
from qpeel.maps import canonical_code, reroot
from qpeel.peeling import T1, PeelEvent, encode, explore, initial_exploration
from qpeel.stats import chi_square_gof

Q24 = BoltzmannParams(q=Fraction(1, 24))


def catalan(n: int) -> int:
    return math.comb(2 * n, n) // (n + 1)


class TestParams:
    def test_rejects_floats(self):
        with pytest.raises(OutOfBounds):
            BoltzmannParams(q=0.0416)

    def test_rejects_supercritical(self):
        with pytest.raises(OutOfBounds):
            BoltzmannParams(q=Fraction(1, 11))

    def test_accepts_string(self):
        assert BoltzmannParams(q="1/24").q == Fraction(1, 24)

    def test_accepts_boundary(self):
        BoltzmannParams(q=0)
        BoltzmannParams(q=Fraction(1, 12))


class TestPartition:
    def test_tree_only_at_zero_weight(self):
        p0 = BoltzmannParams(q=0)
        for ell in range(1, 6):
            val = partition(ell, p0)
            assert val.W == catalan(ell)
            assert val.tail_bound == 0.0

    def test_cap_zero_sums_single_term(self):
        loose = BoltzmannParams(q=Fraction(1, 24), face_cap=0, tail_tol=1.0)
        assert partition(1, loose).W == 1

    def test_default_cap_tail_certified(self):
        val = partition(1, Q24)
        assert val.tail_bound < 1e-9
        assert val.W > 1

    def test_tail_not_met_raised(self):
        with pytest.raises(TailToleranceNotMet):
            partition(1, BoltzmannParams(q=Fraction(1, 24), face_cap=0))

    def test_critical_weight_uncertifiable(self):
        with pytest.raises(TailToleranceNotMet):
            partition(1, BoltzmannParams(q=Fraction(1, 12)))

    def test_vertex_class(self):
        assert partition(0, Q24).W == 1

    def test_exact_value_small_cap(self):
        # W = sum of count(1,f)/24^f for f <= 2 = 1 + 2/24 + 9/576
        loose = BoltzmannParams(q=Fraction(1, 24), face_cap=2, tail_tol=1.0)
        assert partition(1, loose).W == Fraction(1) + Fraction(2, 24) + Fraction(9, 576)


class TestProbExact:
    def test_trees_uniform_at_zero_weight(self):
        p0 = BoltzmannParams(q=0)
        for ell in (1, 2, 3):
            for m in generate_all(ell, 0):
                assert prob_exact(m, p0) == Fraction(1, catalan(ell))

    def test_single_face_class_equiprobable(self):
        a, b = generate_all(1, 1)
        assert prob_exact(a, Q24) == prob_exact(b, Q24)
        assert prob_exact(a, Q24) == Fraction(1, 24) / partition(1, Q24).W

    def test_total_mass_exact_at_matching_cap(self):
        params = BoltzmannParams(q=Fraction(1, 24), face_cap=3, tail_tol=1.0)
        total = Fraction(0)
        for f in range(4):
            total += sum(prob_exact(m, params) for m in generate_all(1, f))
        assert total == 1

    def test_rejects_open_holes(self):
        with pytest.raises(NotAHole):
            prob_exact(initial_exploration(1), Q24)

    def test_rerooting_invariance_exact(self):
        for ell in (1, 2, 3):
            for f in (0, 1, 2):
                for m in generate_all(ell, f):
                    p = prob_exact(m, Q24)
                    for d in m.boundary_walk():
                        assert prob_exact(reroot(m, d), Q24) - p == 0


class TestPeelProbabilities:
    def test_zero_weight_is_catalan_convolution(self):
        p0 = BoltzmannParams(q=0)
        for ell in (1, 2, 3, 4):
            probs = peel_probabilities(ell, p0)
            assert probs[T1] == 0
            total = Fraction(0)
            for event, pr in probs.items():
                if event.is_split:
                    expected = Fraction(
                        catalan(event.l1) * catalan(event.l2), catalan(ell)
                    )
                    assert pr == expected
                    total += pr
            assert total == 1

    def test_sums_to_one_within_tail(self):
        for ell in (1, 2, 3):
            probs = peel_probabilities(ell, Q24)
            assert abs(float(sum(probs.values())) - 1.0) < 1e-9

    def test_step_product_equals_point_probability(self):
        # exact identity: the W factors telescope hole by hole
        for ell in (1, 2, 3):
            for f in (0, 1, 2, 3):
                for m in generate_all(ell, f):
                    final, steps = explore(m)
                    product = Fraction(1)
                    for s in steps:
                        sp = s.state.hole_semi_perimeter(0)
                        product *= peel_probabilities(sp, Q24)[s.event]
                    assert product == prob_exact(m, Q24), (ell, f)


class TestUniformSampler:
    def test_singleton_class(self):
        rng = Random(0)
        tree = sample_uniform(1, 0, rng)
        assert canonical_code(tree) == canonical_code(generate_all(1, 0)[0])

    def test_empty_class(self):
        with pytest.raises(EmptyClass):
            sample_uniform_events(0, 1, Random(0))

    def test_two_map_class_balanced(self):
        rng = Random(2024)
        hits = Counter(sample_uniform_events(1, 1, rng) for _ in range(100_000))
        assert len(hits) == 2
        p_hat = hits.most_common(1)[0][1] / 100_000
        sigma = (0.25 / 100_000) ** 0.5
        assert abs(p_hat - 0.5) <= 3 * sigma

    def test_chi_square_uniform_on_2_2(self):
        rng = Random(7)
        reference = generate_all(2, 2)
        n = 50_000
        hits = Counter(tuple(sample_uniform_events(2, 2, rng)) for _ in range(n))
        expected = {
            tuple(s.event for s in explore(m)[1]): 1
            / len(reference)
            for m in reference
        }
        assert len(expected) == len(reference)
        result = chi_square_gof(hits, expected, n)
        assert result.p_value > 0.01

    def test_events_replay_to_valid_maps(self):
        rng = Random(5)
        for _ in range(200):
            m = sample_uniform(2, 2, rng)
            assert m.n_holes == 0
            assert m.semi_perimeter == 2
            assert m.n_internal_faces == 2


class TestBoltzmannSampler:
    def test_zero_weight_always_tree(self):
        rng = Random(1)
        p0 = BoltzmannParams(q=0)
        for _ in range(50):
            m = sample_boltzmann(1, p0, rng)
            assert m.n_internal_faces == 0

    def test_face_count_law(self):
        rng = Random(11)
        n = 100_000
        hits = Counter(sample_face_count(1, Q24, rng) for _ in range(n))
        w = partition(1, Q24).W
        expected = {
            f: float(count(1, f) * Fraction(1, 24) ** f / w) for f in range(6)
        }
        result = chi_square_gof(hits, expected, n)
        assert result.p_value > 0.01

    def test_frequencies_match_exact_probabilities(self):
        rng = Random(23)
        n = 100_000
        hits = Counter(sample_boltzmann_events(1, Q24, rng) for _ in range(n))
        expected = {}
        for f in (0, 1, 2):
            for m in generate_all(1, f):
                final, steps = explore(m)
                key = tuple(s.event for s in steps)
                expected[key] = float(prob_exact(m, Q24))
        result = chi_square_gof(hits, expected, n)
        assert result.p_value > 0.01

    def test_reweighting_flat_across_strata(self):
        rng = Random(31)
        n = 100_000
        hits = Counter(sample_face_count(1, Q24, rng) for _ in range(n))
        w = float(partition(1, Q24).W)
        for f in (0, 1, 2):
            ratio = (hits[f] / n) * 24.0**f / count(1, f) * w
            assert abs(ratio - 1.0) < 0.15, f
