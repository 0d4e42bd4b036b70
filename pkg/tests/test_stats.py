"""Pooling policy and calibration of the goodness-of-fit helpers."""

from collections import Counter
from random import Random

import pytest

from qpeel.errors import DegenerateTable
from qpeel.stats import (
    OTHER,
    chi_square_gof,
    independence_test,
    ks_two_sample,
    ks_uniform,
)


class TestChiSquare:
    def test_perfect_fit_high_p(self):
        observed = {"a": 5000, "b": 5000}
        result = chi_square_gof(observed, {"a": 0.5, "b": 0.5})
        assert result.p_value > 0.9
        assert result.dof == 1

    def test_gross_misfit_low_p(self):
        observed = {"a": 7000, "b": 3000}
        result = chi_square_gof(observed, {"a": 0.5, "b": 0.5})
        assert result.p_value < 1e-6

    def test_small_cells_pooled(self):
        observed = {"a": 9000, "b": 992, "rare1": 4, "rare2": 4}
        probs = {"a": 0.9, "b": 0.0992, "rare1": 0.0004, "rare2": 0.0004}
        result = chi_square_gof(observed, probs, n=10_000)
        labels = [c[0] for c in result.cells]
        assert OTHER in labels
        assert "rare1" not in labels

    def test_unseen_mass_goes_to_other(self):
        observed = {"a": 5000, "b": 4000, "weird": 1000}
        result = chi_square_gof(observed, {"a": 0.5, "b": 0.4}, n=10_000)
        other = [c for c in result.cells if c[0] == OTHER][0]
        assert other[1] == 1000
        assert abs(other[2] - 1000) < 1e-9

    def test_degenerate_single_cell(self):
        with pytest.raises(DegenerateTable):
            chi_square_gof({"a": 100}, {"a": 1.0})

    def test_no_samples(self):
        with pytest.raises(DegenerateTable):
            chi_square_gof({}, {"a": 0.5, "b": 0.5})

    def test_calibration_uniform_p_under_null(self):
        # the true guard: under the null, p-values must be uniform
        rng = Random(0)
        probs = {"a": 0.5, "b": 0.3, "c": 0.2}
        keys, weights = zip(*probs.items())
        p_values = []
        for _ in range(200):
            draws = Counter(rng.choices(keys, weights, k=2000))
            p_values.append(chi_square_gof(draws, probs, n=2000).p_value)
        assert ks_uniform(p_values) > 0.01


class TestIndependence:
    def test_independent_pairs_pass(self):
        rng = Random(1)
        pairs = Counter(
            (rng.choice("abc"), rng.choice("xy")) for _ in range(20_000)
        )
        assert independence_test(pairs).p_value > 0.01

    def test_dependent_pairs_fail(self):
        rng = Random(2)
        pairs = Counter()
        for _ in range(20_000):
            a = rng.choice("abc")
            b = "x" if a == "a" else rng.choice("xy")
            pairs[(a, b)] += 1
        assert independence_test(pairs).p_value < 1e-6

    def test_top_k_pooling(self):
        rng = Random(3)
        pairs = Counter()
        for _ in range(30_000):
            pairs[(rng.randrange(10), rng.randrange(10))] += 1
        result = independence_test(pairs, top_k=3)
        assert result.p_value > 0.001  # independent data, pooled table

    def test_degenerate(self):
        with pytest.raises(DegenerateTable):
            independence_test({("a", "x"): 100})


class TestKs:
    def test_uniform_accepts_uniform(self):
        rng = Random(4)
        assert ks_uniform([rng.random() for _ in range(500)]) > 0.01

    def test_uniform_rejects_clustered(self):
        assert ks_uniform([0.5] * 100) < 1e-6

    def test_two_sample(self):
        rng = Random(5)
        a = [rng.gauss(0, 1) for _ in range(800)]
        b = [rng.gauss(0, 1) for _ in range(800)]
        c = [rng.gauss(1, 1) for _ in range(800)]
        assert ks_two_sample(a, b) > 0.01
        assert ks_two_sample(a, c) < 1e-6

    def test_needs_data(self):
        with pytest.raises(DegenerateTable):
            ks_uniform([0.5])
        with pytest.raises(DegenerateTable):
            ks_two_sample([], [1.0])
