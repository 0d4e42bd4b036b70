"""Goodness-of-fit machinery shared by the verification harnesses.

Thin, typed layer over scipy.stats: multinomial chi-square with the standard
small-cell pooling (expected < 5 lumped into an "(other)" cell), contingency
independence on top-k classes, and Kolmogorov-Smirnov helpers for p-value
calibration sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

from scipy import stats as _scipy_stats

from .errors import DegenerateTable

__all__ = [
    "OTHER",
    "GofResult",
    "chi_square_gof",
    "independence_test",
    "ks_uniform",
    "ks_two_sample",
]

OTHER = "(other)"


@dataclass(frozen=True)
class GofResult:
    """One chi-square verdict, with the pooled table it was computed on."""

    statistic: float
    dof: int
    p_value: float
    n: int
    cells: tuple[tuple[str, int, float], ...]  # label, observed, expected

    def row(self) -> dict:
        return {
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "n": self.n,
        }


def chi_square_gof(
    observed: Mapping[Hashable, int],
    expected_probs: Mapping[Hashable, float],
    n: int | None = None,
    min_expected: float = 5.0,
) -> GofResult:
    """Multinomial goodness of fit with small-cell pooling.

    ``expected_probs`` may sum to less than one: the remainder, observed
    classes missing from it, and every cell with expected count below
    ``min_expected`` are pooled into the "(other)" cell.

    Raises:
        DegenerateTable: fewer than two cells survive pooling.
    """
    if n is None:
        n = sum(observed.values())
    if n <= 0:
        raise DegenerateTable("no samples")
    leftover = 1.0 - float(sum(expected_probs.values()))
    if leftover < -1e-9:
        raise DegenerateTable(f"expected probabilities sum to {1.0 - leftover}")

    kept: list[tuple[str, int, float]] = []
    other_obs = sum(c for k, c in observed.items() if k not in expected_probs)
    other_exp = max(leftover, 0.0) * n
    for key, p in expected_probs.items():
        exp = float(p) * n
        obs = observed.get(key, 0)
        if exp < min_expected:
            other_obs += obs
            other_exp += exp
        else:
            kept.append((str(key), obs, exp))
    if other_exp >= min_expected:
        kept.append((OTHER, other_obs, other_exp))
    elif kept and (other_exp > 0 or other_obs > 0):
        label, obs, exp = kept[-1]  # fold a thin remainder into the last cell
        kept[-1] = (label, obs + other_obs, exp + other_exp)

    if len(kept) < 2:
        raise DegenerateTable(f"{len(kept)} cells after pooling")
    statistic = sum((obs - exp) ** 2 / exp for _, obs, exp in kept)
    dof = len(kept) - 1
    p_value = float(_scipy_stats.chi2.sf(statistic, dof))
    return GofResult(float(statistic), dof, p_value, n, tuple(kept))


def independence_test(
    pairs: Mapping[tuple[Hashable, Hashable], int],
    top_k: int = 4,
) -> GofResult:
    """Chi-square independence on the top-k x top-k contingency table.

    Classes outside the top k per axis are pooled into "(other)" rows and
    columns; empty rows/columns are dropped.

    Raises:
        DegenerateTable: fewer than 2x2 usable cells.
    """
    n = sum(pairs.values())
    if n <= 0:
        raise DegenerateTable("no samples")
    row_tot: dict[Hashable, int] = {}
    col_tot: dict[Hashable, int] = {}
    for (a, b), c in pairs.items():
        row_tot[a] = row_tot.get(a, 0) + c
        col_tot[b] = col_tot.get(b, 0) + c
    rows = sorted(row_tot, key=lambda k: (-row_tot[k], str(k)))[:top_k]
    cols = sorted(col_tot, key=lambda k: (-col_tot[k], str(k)))[:top_k]
    row_ix = {k: i for i, k in enumerate(rows)}
    col_ix = {k: i for i, k in enumerate(cols)}
    nr, nc = len(rows) + 1, len(cols) + 1  # trailing "(other)" row/col
    table = [[0] * nc for _ in range(nr)]
    for (a, b), c in pairs.items():
        table[row_ix.get(a, nr - 1)][col_ix.get(b, nc - 1)] += c

    # drop empty margins so scipy sees a well-posed table; the top-k cut
    # keeps the remaining expected counts healthy by construction
    table = [r for r in table if sum(r) > 0]
    if table:
        keep = [j for j in range(len(table[0])) if sum(r[j] for r in table) > 0]
        table = [[r[j] for j in keep] for r in table]
    if len(table) < 2 or len(table[0]) < 2:
        raise DegenerateTable("contingency table too thin")
    stat, p_value, dof, _ = _scipy_stats.chi2_contingency(table, correction=False)
    cells = tuple(
        (f"r{i}c{j}", table[i][j], 0.0)
        for i in range(len(table))
        for j in range(len(table[0]))
    )
    return GofResult(float(stat), int(dof), float(p_value), n, cells)


def ks_uniform(p_values: Sequence[float]) -> float:
    """KS p-value of the hypothesis that ``p_values`` are U(0,1)."""
    if len(p_values) < 2:
        raise DegenerateTable("need at least two p-values")
    return float(_scipy_stats.kstest(list(p_values), "uniform").pvalue)


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sample KS p-value."""
    if not a or not b:
        raise DegenerateTable("empty sample")
    return float(_scipy_stats.ks_2samp(list(a), list(b)).pvalue)
