"""Exception types shared across the package.

Every typed failure raised by the library derives from QpeelError, so callers
can catch one base class at API boundaries (the CLI maps them to usage errors).
"""

from __future__ import annotations


class QpeelError(Exception):
    """Base class for all library errors."""


class InvalidPermutation(QpeelError):
    """alpha/sigma are not permutations of the dart set, alpha is not a
    fixed-point-free involution, or the dart set is not connected."""


class NonQuadFace(QpeelError):
    """A face other than the root face or a registered hole has degree != 4."""

    def __init__(self, face_id: int, degree: int):
        super().__init__(f"face {face_id} has degree {degree}, expected 4")
        self.face_id = face_id
        self.degree = degree


class EulerViolation(QpeelError):
    """V - E + F differs from 2; the rotation system is not planar."""


class PerimeterMismatch(QpeelError):
    """A fill's root face degree does not match the hole it is glued into."""

    def __init__(self, hole_index: int, expected: int, got: int):
        super().__init__(
            f"hole {hole_index} expects fill of perimeter {expected}, got {got}"
        )
        self.hole_index = hole_index


class NotAHole(QpeelError):
    """A marked dart does not identify a usable hole, or fills do not align
    with the hole list."""


class DartNotOnBoundary(QpeelError):
    """Rerooting target does not lie on the root face."""


class UnsupportedHoleTopology(QpeelError):
    """The map's hole boundaries share edges in a way the submap machinery
    does not handle (never produced by peeling explorations)."""


class NotActive(QpeelError):
    """Peeled dart is not on any hole boundary."""


class SplitArityMismatch(QpeelError):
    """A two-sided split's labels are inconsistent with the hole perimeter."""


class NotSubmap(QpeelError):
    """Event inference was asked against a map that does not contain the
    explored map."""


class AlgorithmReturnedInactiveDart(QpeelError):
    """A peeling algorithm returned a dart outside the active boundary."""


class OutOfBounds(QpeelError):
    """Requested census entry lies outside the tabulated range."""


class BudgetExceeded(QpeelError):
    """Exhaustive generation was asked beyond its configured size bound."""


class DivisionByZero(QpeelError):
    """Growth ratio requested with a zero denominator count."""


class EmptyClass(QpeelError):
    """Requested uniform sample from an empty class."""


class TailToleranceNotMet(QpeelError):
    """Truncated partition value cannot certify the requested tail bound."""


class CensusMissing(QpeelError):
    """Partition evaluation needs census entries that were not tabulated."""


class EventNeverHit(QpeelError):
    """Rejection conditioning never met its event within the sample budget."""


class DegenerateTable(QpeelError):
    """A contingency table collapsed to fewer than two usable cells."""


class WrongPerimeter(QpeelError):
    """A map's root face length differs from what the operation requires."""


class MissingSpin(QpeelError):
    """A face decoration required by the Hamiltonian is absent."""


class TooManyFaces(QpeelError):
    """Exact decorated summation asked beyond its size guard."""


class SingularForm(QpeelError):
    """The quadratic form of a continuous decoration law is not positive
    definite; the partition integral diverges."""


class BinTooThin(QpeelError):
    """A stratification bin holds too few samples to test."""


class NonpositiveLength(QpeelError):
    """Edge lengths and path positions must be strictly positive."""


class BadGrid(QpeelError):
    """A path restriction was requested off the discretization grid."""


class InsufficientHits(QpeelError):
    """Too few conditioned samples for a density estimate."""


class QuadratureFailure(QpeelError):
    """Adaptive quadrature could not certify the requested accuracy."""


class CapUnsatisfiable(QpeelError):
    """No skeleton satisfies the configured size cap."""
