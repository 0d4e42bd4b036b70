"""Rooted planar quadrangulations with boundary: peeling, counting, sampling.

The package builds quadrangulations with a boundary as rotation systems,
explores them edge by edge through peeling, tabulates exact counts, samples
from uniform and face-weighted laws, and provides statistical checks of the
spatial Markov property for plain, spin-decorated, and metric variants.
"""

from .boltzmann import (
    CRITICAL_Q,
    BoltzmannParams,
    PartitionValue,
    partition,
    peel_probabilities,
    prob_exact,
    sample_boltzmann,
    sample_boltzmann_events,
    sample_face_count,
    sample_uniform,
    sample_uniform_events,
)
from .census import completions, count, generate_all, growth_ratio
from .decorated import (
    EXACT_FACE_LIMIT,
    BoundaryCondition,
    DecoratedParams,
    Decoration,
    SpinMeasure,
    decorated_rerooting_check,
    decorated_weak_markov_test,
    face_adjacency,
    gibbs_ratio_check,
    hamiltonian,
    hole_boundary_condition,
    internal_faces,
    partition_decorated,
    pendant_spans,
    sample_decorated,
    sample_decoration,
)
from .errors import QpeelError
from .maps import (
    CEMETERY,
    Cemetery,
    MapWithHoles,
    RotationMap,
    canonical_code,
    from_raw,
    glue,
    is_submap,
    reroot,
    root_embedding,
    to_raw,
    validate_quadrangulation,
)
from .markov import (
    CONTAINED,
    NOT_CONTAINED,
    UNDETERMINED,
    BranchLeaf,
    BranchReport,
    ContourResult,
    HoleMarginal,
    LeafReport,
    MarkovTestReport,
    PairIndependence,
    StoppingMapResult,
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
from .peeling import (
    ExplorationStep,
    PeelEvent,
    T1,
    canonical_algorithm,
    decode,
    encode,
    explore,
    initial_exploration,
    peel,
    peel_type_of,
    possible_events,
    replay,
)
from .stats import (
    OTHER,
    GofResult,
    chi_square_gof,
    independence_test,
    ks_two_sample,
    ks_uniform,
)

__version__ = "0.1.0"

__all__ = [
    "QpeelError",
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
    "PeelEvent",
    "T1",
    "initial_exploration",
    "possible_events",
    "peel",
    "peel_type_of",
    "ExplorationStep",
    "explore",
    "canonical_algorithm",
    "encode",
    "decode",
    "replay",
    "count",
    "completions",
    "generate_all",
    "growth_ratio",
    "CRITICAL_Q",
    "BoltzmannParams",
    "PartitionValue",
    "partition",
    "prob_exact",
    "peel_probabilities",
    "sample_uniform_events",
    "sample_uniform",
    "sample_face_count",
    "sample_boltzmann_events",
    "sample_boltzmann",
    "OTHER",
    "GofResult",
    "chi_square_gof",
    "independence_test",
    "ks_uniform",
    "ks_two_sample",
    "CONTAINED",
    "NOT_CONTAINED",
    "UNDETERMINED",
    "ContourResult",
    "right_process",
    "left_process",
    "StoppingMapResult",
    "stopping_map_details",
    "stopping_map_Q",
    "containment_decider_Q",
    "StoppingRule",
    "stopping_rule_Q",
    "deterministic_prefix_rule",
    "first_type2_rule",
    "HoleMarginal",
    "PairIndependence",
    "MarkovTestReport",
    "weak_markov_test",
    "strong_markov_test",
    "rerooting_invariance_check",
    "BranchLeaf",
    "LeafReport",
    "BranchReport",
    "counterexample_branches",
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
    "__version__",
]
