"""Exact discrete optimal transport and comparison geometry on concrete CAT(0) spaces.

The package covers three families of spaces (Euclidean factors, finite metric
trees, open books of half-planes) with a shared chart-based point type, exact
geodesics, comparison-angle machinery, first-order calculus along geodesics,
an exact Kantorovich solver with dual certificates, polar factorization of
discrete maps, and a reproducible experiment harness with a CLI front end.
"""

from __future__ import annotations

from .calculus import (
    DEFAULT_STEPS,
    DerivativeEstimate,
    FermatReport,
    TwistReport,
    cost,
    cost_derivative_closed,
    direction_set,
    eilenberg_estimate,
    fermat_check,
    geodesic_derivative,
    radial_projection,
    twist_test,
    zeta_positivity,
)
from .errors import (
    BadEpsilon,
    BoundaryPoint,
    CapExceeded,
    Cat0otError,
    ConfigInvalid,
    DegenerateTriangle,
    EmptyBall,
    EmptySet,
    InvalidPoint,
    IoFailure,
    MapUndefined,
    NotATriangle,
    NotDeterministicError,
    NotExtendable,
    OriginMismatch,
    ParamOutOfRange,
    PointNotOnGeodesic,
    ProbeAtCenter,
    ScheduleTooShort,
    SupportTooLarge,
    TooManyTuples,
    UnsupportedConvexSet,
    UnsupportedRegion,
    UnsupportedShape,
    WeightMismatch,
)
from .geometry import (
    AngleEstimate,
    Ball,
    BallRegion,
    BoxRegion,
    EmptyRegion,
    Geodesic,
    Piece,
    Point,
    Segment,
    SpaceHandle,
    Subtree,
    TreeRegion,
    alexandrov_angle,
    cat0_defect,
    comparison_angle,
    comparison_angle_sequence,
    convex_combination,
    distance,
    extend,
    geodesic,
    geodesic_from_chain,
    normalize,
    parameter_on,
    point,
    points_equal,
    project_convex,
)
from .harness import (
    EXPERIMENTS,
    Report,
    Scenario,
    emit_report,
    line_instance,
    random_instance,
    render_report,
    run_batch,
    run_scenario,
    sample_points,
    scenario_from_config,
    translation_instance,
)
from .polar import Factorization, inverse_map, polar_factorize, verify_measure_preserving
from .rng import substream
from .spaces import (
    build_comb,
    build_euclidean,
    build_open_book,
    build_star,
    build_tree,
    build_tripod,
    point_from_json,
    point_to_json,
    space_from_json,
    space_to_json,
)
from .transport import (
    DiscreteMeasure,
    GridPotential,
    NotDeterministic,
    PotentialPair,
    TransportIdentityReport,
    TransportMap,
    TransportPlan,
    brute_force_oracle,
    c_subdifferential,
    c_transform,
    check_cyclic_monotonicity,
    extract_monge_map,
    map_from_points,
    measure,
    measure_from_json,
    measure_to_json,
    pairwise_costs,
    plan_from_json,
    plan_to_csv,
    plan_to_json,
    psi_R,
    solve_kantorovich,
    verify_transport_identity,
)

__version__ = "0.1.0"
