"""Simulation and statistical verification for SLE path measures.

The central object is the measure-valued Riemann sum that aggregates
two-sided radial SLE laws over interior points of a domain; the package
samples both that aggregate and chordal SLE biased by its natural-time
length, and measures the distance between them, together with the
supporting estimates (Green's function covariance, escape exponents,
natural-time moments, and the curve/measure metrics they rely on).
"""

from .aggregate import (
    AggregateReport,
    length_biased_chordal,
    riemann_aggregate,
    theta_moment_scan,
    verify_lengthbias,
)
from .content import (
    ContentEstimate,
    Region,
    minkowski_content,
    natural_length_proxy,
    natural_reparam,
    natural_reparam_proxy,
    theta_in_set,
)
from .curves import (
    Curve,
    CurveMetricKind,
    concat,
    curve_distance,
    dist_dc,
    dist_dd_upper,
    oscillation,
    pairwise_distances,
    reverse,
    thin_curve,
)
from .errors import (
    EmptyEnsembleError,
    MixedEnsembleError,
    NumericalDegeneracyError,
    PreconditionError,
    ResourceLimitError,
    SleaggError,
    SwallowedPointError,
)
from .green import (
    Configuration,
    GreenParams,
    annulus_green_integral,
    disk_config,
    green_config,
    green_halfplane,
    halfplane_config,
    tail_integrability,
    two_point_green_comparison,
    two_slit_config,
)
from .harness import (
    DEFAULT_TOLERANCES,
    ExperimentConfig,
    ingest_traces,
    run_suite,
)
from .io import CONVENTION_TAG, read_ensemble, read_slc1, write_ensemble, write_slc1
from .loewner import LoewnerState, sample_chordal, trace_from_state, weld_points
from .measures import (
    PartitionSpec,
    PathEnsemble,
    dist_ds,
    mixture,
    prokhorov,
    riemann_sum,
)
from .rng import path_generator, spawn_seed
from .twosided import (
    TwoSidedSample,
    chordal_point_survey,
    escape_stat,
    girsanov_drift,
    martingale_scan,
    one_point_fit,
    oracle_reweighted,
    sample_twosided,
)

__all__ = [name for name in dir() if not name.startswith("_")]
