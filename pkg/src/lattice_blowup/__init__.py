"""Lattice simulator for a blow-up preserving discretization of u_tt = Lap u + |u|^p."""

from .field import (
    Field,
    FieldError,
    field_max,
    field_min,
    field_sum,
    l1_ball_count,
    lattice_points,
    make_field,
    neighbor_average,
    read_snapshots,
    support_radius,
    write_snapshot,
)
from .scheme import (
    BlowUpReport,
    HypothesisReport,
    NumericOverflow,
    RunOutcome,
    SchemeParams,
    SimState,
    detect_blowup,
    from_scaled,
    run_simulation,
    step_naive,
    step_proposed,
    to_scaled,
    validate_hypotheses,
)
from .uniform import (
    ContinuousBoundParams,
    UniformTrajectory,
    continuous_blowup_upper_time,
    continuous_lower_bound,
    critical_exponent,
    iterate_naive_uniform,
    iterate_uniform,
    kato_exponent,
    linear_lower_bound_check,
)
from .diagnostics import (
    DiagnosticsConstants,
    DiagnosticsRecord,
    check_sum_identity,
    complete_records,
    fit_constants,
    monitor_inequalities,
    record_step,
)
from .oracles import ConvexComboInstance, convexity_scan, h, jensen_gap, phi
from .consistency import SmoothSampler, refinement_study, truncation_residual
from .config import ConfigError, ExperimentConfig, parse_config

__version__ = "0.1.0"
