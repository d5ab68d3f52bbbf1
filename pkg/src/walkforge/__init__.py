"""Multi-scale lattice environments, variable-speed walks, and diagnostics."""

from walkforge.decomposition import (
    ExcursionDecomposition,
    compute_stopping_times,
    covariance_decay_experiment,
    excursion_increments,
    law_equality_experiment,
    smallness_experiment,
    split_and_clock,
    validate_decomposition,
)
from walkforge.environment import (
    CalibrationMissingError,
    Environment,
    enumerate_fundamental,
    region_membership,
    sample_offsets,
    zero_offsets,
)
from walkforge.network import (
    CalibrationResult,
    FiniteNetwork,
    calibrate_K,
    capacitary_measure,
    commute_identity_check,
    effective_resistance,
    expected_hitting_time,
    export_finite_network,
    green_function,
    harmonic_extension,
    harnack_ratio,
)
from walkforge.rng import RngStream
from walkforge.schedule import (
    ParameterSchedule,
    ValidationReport,
    default_desk_schedule,
    eta_of,
    roomy_desk_schedule,
    schedule_hash,
    validate,
)
from walkforge.stats import (
    TestReport,
    fclt_report,
    heat_kernel_check,
    ks_test,
    skorokhod_estimate,
    two_sample_ks,
)
from walkforge.walk import (
    PathRecord,
    batch_simulate,
    positions_at,
    sample_positions,
    simulate,
)

__all__ = [
    "CalibrationMissingError",
    "CalibrationResult",
    "Environment",
    "ExcursionDecomposition",
    "FiniteNetwork",
    "ParameterSchedule",
    "PathRecord",
    "RngStream",
    "TestReport",
    "ValidationReport",
    "batch_simulate",
    "calibrate_K",
    "capacitary_measure",
    "commute_identity_check",
    "compute_stopping_times",
    "covariance_decay_experiment",
    "default_desk_schedule",
    "effective_resistance",
    "enumerate_fundamental",
    "eta_of",
    "excursion_increments",
    "expected_hitting_time",
    "export_finite_network",
    "fclt_report",
    "green_function",
    "harmonic_extension",
    "harnack_ratio",
    "heat_kernel_check",
    "ks_test",
    "law_equality_experiment",
    "positions_at",
    "region_membership",
    "roomy_desk_schedule",
    "sample_offsets",
    "sample_positions",
    "schedule_hash",
    "simulate",
    "skorokhod_estimate",
    "smallness_experiment",
    "split_and_clock",
    "two_sample_ks",
    "validate",
    "validate_decomposition",
    "zero_offsets",
]

__version__ = "0.1.0"
