"""Composite-pulse refocusing of spin-dependent kicks for trapped-ion gates.

Simulates impulsive and finite-duration spin-dependent kicks on truncated
qubit (x) Fock spaces, verifies first-order cancellation of shot-to-shot
amplitude noise by composite pulse sequences, reproduces the
infidelity-vs-trap-frequency and infidelity-vs-noise sweeps for both the
single-pulse and frequency-comb kick generation schemes, and searches
entangling-gate kick schedules by phase-space algebra.
"""

from .composite import (
    THETA_SDK,
    ErrorSeries,
    Pulse,
    SequenceSpec,
    bare_pulse,
    calibrate_theta,
    error_series,
    five_pulse_sdk,
    sequence_propagator,
    single_body_sequence,
    two_body_sequence,
)
from .dynamics import (
    PulseSpec,
    TrainSpec,
    TrapSpec,
    calibrate_train,
    default_train,
    integrate_comb_train,
    integrate_pulse_sequence,
    integrate_rotating_frame,
    train_nominal_target,
)
from .fidelity import FidelityReport, process_fidelity, target_sdk
from .hilbert import (
    HilbertSpace,
    build_kick_operator,
    embed,
    matrix_exponential,
)
from .kickalgebra import (
    BranchResult,
    Kick,
    KickSchedule,
    compose_schedule,
    gate_infidelity,
    gate_schedule_search,
    simulate_schedule_numeric,
)
from .noise import NoiseModel, sample_shots
from .optimize import AdjustmentResult, adjust_displacement

__version__ = "0.1.0"

__all__ = [
    "THETA_SDK",
    "AdjustmentResult",
    "BranchResult",
    "ErrorSeries",
    "FidelityReport",
    "HilbertSpace",
    "Kick",
    "KickSchedule",
    "NoiseModel",
    "Pulse",
    "PulseSpec",
    "SequenceSpec",
    "TrainSpec",
    "TrapSpec",
    "adjust_displacement",
    "bare_pulse",
    "build_kick_operator",
    "calibrate_theta",
    "calibrate_train",
    "compose_schedule",
    "default_train",
    "embed",
    "error_series",
    "five_pulse_sdk",
    "gate_infidelity",
    "gate_schedule_search",
    "integrate_comb_train",
    "integrate_pulse_sequence",
    "integrate_rotating_frame",
    "matrix_exponential",
    "process_fidelity",
    "sample_shots",
    "sequence_propagator",
    "simulate_schedule_numeric",
    "single_body_sequence",
    "target_sdk",
    "train_nominal_target",
    "two_body_sequence",
]
