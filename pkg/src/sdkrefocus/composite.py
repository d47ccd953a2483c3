"""Composite-pulse sequences and first-order error cancellation.

Three sequence kinds share one algebra (the axis operator squares to the
identity, so a 2 pi rotation about any tilted axis is transparent at zero
noise and exposes only the noise term):

* ``single_body``  - a bare rotation of area g*tau about x, followed by two
  2 pi corrections about axes tilted by +/- theta in the xy plane.
* ``two_body``     - the same scheme with axis operators sigma_x^1 sigma_phi^2,
  mapping the rotation algebra into the two-qubit group.
* ``sdk``          - the five-pulse spin-dependent-kick sequence with phases
  [0, theta, theta, -theta, -theta] and per-pulse area pi/2.

All pulses propagate as exp(-i area (1+eps) O(phase)); the shot noise eps
is fractional by default.  Under this uniform convention the first-order
cancellation lands at cos(theta) = -g*tau/(4 pi) for the three-unitary
sequences (|factor| 4 pi, not 2 pi) and at cos(theta) = -1/4 for the
five-pulse SDK sequence; `calibrate_theta` finds the root numerically
rather than assuming either closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ._kickstep import KickKernel
from .hilbert import SIGMA_X, SIGMA_Y, HilbertSpace, build_kick_operator

__all__ = [
    "THETA_SDK",
    "Pulse",
    "SequenceSpec",
    "ErrorSeries",
    "IllConditionedSeriesError",
    "NoRootError",
    "five_pulse_sdk",
    "single_body_sequence",
    "two_body_sequence",
    "bare_pulse",
    "sequence_propagator",
    "error_series",
    "calibrate_theta",
]

#: Composite phase cancelling first-order shot noise of the SDK sequence.
THETA_SDK = math.acos(-0.25)

_KINDS = ("single_body", "two_body", "sdk")


class IllConditionedSeriesError(RuntimeError):
    """Finite-difference extrapolation estimates disagree beyond tolerance."""


class NoRootError(RuntimeError):
    """The cancellation condition has no solution in the search window."""


@dataclass(frozen=True)
class Pulse:
    axis_phase: float
    area: float


@dataclass(frozen=True)
class SequenceSpec:
    """Ordered composite-pulse description (pulse 0 applied first)."""

    pulses: tuple[Pulse, ...]
    kind: str
    theta: float
    target_area: float

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if not self.pulses:
            raise ValueError("empty sequence")
        for p in self.pulses:
            if not (np.isfinite(p.area) and p.area > 0):
                raise ValueError(f"pulse areas must be positive and finite, got {p.area}")
            if not np.isfinite(p.axis_phase):
                raise ValueError("pulse phases must be finite")


def five_pulse_sdk(theta: float = THETA_SDK) -> SequenceSpec:
    phases = (0.0, theta, theta, -theta, -theta)
    pulses = tuple(Pulse(p, math.pi / 2) for p in phases)
    return SequenceSpec(pulses, "sdk", theta, math.pi / 2)


def single_body_sequence(g_times_tau: float, theta: float) -> SequenceSpec:
    """Bare pulse of area g*tau plus two 2 pi corrections at +/- theta.

    With g*tau = 0 the bare pulse is omitted (nothing to protect); the
    sequence is then just the two corrections.
    """
    pulses = []
    if g_times_tau > 0:
        pulses.append(Pulse(0.0, g_times_tau))
    pulses += [Pulse(theta, 2 * math.pi), Pulse(-theta, 2 * math.pi)]
    return SequenceSpec(tuple(pulses), "single_body", theta, g_times_tau)


def two_body_sequence(g_times_tau: float, theta: float) -> SequenceSpec:
    seq = single_body_sequence(g_times_tau, theta)
    return SequenceSpec(seq.pulses, "two_body", theta, g_times_tau)


def bare_pulse(area: float, kind: str = "single_body") -> SequenceSpec:
    return SequenceSpec((Pulse(0.0, area),), kind, 0.0, area)


def _axis(phase: float) -> np.ndarray:
    return math.cos(phase) * SIGMA_X + math.sin(phase) * SIGMA_Y


def _rot(op: np.ndarray, angle: float) -> np.ndarray:
    # op squares to the identity
    return math.cos(angle) * np.eye(op.shape[0]) - 1j * math.sin(angle) * op


def sequence_propagator(
    seq: SequenceSpec,
    epsilon: float,
    space: HilbertSpace | None = None,
    eta: float = 0.0,
    absolute_noise: bool = False,
) -> np.ndarray:
    """Ordered product of impulsive pulse unitaries at shot noise ``epsilon``.

    ``epsilon`` is the fractional pulse-area error shared by every pulse of
    the sequence (one shot).  With ``absolute_noise=True`` it is instead an
    absolute area offset added to each pulse.
    """
    if not np.isfinite(epsilon) or abs(epsilon) >= 0.5:
        raise ValueError(f"|epsilon| must be < 0.5, got {epsilon}")

    def angle(area: float) -> float:
        return area + epsilon if absolute_noise else area * (1.0 + epsilon)

    if seq.kind == "single_body":
        u = np.eye(2, dtype=complex)
        for p in seq.pulses:
            u = _rot(_axis(p.axis_phase), angle(p.area)) @ u
        return u
    if seq.kind == "two_body":
        u = np.eye(4, dtype=complex)
        for p in seq.pulses:
            op = np.kron(SIGMA_X, _axis(p.axis_phase))
            u = _rot(op, angle(p.area)) @ u
        return u
    if space is None:
        raise ValueError("sdk sequences need a HilbertSpace")
    kern = KickKernel(space, eta)
    u = np.eye(space.dim, dtype=complex)
    for p in seq.pulses:
        u = kern.kick_exp(angle(p.area), p.axis_phase) @ u
    return u


@dataclass(frozen=True)
class ErrorSeries:
    """Numeric eps-expansion of a sequence propagator about eps = 0."""

    zeroth: np.ndarray
    first_coeff: float
    second_coeff: float
    first_signed: float


def _protected_generator(seq: SequenceSpec, space, eta) -> np.ndarray:
    if seq.kind == "single_body":
        return SIGMA_X.copy()
    if seq.kind == "two_body":
        return np.kron(SIGMA_X, SIGMA_X)
    return build_kick_operator(space, eta, 0.0)


def error_series(
    seq: SequenceSpec,
    space: HilbertSpace | None = None,
    eta: float = 0.0,
    h: float = 1e-4,
    absolute_noise: bool = False,
) -> ErrorSeries:
    """Extract the noise expansion by central differences at +/-h, +/-2h.

    first_coeff is the magnitude of the projection of i (dU/deps) U^dag at
    eps = 0 onto the protected-axis generator (normalized so a bare pulse
    of area a yields a).  The Richardson-extrapolated derivative is formed
    at steps h and 2h; if the two extrapolated estimates disagree beyond
    1e-6 the series is ill-conditioned and
    :class:`IllConditionedSeriesError` is raised.
    """
    def prop(e):
        return sequence_propagator(seq, e, space, eta, absolute_noise)

    u0 = prop(0.0)
    up, um = prop(h), prop(-h)
    up2, um2 = prop(2 * h), prop(-2 * h)
    up4, um4 = prop(4 * h), prop(-4 * h)
    du_rich = (8.0 * (up - um) - (up2 - um2)) / (12.0 * h)
    du_rich2 = (8.0 * (up2 - um2) - (up4 - um4)) / (24.0 * h)

    g = _protected_generator(seq, space, eta)
    gg = float(np.trace(g @ g).real)

    def project(du):
        m = 1j * du @ u0.conj().T
        return float(np.trace(g @ m).real) / gg

    c_rich = project(du_rich)
    c_check = project(du_rich2)
    if abs(c_rich - c_check) > 1e-6:
        raise IllConditionedSeriesError(
            f"extrapolation estimates disagree: {c_rich:.3e} vs {c_check:.3e}"
        )

    d2u = (16.0 * (up + um) - (up2 + um2) - 30.0 * u0) / (12.0 * h**2)
    om1 = du_rich @ u0.conj().T
    om2 = (d2u @ u0.conj().T - om1 @ om1) / 2.0
    c2 = float(np.trace(g @ (1j * om2)).real) / gg

    return ErrorSeries(u0, abs(c_rich), abs(c2), c_rich)


def calibrate_theta(kind: str, g_times_tau: float) -> float:
    """Composite phase cancelling the first-order noise of a bare pulse.

    Root-finds the signed first-order coefficient of the three-unitary
    sequence over theta in (0, pi); raises :class:`NoRootError` when the
    cancellation condition is unsatisfiable (empirically g*tau > 4 pi).
    """
    if kind not in ("single_body", "two_body"):
        raise ValueError(f"kind must be single_body or two_body, got {kind!r}")
    if not np.isfinite(g_times_tau) or g_times_tau < 0:
        raise ValueError(f"g_times_tau must be >= 0, got {g_times_tau}")
    builder = single_body_sequence if kind == "single_body" else two_body_sequence

    def signed(theta):
        return error_series(builder(g_times_tau, theta)).first_signed

    lo, hi = 1e-9, math.pi - 1e-12
    f_lo, f_hi = signed(lo), signed(hi)
    if f_lo * f_hi > 0:
        raise NoRootError(
            f"no root in window for g_times_tau={g_times_tau:.6g} "
            f"(endpoint values {f_lo:.3e}, {f_hi:.3e})"
        )
    theta = brentq(signed, lo, hi, xtol=1e-13, rtol=8.9e-16)
    if error_series(builder(g_times_tau, theta)).first_coeff > 1e-8:
        raise NoRootError("root found but residual first-order coefficient exceeds 1e-8")
    return float(theta)
