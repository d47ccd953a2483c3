"""Process fidelity on the low-Fock evaluation subspace.

F = |Tr(P U_eff^dag U_sim P)| / Tr(P) with P projecting onto all qubit
states tensored with the lowest ``eval_fock_levels`` Fock states.  The
modulus quotients out the global phase (per-ion kicks carry physically
irrelevant -i factors); the raw unnormalized trace would exceed one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ._kickstep import KickKernel
from .hilbert import HilbertSpace

__all__ = ["FidelityReport", "process_fidelity", "target_sdk"]

#: Default evaluation subspace and cutoff used by the figure experiments.
DEFAULT_EVAL_FOCK_LEVELS = 7
DEFAULT_FOCK_CUTOFF = 30


@dataclass(frozen=True)
class FidelityReport:
    fidelity: float
    infidelity: float
    eval_fock_levels: int
    parameters: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.fidelity > 1.0 + 1e-12:
            raise ValueError(f"fidelity {self.fidelity} exceeds 1 beyond tolerance")


def process_fidelity(
    u_sim: np.ndarray,
    u_eff: np.ndarray,
    space: HilbertSpace,
    eval_fock_levels: int = DEFAULT_EVAL_FOCK_LEVELS,
    parameters: dict[str, Any] | None = None,
) -> FidelityReport:
    """Global-phase-invariant overlap of two propagators on the evaluation subspace."""
    u_sim = np.asarray(u_sim)
    u_eff = np.asarray(u_eff)
    if u_sim.shape != u_eff.shape or u_sim.shape != (space.dim, space.dim):
        raise ValueError(
            f"dimension mismatch: {u_sim.shape} vs {u_eff.shape} on dim {space.dim}"
        )
    if eval_fock_levels > space.fock_cutoff:
        raise ValueError(
            f"eval subspace ({eval_fock_levels}) larger than cutoff ({space.fock_cutoff})"
        )
    idx = space.eval_indices(eval_fock_levels)
    sub = u_eff[:, idx].conj().T @ u_sim[:, idx]
    f = float(np.abs(np.trace(sub)) / idx.size)
    f = min(f, 1.0)
    return FidelityReport(f, 1.0 - f, eval_fock_levels, dict(parameters or {}))


def target_sdk(space: HilbertSpace, eta_eff: float, phase_eff: float) -> np.ndarray:
    """Ideal-kick family member exp(-i (pi/2) A(phase_eff)) at eta_eff.

    The two-parameter family over which displacement adjustment optimizes;
    (eta, 0) is the nominal spin-dependent kick.
    """
    return KickKernel(space, eta_eff).kick_exp(np.pi / 2, phase_eff)
