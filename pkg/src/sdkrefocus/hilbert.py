"""Truncated operators on (qubits x harmonic mode) spaces.

Everything downstream (pulse integrators, fidelity sweeps, kick algebra)
is built from the primitives here: a space descriptor, embedded qubit and
mode operators, the spin-dependent kick generator, and a matrix
exponential with a self-reported accuracy estimate.

Conventions (fixed package-wide):

* Tensor-factor ordering is little-endian ``ion1 (x) ion2 (x) mode``, so a
  basis state is indexed ``(q1*2 + q2)*fock_cutoff + n`` for two ions and
  ``q1*fock_cutoff + n`` for one.
* ``sigma_z = diag(+1, -1)`` on the qubit basis ``|0>, |1>``.
* The qubit flip used in kick operators is ``sigma_plus = |1><0|``,
  chosen so that conjugation by ``exp(-i phi/2 sigma_z)`` advances the
  kick phase: ``Rz(phi) A(theta) Rz(phi)^dag = A(theta + phi)``.
* The displacement factor ``exp(i eta (b^dag + b))`` is the exponential of
  the *truncated* Hermitian generator, hence exactly unitary on the
  truncated space.  The kick generator therefore squares exactly to the
  identity per ion; truncation artifacts live in the comparison between
  this operator and its untruncated counterpart near the Fock edge, which
  is why truncation-sensitive checks restrict to the safe subspace below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm as _scipy_expm

__all__ = [
    "HilbertSpace",
    "AccuracyError",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "SIGMA_PLUS",
    "build_kick_operator",
    "displacement_factor",
    "matrix_exponential",
    "embed",
    "is_hermitian",
    "is_unitary",
    "safe_fock_levels",
]

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
SIGMA_PLUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
_ID2 = np.eye(2, dtype=complex)


class AccuracyError(RuntimeError):
    """Raised when a numerical primitive cannot meet its accuracy target."""


@dataclass(frozen=True)
class HilbertSpace:
    """Descriptor of the composite qubit (x) Fock space.

    Parameters
    ----------
    n_ions : int
        Number of qubits, 1 or 2.
    fock_cutoff : int
        Number of Fock levels retained; total dimension is
        ``2**n_ions * fock_cutoff``.
    """

    n_ions: int
    fock_cutoff: int

    def __post_init__(self):
        if self.n_ions not in (1, 2):
            raise ValueError(f"n_ions must be 1 or 2, got {self.n_ions}")
        if not isinstance(self.fock_cutoff, int) or self.fock_cutoff < 1:
            raise ValueError(f"fock_cutoff must be a positive integer, got {self.fock_cutoff}")

    @property
    def qubit_dim(self) -> int:
        return 2**self.n_ions

    @property
    def dim(self) -> int:
        return self.qubit_dim * self.fock_cutoff

    def destroy(self) -> np.ndarray:
        """Mode annihilation operator b on the bare mode factor."""
        n = np.arange(self.fock_cutoff)
        return np.diag(np.sqrt(n[1:]), 1).astype(complex)

    def create(self) -> np.ndarray:
        return self.destroy().conj().T

    def number(self) -> np.ndarray:
        return np.diag(np.arange(self.fock_cutoff, dtype=float)).astype(complex)

    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    def eval_indices(self, n_eval: int) -> np.ndarray:
        """Basis indices of (all qubit states) x (Fock 0..n_eval-1)."""
        if not 1 <= n_eval <= self.fock_cutoff:
            raise ValueError(
                f"n_eval must be in [1, {self.fock_cutoff}], got {n_eval}"
            )
        cut = self.fock_cutoff
        return np.concatenate(
            [q * cut + np.arange(n_eval) for q in range(self.qubit_dim)]
        )


def is_hermitian(m: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.abs(m - m.conj().T).max() <= tol)


def is_unitary(m: np.ndarray, tol: float = 1e-10) -> bool:
    d = m.shape[0]
    return bool(np.abs(m.conj().T @ m - np.eye(d)).max() <= tol)


def safe_fock_levels(space: HilbertSpace, eta: float) -> int:
    """Number of low Fock levels unaffected by truncation edge damage.

    A displacement by ``eta`` leaks population upward by O(eta sqrt(n))
    per application, so checks against untruncated algebra exclude the
    top ``ceil(8 eta sqrt(cutoff))`` levels.
    """
    edge = math.ceil(8.0 * abs(eta) * math.sqrt(space.fock_cutoff))
    return max(space.fock_cutoff - edge, 0)


def embed(space: HilbertSpace, factor_operator: np.ndarray, which_factor) -> np.ndarray:
    """Lift an operator on one tensor factor to the full space.

    ``which_factor`` is ``"mode"`` or an ion index (1-based, or "ion1"/"ion2").
    The fixed ordering ion1 (x) ion2 (x) mode is respected.
    """
    op = np.asarray(factor_operator, dtype=complex)
    names = {"ion1": 1, "ion2": 2, "mode": "mode", 1: 1, 2: 2}
    if which_factor not in names:
        raise ValueError(f"unknown factor {which_factor!r}")
    which = names[which_factor]
    cut = space.fock_cutoff
    id_mode = np.eye(cut, dtype=complex)
    if which == "mode":
        if op.shape != (cut, cut):
            raise ValueError(f"mode operator must be {cut}x{cut}, got {op.shape}")
        out = op
        for _ in range(space.n_ions):
            out = np.kron(_ID2, out)
        return out
    if op.shape != (2, 2):
        raise ValueError(f"ion operator must be 2x2, got {op.shape}")
    if which > space.n_ions:
        raise ValueError(f"ion {which} absent in a {space.n_ions}-ion space")
    if space.n_ions == 1:
        return np.kron(op, id_mode)
    if which == 1:
        return np.kron(op, np.kron(_ID2, id_mode))
    return np.kron(_ID2, np.kron(op, id_mode))


def displacement_factor(space: HilbertSpace, eta: float) -> np.ndarray:
    """exp(i eta (b^dag + b)) on the bare mode factor, exactly unitary."""
    if not np.isfinite(eta):
        raise ValueError("eta must be finite")
    x = eta * (self_adjoint_position(space))
    lam, v = np.linalg.eigh(x)
    return (v * np.exp(1j * lam)) @ v.conj().T


def self_adjoint_position(space: HilbertSpace) -> np.ndarray:
    """(b^dag + b) on the bare mode factor."""
    b = space.destroy()
    return b + b.conj().T


def build_kick_operator(space: HilbertSpace, eta: float, phase: float) -> np.ndarray:
    """Kick generator A(phase) = sum_i sigma+_i e^{i phase} e^{i eta (b^dag+b)} + h.c.

    Hermitian by construction; each ion's term squares exactly to the
    identity because the displacement factor is unitary on the truncated
    space.
    """
    if not (np.isfinite(eta) and np.isfinite(phase)):
        raise ValueError("eta and phase must be finite")
    if eta != 0.0 and space.fock_cutoff < 2:
        raise ValueError("fock_cutoff >= 2 required for a displacing kick (eta != 0)")
    d = displacement_factor(space, eta)
    term = np.exp(1j * phase) * np.kron(SIGMA_PLUS, d)
    if space.n_ions == 1:
        return term + term.conj().T
    t1 = np.exp(1j * phase) * np.kron(SIGMA_PLUS, np.kron(_ID2, d))
    t2 = np.exp(1j * phase) * np.kron(_ID2, np.kron(SIGMA_PLUS, d))
    return t1 + t1.conj().T + t2 + t2.conj().T


def matrix_exponential(m: np.ndarray, scale: complex, tol: float = 1e-11) -> np.ndarray:
    """exp(scale * m) with an internal accuracy self-check.

    Anti-Hermitian exponents (the ubiquitous exp(-i H t) case) go through
    a Hermitian eigendecomposition, which preserves unitarity to rounding;
    everything else falls back to scaling-and-squaring.  In both cases the
    result is verified against the square of the half-exponent and an
    :class:`AccuracyError` is raised if the relative discrepancy exceeds
    ``tol``.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"square matrix required, got shape {m.shape}")
    if not np.all(np.isfinite(m)) or not np.isfinite(scale):
        raise ValueError("non-finite input")
    s = scale * m
    anti = np.abs(s + s.conj().T).max()
    norm = max(np.abs(s).max(), 1.0)
    if anti <= 1e-13 * norm:
        h = (1j * s + (1j * s).conj().T) / 2.0  # hermitize i*s
        lam, v = np.linalg.eigh(h)
        out = (v * np.exp(-1j * lam)) @ v.conj().T
        half = (v * np.exp(-0.5j * lam)) @ v.conj().T
    else:
        out = _scipy_expm(s)
        half = _scipy_expm(s / 2.0)
    est = np.abs(half @ half - out).max() / max(np.abs(out).max(), 1.0)
    if est > tol:
        raise AccuracyError(
            f"matrix exponential accuracy estimate {est:.2e} exceeds tol {tol:.2e}"
        )
    return out
