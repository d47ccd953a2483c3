"""Internal fast kernels for kick-type propagators.

The kick generator A = sum_i (sigma+_i G + h.c.) with a shared mode factor
G has closed-form exponentials: per ion, exp(-i [[0, G^dag], [G, 0]]) is
obtained from the SVD of G, and the per-ion factors commute because both
ions couple to the same mode operator.  When G is angle * e^{i phase} *
(unitary displacement), the SVD collapses to cos/sin of the angle.

These kernels keep the integrators free of generic dense expm calls in
their inner loops.  Not part of the public API.
"""

from __future__ import annotations

import numpy as np

from .hilbert import HilbertSpace, displacement_factor


class KickKernel:
    """Cached closed-form exponentials of kick generators on one space.

    The displacement exp(i eta (b^dag+b)) is computed once; a trap-frame
    rotation by angle ``frame`` conjugates it with Fock-diagonal phases
    exp(i frame n), realizing exp(i eta (b^dag e^{i frame} + b e^{-i frame})).
    """

    def __init__(self, space: HilbertSpace, eta: float):
        self.space = space
        self.eta = eta
        self.cut = space.fock_cutoff
        self.dim = space.dim
        self._d0 = displacement_factor(space, eta)
        self._n = np.arange(self.cut)

    def mode_factor(self, frame: float = 0.0) -> np.ndarray:
        if frame == 0.0:
            return self._d0
        r = np.exp(1j * frame * self._n)
        return (r[:, None] * self._d0) * r.conj()[None, :]

    def kick_exp(self, angle: float, phase: float, frame: float = 0.0) -> np.ndarray:
        """exp(-i angle A(phase)) with the displacement rotated by ``frame``."""
        d = self.mode_factor(frame)
        c, s = np.cos(angle), np.sin(angle)
        lo = -1j * s * np.exp(1j * phase) * d
        hi = -1j * s * np.exp(-1j * phase) * d.conj().T
        return self._assemble(c * np.eye(self.cut, dtype=complex), lo, hi,
                              c * np.eye(self.cut, dtype=complex))

    def flip_block_exp(self, g: np.ndarray) -> np.ndarray:
        """exp(-i sum_i (sigma+_i (x) g + h.c.)) for an arbitrary mode block g."""
        w, sig, vh = np.linalg.svd(g)
        v = vh.conj().T
        cs = np.cos(sig)
        sn = np.sin(sig)
        b00 = (v * cs) @ v.conj().T
        b11 = (w * cs) @ w.conj().T
        b10 = -1j * (w * sn) @ v.conj().T
        b01 = -1j * (v * sn) @ w.conj().T
        return self._assemble(b00, b10, b01, b11)

    def _assemble(self, b00, b10, b01, b11) -> np.ndarray:
        """Product over ions of per-ion block unitaries [[b00, b01], [b10, b11]].

        Blocks are indexed (target qubit value, source qubit value) on the
        mode factor; per-ion factors commute (same mode operator).
        """
        cut = self.cut
        if self.space.n_ions == 1:
            u = np.empty((2 * cut, 2 * cut), dtype=complex)
            u[:cut, :cut] = b00
            u[:cut, cut:] = b01
            u[cut:, :cut] = b10
            u[cut:, cut:] = b11
            return u
        u1 = np.zeros((4 * cut, 4 * cut), dtype=complex)
        u2 = np.zeros((4 * cut, 4 * cut), dtype=complex)
        for q in range(2):  # spectator qubit value
            # ion 1 acts on the leading qubit: stride 2*cut
            o = q * cut
            u1[o:o + cut, o:o + cut] = b00
            u1[o:o + cut, 2 * cut + o:2 * cut + o + cut] = b01
            u1[2 * cut + o:2 * cut + o + cut, o:o + cut] = b10
            u1[2 * cut + o:2 * cut + o + cut, 2 * cut + o:2 * cut + o + cut] = b11
            # ion 2 acts on the trailing qubit: stride cut
            o = q * 2 * cut
            u2[o:o + cut, o:o + cut] = b00
            u2[o:o + cut, o + cut:o + 2 * cut] = b01
            u2[o + cut:o + 2 * cut, o:o + cut] = b10
            u2[o + cut:o + 2 * cut, o + cut:o + 2 * cut] = b11
        return u1 @ u2
