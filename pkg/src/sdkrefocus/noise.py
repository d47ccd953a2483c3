"""Shot-to-shot amplitude noise: one epsilon per laser shot.

Every pulse derived from a shot (all five composite pulses, or all 2^N
comb pulses) shares that shot's epsilon; correlation across shots is zero.
This is enforced structurally by the consumers, which apply a single
sampled value to a whole sequence or train.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["NoiseModel", "sample_shots"]

_KINDS = ("deterministic_sweep", "gaussian_mc", "uniform_mc")


@dataclass(frozen=True)
class NoiseModel:
    kind: str
    magnitude: float
    n_samples: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if not np.isfinite(self.magnitude) or self.magnitude < 0:
            raise ValueError(f"magnitude must be >= 0, got {self.magnitude}")
        if self.kind != "deterministic_sweep" and self.n_samples < 1:
            raise ValueError("n_samples must be >= 1 for Monte-Carlo kinds")


def sample_shots(model: NoiseModel) -> np.ndarray:
    """Fractional area errors, one per shot; reproducible from the seed."""
    if model.kind == "deterministic_sweep":
        return np.array([model.magnitude])
    rng = np.random.default_rng(model.seed)
    if model.kind == "gaussian_mc":
        return rng.normal(0.0, model.magnitude, model.n_samples)
    return rng.uniform(-model.magnitude, model.magnitude, model.n_samples)
