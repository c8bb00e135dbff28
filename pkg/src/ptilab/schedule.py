"""Noise schedule, DDIM timestep subsequence and closed-form forward noising.

Arrays are indexed by integer time with ``alpha_bars[0] == 1`` so that the
last sampling step lands on the clean-data scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    T_train: int
    beta_start: float
    beta_end: float
    betas: np.ndarray  # length T_train + 1, betas[0] = 0
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def sqrt_ab(self, t) -> np.ndarray:
        return np.sqrt(self.alpha_bars[t])

    def params(self) -> dict:
        return {"T_train": self.T_train, "beta_start": self.beta_start, "beta_end": self.beta_end}


def make_linear_schedule(T_train: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if not (isinstance(T_train, (int, np.integer)) and T_train >= 1):
        raise ValueError(f"T_train must be a positive integer, got {T_train!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    betas = np.zeros(T_train + 1)
    betas[1:] = np.linspace(beta_start, beta_end, T_train) if T_train > 1 else [beta_start]
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    for arr in (betas, alphas, alpha_bars):
        arr.flags.writeable = False
    return NoiseSchedule(int(T_train), float(beta_start), float(beta_end), betas, alphas, alpha_bars)


@dataclass(frozen=True)
class DdimSteps:
    """DDIM subsequence ``taus`` (with ``taus[0] == 0`` prepended).

    Inversion walks ``taus[0] -> taus[start_index]``; sampling walks back.
    """

    S: int
    ratio: float
    taus: tuple[int, ...]
    start_index: int

    @property
    def start_t(self) -> int:
        return self.taus[self.start_index]

    def inversion_pairs(self) -> list[tuple[int, int]]:
        return [(self.taus[i - 1], self.taus[i]) for i in range(1, self.start_index + 1)]

    def sampling_pairs(self) -> list[tuple[int, int]]:
        return [(self.taus[i], self.taus[i - 1]) for i in range(self.start_index, 0, -1)]


def ddim_timesteps(T_train: int, S: int, r: float) -> DdimSteps:
    if not (1 <= S <= T_train):
        raise ValueError(f"need 1 <= S <= T_train, got S={S}, T_train={T_train}")
    if not (0.0 < r <= 1.0):
        raise ValueError(f"encoding ratio must lie in (0, 1], got {r}")
    taus = (0,) + tuple((i * T_train) // S for i in range(1, S + 1))
    # Round off float noise so e.g. 0.8 * 50 gives 40, not 41.
    start = math.ceil(round(r * S, 9))
    return DdimSteps(S, float(r), taus, start)


def q_sample(x0, t: int, eps, sched: NoiseSchedule) -> np.ndarray:
    """Noised sample ``sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps``; ``t`` may be an array."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape[-1] != eps.shape[-1]:
        raise ValueError("x0 and eps dimensions differ")
    ab = sched.alpha_bars[np.asarray(t)]
    if np.ndim(ab):
        ab = ab[..., None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
