"""Deterministic DDIM stepping in both directions with classifier-free guidance.

All formulas use the cumulative products ``alpha_bars``. Latents may be a
single vector ``(d,)`` or a batch ``(B, d)``; conditions broadcast likewise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoiser import NULL, DenoiserModel, embed, eps_forward
from .schedule import DdimSteps, NoiseSchedule


def encode(x):
    return x


def decode(z):
    return z


@dataclass
class Trajectory:
    """Latents in visiting order; ``ts[i]`` is the time of ``latents[i]``."""

    ts: list[int]
    latents: list[np.ndarray]
    direction: str  # "forward" (inversion) or "reverse" (sampling)

    def __len__(self):
        return len(self.latents)

    @property
    def final(self) -> np.ndarray:
        return self.latents[-1]

    def at(self, t: int) -> np.ndarray:
        return self.latents[self.ts.index(t)]


def cfg_eps_parts(model: DenoiserModel, z, t, c, omega: float, null=None):
    """Guided prediction plus the two forward caches (``None`` when skipped).

    ``omega == 0`` returns the unconditional prediction and ``omega == 1`` the
    conditional one without mixing, so those cases are exact.
    """
    if null is None:
        null = embed(model, NULL)
    if omega == 1.0:
        e_c, cache_c = eps_forward(model, z, t, c)
        return e_c, cache_c, None
    e_u, cache_u = eps_forward(model, z, t, null)
    if omega == 0.0:
        return e_u, None, cache_u
    e_c, cache_c = eps_forward(model, z, t, c)
    return e_u + omega * (e_c - e_u), cache_c, cache_u


def cfg_eps(model: DenoiserModel, z, t, c, omega: float, null=None) -> np.ndarray:
    return cfg_eps_parts(model, z, t, c, omega, null)[0]


def predict_x0(z_t, t: int, eps_tilde, sched: NoiseSchedule) -> np.ndarray:
    ab = sched.alpha_bars[t]
    return (np.asarray(z_t) - np.sqrt(1.0 - ab) * np.asarray(eps_tilde)) / np.sqrt(ab)


def _move(z_t, t: int, t_to: int, eps, sched: NoiseSchedule) -> np.ndarray:
    ab_to = sched.alpha_bars[t_to]
    return np.sqrt(ab_to) * predict_x0(z_t, t, eps, sched) + np.sqrt(1.0 - ab_to) * np.asarray(eps)


def ddim_step(z_t, t: int, t_prev: int, eps_tilde, sched: NoiseSchedule) -> np.ndarray:
    """One deterministic sampling step from ``t`` down to ``t_prev``."""
    if not t_prev < t:
        raise ValueError(f"sampling step needs t_prev < t, got {t_prev} >= {t}")
    return _move(z_t, t, t_prev, eps_tilde, sched)


def ddim_invert_step(z_t, t: int, t_next: int, eps, sched: NoiseSchedule) -> np.ndarray:
    """One inversion step from ``t`` up to ``t_next``, noise evaluated at ``(z_t, t)``."""
    if not t_next > t:
        raise ValueError(f"inversion step needs t_next > t, got {t_next} <= {t}")
    return _move(z_t, t, t_next, eps, sched)


def step_coefficients(t: int, t_prev: int, sched: NoiseSchedule) -> tuple[float, float]:
    """``(a, b)`` with ``ddim_step(z, t, t_prev, e) == a*z + b*e`` up to rounding."""
    ab_t = sched.alpha_bars[t]
    ab_p = sched.alpha_bars[t_prev]
    a = np.sqrt(ab_p / ab_t)
    b = np.sqrt(1.0 - ab_p) - np.sqrt(ab_p) * np.sqrt(1.0 - ab_t) / np.sqrt(ab_t)
    return float(a), float(b)


def guided_step(model, z, t, t_prev, c, omega, sched, null=None):
    """Sampling step under guidance; shared by every sampling loop so that
    equivalent pipelines produce bit-identical latents."""
    eps = cfg_eps(model, z, t, c, omega, null)
    return ddim_step(z, t, t_prev, eps, sched)


def _check_finite(z, t):
    if not np.all(np.isfinite(z)):
        raise FloatingPointError(f"non-finite latent at t={t}")


def invert_trajectory(z0, c, omega: float, steps: DdimSteps, sched: NoiseSchedule, model: DenoiserModel) -> Trajectory:
    """DDIM inversion from ``t=0`` up to ``steps.start_t``, recording every latent."""
    z = np.asarray(z0, dtype=np.float64)
    ts, zs = [0], [z]
    null = embed(model, NULL)
    for t, t_next in steps.inversion_pairs():
        eps = cfg_eps(model, z, t, c, omega, null)
        z = ddim_invert_step(z, t, t_next, eps, sched)
        _check_finite(z, t_next)
        ts.append(t_next)
        zs.append(z)
    return Trajectory(ts, zs, "forward")


def sample_trajectory(zT, conditions, omega: float, steps: DdimSteps, sched: NoiseSchedule, model: DenoiserModel) -> Trajectory:
    """DDIM sampling from ``steps.start_t`` to 0; ``conditions[i]`` drives the i-th step."""
    pairs = steps.sampling_pairs()
    if len(conditions) != len(pairs):
        raise ValueError(f"expected {len(pairs)} conditions, got {len(conditions)}")
    z = np.asarray(zT, dtype=np.float64)
    ts, zs = [steps.start_t], [z]
    null = embed(model, NULL)
    for (t, t_prev), c in zip(pairs, conditions):
        z = guided_step(model, z, t, t_prev, c, omega, sched, null)
        _check_finite(z, t_prev)
        ts.append(t_prev)
        zs.append(z)
    return Trajectory(ts, zs, "reverse")
