"""Editing by condition interpolation, plus the DDIM-Edit and latent-blend baselines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoiser import DenoiserModel, embed
from .inversion import PtiConfig, PtiResult, prompt_tuning_inversion
from .sampler import decode, encode, guided_step, invert_trajectory, sample_trajectory
from .schedule import DdimSteps, NoiseSchedule


@dataclass
class EditConfig:
    eta: float = 0.9
    omega: float = 7.5
    target_class: int = 1
    pti: PtiConfig = field(default_factory=PtiConfig)

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"interpolation ratio eta must lie in [0, 1], got {self.eta}")


def interpolate_condition(c_t, c_star, eta: float) -> np.ndarray:
    c_t = np.asarray(c_t, dtype=np.float64)
    c_star = np.asarray(c_star, dtype=np.float64)
    if c_t.shape[-1] != c_star.shape[-1]:
        raise ValueError("embedding dimensions differ")
    return eta * c_star + (1.0 - eta) * c_t


def edit_from_pti(result: PtiResult, c_star, eta: float, omega: float, steps: DdimSteps, sched: NoiseSchedule, model: DenoiserModel) -> np.ndarray:
    """Second stage: sample from the inverted latent with interpolated conditions."""
    conds = [interpolate_condition(c_t, c_star, eta) for c_t in result.cond_schedule]
    out = sample_trajectory(result.trajectory.final, conds, omega, steps, sched, model)
    return decode(out.final)


def edit_with_pti(x_in, cfg: EditConfig, steps: DdimSteps, sched: NoiseSchedule, model: DenoiserModel) -> np.ndarray:
    """Prompt-tuning inversion toward the target embedding, then interpolated sampling."""
    c_star = embed(model, cfg.target_class)
    result = prompt_tuning_inversion(encode(x_in), c_star, cfg.pti, steps, sched, model)
    return edit_from_pti(result, c_star, cfg.eta, cfg.omega, steps, sched, model)


def edit_ddim(x_in, target_class: int, omega: float, steps: DdimSteps, sched: NoiseSchedule, model: DenoiserModel) -> np.ndarray:
    """Unguided inversion followed by sampling with the target embedding at ``omega``."""
    c_star = embed(model, target_class)
    traj = invert_trajectory(encode(x_in), c_star, 0.0, steps, sched, model)
    out = sample_trajectory(traj.final, [c_star] * steps.start_index, omega, steps, sched, model)
    return decode(out.final)


def edit_latent_interp(x_in, target_class: int, eta: float, omega: float, steps: DdimSteps, sched: NoiseSchedule, model: DenoiserModel) -> np.ndarray:
    """Target-conditioned sampling whose latent is pulled toward the inversion
    trajectory after every step: ``eta * z + (1 - eta) * z_inv``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    c_star = embed(model, target_class)
    traj = invert_trajectory(encode(x_in), c_star, 0.0, steps, sched, model)
    z = traj.final
    for t, t_prev in steps.sampling_pairs():
        z_s = guided_step(model, z, t, t_prev, c_star, omega, sched)
        z = eta * z_s + (1.0 - eta) * traj.at(t_prev)
    return decode(z)
