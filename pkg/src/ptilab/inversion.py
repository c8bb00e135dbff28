"""Reconstruction by plain DDIM, null-text inversion and prompt tuning inversion.

Both optimisation methods walk the sampling direction once. At each step a
per-input embedding is refined by ``N`` plain gradient-descent updates so that
the guided DDIM step from the current latent lands on the recorded inversion
latent, then the latent advances with the refined embedding and the
embedding warm-starts the next step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoiser import NULL, DenoiserModel, embed, eps_forward, grad_wrt_embedding
from .sampler import (
    Trajectory,
    cfg_eps_parts,
    ddim_step,
    invert_trajectory,
    sample_trajectory,
    step_coefficients,
)
from .schedule import DdimSteps, NoiseSchedule


@dataclass
class PtiConfig:
    omega: float = 7.5
    beta: float = 0.1
    N: int = 1

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("learning rate beta must be non-negative")
        if self.N < 1:
            raise ValueError(f"iterations per step N must be >= 1, got {self.N}")


@dataclass
class PtiResult:
    """Optimised per-step embeddings (sampling order) and the reconstruction.

    ``cond_schedule`` holds the conditional embeddings for prompt tuning and
    the null embeddings for null-text inversion. ``loss_trace[i]`` has the
    ``N + 1`` per-input losses seen at step ``i`` (before each update, then
    after the last one); ``per_step_loss[i]`` is its final entry.
    """

    cond_schedule: list[np.ndarray]
    recon: np.ndarray
    per_step_loss: list[np.ndarray]
    trajectory: Trajectory
    loss_trace: list[np.ndarray] = field(default_factory=list)
    method: str = "pti"


def step_objective(model, z, t, t_prev, target, c, null, omega, sched, wrt="cond"):
    """Per-input loss ``|target - step(z, c)|^2`` and its gradient.

    ``wrt`` selects the embedding being optimised: ``"cond"`` (prompt tuning)
    or ``"null"`` (null-text inversion). The gradient flows through the
    guidance mix and both DDIM step coefficients. Returns
    ``(z_prev, loss, grad)``.
    """
    eps, cache_c, cache_u = cfg_eps_parts(model, z, t, c, omega, null)
    z_prev = ddim_step(z, t, t_prev, eps, sched)
    resid = target - z_prev
    loss = (resid**2).sum(-1)
    _, b = step_coefficients(t, t_prev, sched)
    d_eps = -2.0 * b * resid
    if wrt == "cond":
        grad = np.zeros_like(np.atleast_2d(c)) if cache_c is None else grad_wrt_embedding(model, cache_c, omega * d_eps)
    elif wrt == "null":
        grad = np.zeros_like(np.atleast_2d(null)) if cache_u is None else grad_wrt_embedding(model, cache_u, (1.0 - omega) * d_eps)
    else:
        raise ValueError(f"unknown embedding {wrt!r}")
    return z_prev, loss, grad.reshape(np.shape(c) if wrt == "cond" else np.shape(null))


def _tile(vec, z):
    z = np.asarray(z)
    vec = np.asarray(vec, dtype=np.float64)
    if z.ndim == 2 and vec.ndim == 1:
        return np.tile(vec, (z.shape[0], 1))
    return vec.copy()


def _tune(z0, c_fixed, emb_init, cfg: PtiConfig, steps, sched, model, wrt) -> PtiResult:
    traj = invert_trajectory(z0, c_fixed, 0.0, steps, sched, model)
    z = traj.final
    emb = _tile(emb_init, z)
    if wrt == "cond":
        null = embed(model, NULL)
    else:
        null, c_fixed = emb, _tile(c_fixed, z)
    sched_out, losses, traces = [], [], []
    for t, t_prev in steps.sampling_pairs():
        target = traj.at(t_prev)
        trace = []
        for _ in range(cfg.N):
            args = (emb, null) if wrt == "cond" else (c_fixed, emb)
            _, loss, grad = step_objective(model, z, t, t_prev, target, *args, cfg.omega, sched, wrt)
            trace.append(loss)
            emb = emb - cfg.beta * grad
            if not np.all(np.isfinite(emb)):
                raise FloatingPointError(f"non-finite embedding update at timestep t={t}")
        c_use, null_use = (emb, null) if wrt == "cond" else (c_fixed, emb)
        eps, _, _ = cfg_eps_parts(model, z, t, c_use, cfg.omega, null_use)
        z_new = ddim_step(z, t, t_prev, eps, sched)
        final = ((target - z_new) ** 2).sum(-1)
        if not (np.all(np.isfinite(z_new)) and np.all(np.isfinite(final))):
            raise FloatingPointError(f"non-finite loss or latent at timestep t={t}")
        trace.append(final)
        traces.append(np.array(trace))
        losses.append(final)
        sched_out.append(emb.copy())
        z = z_new
    return PtiResult(sched_out, z, losses, traj, traces, wrt == "cond" and "pti" or "nti")


def prompt_tuning_inversion(z0, c_init, cfg: PtiConfig, steps: DdimSteps, sched: NoiseSchedule, model: DenoiserModel) -> PtiResult:
    """Optimise the conditional embedding per step, starting from ``c_init``."""
    return _tune(z0, c_init, c_init, cfg, steps, sched, model, "cond")


def null_text_inversion(z0, c_fixed, null_init, cfg: PtiConfig, steps: DdimSteps, sched: NoiseSchedule, model: DenoiserModel) -> PtiResult:
    """Same loop as prompt tuning but optimising the null embedding; ``c_fixed`` stays put."""
    if null_init is None:
        null_init = embed(model, NULL)
    return _tune(z0, c_fixed, null_init, cfg, steps, sched, model, "null")


def reconstruct_with(result: PtiResult, c_fixed, omega: float, steps, sched, model) -> np.ndarray:
    """Replay a tuned embedding schedule from the inverted latent."""
    z_start = result.trajectory.final
    if result.method == "pti":
        return sample_trajectory(z_start, result.cond_schedule, omega, steps, sched, model).final
    # null-text schedules replace the null row instead of the condition
    z = z_start
    for (t, t_prev), null in zip(steps.sampling_pairs(), result.cond_schedule):
        eps, _, _ = cfg_eps_parts(model, z, t, c_fixed, omega, null)
        z = ddim_step(z, t, t_prev, eps, sched)
    return z


def ddim_reconstruct(z0, c, omega_enc: float, omega_dec: float, steps: DdimSteps, sched: NoiseSchedule, model: DenoiserModel) -> np.ndarray:
    """Invert at ``omega_enc`` and sample back at ``omega_dec`` with constant ``c``."""
    traj = invert_trajectory(z0, c, omega_enc, steps, sched, model)
    out = sample_trajectory(traj.final, [c] * steps.start_index, omega_dec, steps, sched, model)
    return out.final
