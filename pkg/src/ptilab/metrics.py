"""Reconstruction metrics and the editability/fidelity sweep.

Fidelity is the L2 distance to the input and alignment is the exact
negative log-density under the target mixture component; lower is better
for both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import MixtureSpec, component_nll
from .denoiser import embed
from .editor import EditConfig, edit_from_pti
from .inversion import prompt_tuning_inversion

DEFAULT_MAX_VAL = 2.0


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr_from_mse(err: float, max_val: float = DEFAULT_MAX_VAL) -> float:
    if not max_val > 0:
        raise ValueError("max_val must be positive")
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val**2 / err)


def psnr(a, b, max_val: float = DEFAULT_MAX_VAL) -> float:
    return psnr_from_mse(mse(a, b), max_val)


def ssim(a, b, L: float = 2.0) -> float:
    """Global single-window SSIM of two 8x8 images (flat or square)."""
    a, b = _pair(a, b)
    if a.shape not in ((64,), (8, 8)):
        raise ValueError(f"ssim expects an 8x8 image, got shape {a.shape}")
    c1 = (0.01 * L) ** 2
    c2 = (0.03 * L) ** 2
    mu_a, mu_b = a.mean(), b.mean()
    var_a, var_b = a.var(), b.var()
    cov = ((a - mu_a) * (b - mu_b)).mean()
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(num / den)


@dataclass
class TradeoffPoint:
    eta: float
    alignment: float
    fidelity: float
    n: int
    method: str = "pti"


def tradeoff_point(spec: MixtureSpec, x_in, x_edit, target_class: int, eta: float, method: str = "pti") -> TradeoffPoint:
    x_in, x_edit = _pair(x_in, x_edit)
    x_in, x_edit = np.atleast_2d(x_in), np.atleast_2d(x_edit)
    align = float(np.mean(component_nll(spec, x_edit, target_class)))
    fid = float(np.mean(np.sqrt(((x_edit - x_in) ** 2).sum(-1))))
    if not (math.isfinite(align) and math.isfinite(fid)):
        raise FloatingPointError(f"non-finite trade-off metrics at eta={eta}")
    return TradeoffPoint(eta, align, fid, x_in.shape[0], method)


def tradeoff_sweep(inputs, etas, cfg: EditConfig, steps, sched, model, spec: MixtureSpec) -> list[TradeoffPoint]:
    """Condition-interpolation edits of every input at every ``eta``.

    The prompt-tuning stage does not depend on ``eta`` so it runs once.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    etas = list(etas)
    if inputs.shape[0] == 0 or not etas:
        raise ValueError("inputs and etas must be non-empty")
    c_star = embed(model, cfg.target_class)
    stage1 = prompt_tuning_inversion(inputs, c_star, cfg.pti, steps, sched, model)
    points = []
    for eta in sorted(etas):
        x_edit = edit_from_pti(stage1, c_star, eta, cfg.omega, steps, sched, model)
        points.append(tradeoff_point(spec, inputs, x_edit, cfg.target_class, eta))
    return points
