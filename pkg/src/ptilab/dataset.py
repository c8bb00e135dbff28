"""Synthetic class-conditional data with known densities.

Two generators: an isotropic Gaussian mixture (default: four classes on the
unit circle) and 8x8 binary shape images with {-1, +1} pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngState, gaussian


def circle_means(K: int, radius: float = 1.0) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(K) / K
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


@dataclass
class MixtureSpec:
    K: int = 4
    d: int = 2
    sigma: float = 0.15
    means: np.ndarray = field(default_factory=lambda: circle_means(4))

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        if self.K < 2:
            raise ValueError("mixture needs at least two classes")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.means.shape != (self.K, self.d):
            raise ValueError(f"means must have shape ({self.K}, {self.d}), got {self.means.shape}")
        diff = self.means[:, None, :] - self.means[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))[~np.eye(self.K, dtype=bool)]
        if dist.min() <= 4.0 * self.sigma:
            raise ValueError("class means must be more than 4 sigma apart")


def sample_mixture(spec: MixtureSpec, n: int, rng: RngState) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` labelled points; returns ``(X, labels)`` with ``X`` shaped (n, d)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    labels = rng.integers(spec.K, n)
    noise = gaussian(rng, n * spec.d).reshape(n, spec.d)
    return spec.means[labels] + spec.sigma * noise, labels


def sample_class(spec: MixtureSpec, k: int, n: int, rng: RngState) -> np.ndarray:
    """``n`` points from component ``k`` only."""
    if not 0 <= k < spec.K:
        raise ValueError(f"class id {k} outside [0, {spec.K})")
    return spec.means[k] + spec.sigma * gaussian(rng, n * spec.d).reshape(n, spec.d)


def component_nll(spec: MixtureSpec, x, k: int) -> np.ndarray:
    """Negative log-density of ``x`` under class ``k``. Works row-wise on batches."""
    if not 0 <= k < spec.K:
        raise ValueError(f"class id {k} outside [0, {spec.K})")
    x = np.asarray(x, dtype=np.float64)
    sq = ((x - spec.means[k]) ** 2).sum(-1)
    return 0.5 * spec.d * math.log(2.0 * math.pi * spec.sigma**2) + sq / (2.0 * spec.sigma**2)


# 5x5 templates placed with their top-left corner at (1, 1) + jitter.
SHAPE_NAMES = ("square", "circle", "cross", "triangle")
_TEMPLATES = {
    "square": ["11111", "10001", "10001", "10001", "11111"],
    "circle": ["01110", "11111", "11111", "11111", "01110"],
    "cross": ["00100", "00100", "11111", "00100", "00100"],
    "triangle": ["00100", "00100", "01110", "01110", "11111"],
}
_TEMPLATE_SIZE = 5
_BASE_OFFSET = 1


@dataclass(frozen=True)
class ShapeSpec:
    grid: int = 8
    jitter: int = 1

    @property
    def K(self) -> int:
        return len(SHAPE_NAMES)

    @property
    def d(self) -> int:
        return self.grid * self.grid

    def __post_init__(self):
        if self.grid != 8:
            raise ValueError("only the 8x8 grid is supported")
        if not 0 <= self.jitter <= _BASE_OFFSET:
            raise ValueError(f"jitter must lie in [0, {_BASE_OFFSET}] to keep shapes on the grid")


def shape_mask(cls: int, dy: int = 0, dx: int = 0, grid: int = 8) -> np.ndarray:
    """Binary mask of shape ``cls`` translated by ``(dy, dx)``."""
    if not 0 <= cls < len(SHAPE_NAMES):
        raise ValueError(f"unknown shape class {cls}")
    tpl = np.array([[int(ch) for ch in row] for row in _TEMPLATES[SHAPE_NAMES[cls]]])
    top, left = _BASE_OFFSET + dy, _BASE_OFFSET + dx
    if top < 0 or left < 0 or top + _TEMPLATE_SIZE > grid or left + _TEMPLATE_SIZE > grid:
        raise ValueError("shape does not fit on the grid")
    mask = np.zeros((grid, grid), dtype=np.int64)
    mask[top : top + _TEMPLATE_SIZE, left : left + _TEMPLATE_SIZE] = tpl
    return mask


def render_shape(spec: ShapeSpec, cls: int, rng: RngState) -> np.ndarray:
    """64-dim {-1, +1} image of ``cls`` with a uniform jitter offset per axis."""
    span = 2 * spec.jitter + 1
    dy, dx = (int(v) - spec.jitter for v in rng.integers(span, 2))
    return 2.0 * shape_mask(cls, dy, dx, spec.grid).reshape(-1) - 1.0


def sample_shapes(spec: ShapeSpec, n: int, rng: RngState) -> tuple[np.ndarray, np.ndarray]:
    if n < 1:
        raise ValueError("n must be >= 1")
    labels = rng.integers(spec.K, n)
    X = np.stack([render_shape(spec, int(k), rng) for k in labels])
    return X, labels
