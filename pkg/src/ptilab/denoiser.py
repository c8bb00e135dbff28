"""Toy conditional noise predictor eps(z, t, c) with hand-written gradients.

Architecture is fixed: ``concat(z, time_features(t), c) -> h -> h -> d`` with
SiLU on the two hidden layers. The class-embedding table stands in for a
text encoder; row 0 is the null (unconditional) embedding.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngState, gaussian
from .schedule import NoiseSchedule

log = logging.getLogger(__name__)

TIME_DIM = 32
_FREQS = np.geomspace(1.0, 1e4, TIME_DIM // 2)
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "embed_table")


class TrainingDivergedError(FloatingPointError):
    pass


def time_features(t, T_train: int) -> np.ndarray:
    """Sinusoidal features of ``t / T_train``: 16 sines then 16 cosines."""
    s = np.asarray(t, dtype=np.float64).reshape(-1, 1) / T_train
    arg = s * _FREQS
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(x):
    return x * _sigmoid(x)


def silu_grad(x):
    s = _sigmoid(x)
    return s + x * s * (1.0 - s)


@dataclass
class DenoiserModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    embed_table: np.ndarray
    T_train: int

    @property
    def d(self) -> int:
        return self.W3.shape[1]

    @property
    def d_c(self) -> int:
        return self.embed_table.shape[1]

    @property
    def hidden(self) -> int:
        return self.W2.shape[0]

    @property
    def n_classes(self) -> int:
        return self.embed_table.shape[0] - 1

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def dims(self) -> dict[str, list[int]]:
        return {name: list(arr.shape) for name, arr in self.params().items()}

    def copy(self) -> "DenoiserModel":
        return DenoiserModel(**{k: v.copy() for k, v in self.params().items()}, T_train=self.T_train)

    @classmethod
    def expected_shapes(cls, d: int, d_c: int, hidden: int, n_classes: int) -> dict[str, tuple[int, ...]]:
        d_in = d + TIME_DIM + d_c
        return {
            "W1": (d_in, hidden),
            "b1": (hidden,),
            "W2": (hidden, hidden),
            "b2": (hidden,),
            "W3": (hidden, d),
            "b3": (d,),
            "embed_table": (n_classes + 1, d_c),
        }

    @classmethod
    def zeros(cls, d: int, d_c: int, hidden: int, n_classes: int, T_train: int) -> "DenoiserModel":
        shapes = cls.expected_shapes(d, d_c, hidden, n_classes)
        return cls(**{k: np.zeros(s) for k, s in shapes.items()}, T_train=T_train)

    @classmethod
    def init(cls, d: int, d_c: int, hidden: int, n_classes: int, T_train: int, rng: RngState) -> "DenoiserModel":
        """Glorot-uniform weights, zero biases, N(0, 0.1^2) embedding rows."""
        m = cls.zeros(d, d_c, hidden, n_classes, T_train)
        for name in ("W1", "W2", "W3"):
            w = getattr(m, name)
            lim = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            w[...] = lim * (2.0 * rng.uniform(w.size).reshape(w.shape) - 1.0)
        m.embed_table[...] = 0.1 * gaussian(rng, m.embed_table.size).reshape(m.embed_table.shape)
        return m


NULL = None


def embed(model: DenoiserModel, k) -> np.ndarray:
    """Condition vector for class ``k``, or the null embedding for ``NULL``."""
    if k is None:
        return model.embed_table[0].copy()
    if not 0 <= k < model.n_classes:
        raise ValueError(f"class id {k} outside [0, {model.n_classes})")
    return model.embed_table[k + 1].copy()


@dataclass
class ForwardCache:
    x_in: np.ndarray
    a1: np.ndarray
    h1: np.ndarray
    a2: np.ndarray
    h2: np.ndarray
    squeeze: bool
    d: int = field(default=0)


def _as_batch(z, c):
    z = np.asarray(z, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    squeeze = z.ndim == 1
    z2 = np.atleast_2d(z)
    c2 = np.atleast_2d(c)
    if c2.shape[0] == 1 and z2.shape[0] > 1:
        c2 = np.broadcast_to(c2, (z2.shape[0], c2.shape[1]))
    return z2, c2, squeeze


def eps_forward(model: DenoiserModel, z, t, c) -> tuple[np.ndarray, ForwardCache]:
    """Predict noise for latents ``z`` (``(d,)`` or ``(B, d)``) at time ``t``."""
    z2, c2, squeeze = _as_batch(z, c)
    if z2.shape[1] != model.d or c2.shape[1] != model.d_c or c2.shape[0] != z2.shape[0]:
        raise ValueError(f"dimension mismatch: z {z2.shape}, c {c2.shape} for model d={model.d}, d_c={model.d_c}")
    if not (np.all(np.isfinite(z2)) and np.all(np.isfinite(c2))):
        raise FloatingPointError("non-finite denoiser input")
    temb = time_features(t, model.T_train)
    if temb.shape[0] == 1 and z2.shape[0] > 1:
        temb = np.broadcast_to(temb, (z2.shape[0], TIME_DIM))
    x_in = np.concatenate([z2, temb, c2], axis=1)
    a1 = x_in @ model.W1 + model.b1
    h1 = silu(a1)
    a2 = h1 @ model.W2 + model.b2
    h2 = silu(a2)
    out = h2 @ model.W3 + model.b3
    cache = ForwardCache(x_in, a1, h1, a2, h2, squeeze, model.d)
    return (out[0] if squeeze else out), cache


def _upstream(cache: ForwardCache, upstream) -> np.ndarray:
    g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if g.shape != (cache.x_in.shape[0], cache.d):
        raise ValueError(f"upstream shape {g.shape} does not match output {(cache.x_in.shape[0], cache.d)}")
    return g


def grad_wrt_embedding(model: DenoiserModel, cache: ForwardCache, upstream) -> np.ndarray:
    """Vector-Jacobian product of the output with respect to ``c``."""
    g = _upstream(cache, upstream)
    da2 = (g @ model.W3.T) * silu_grad(cache.a2)
    da1 = (da2 @ model.W2.T) * silu_grad(cache.a1)
    dc = da1 @ model.W1[model.d + TIME_DIM :].T
    return dc[0] if cache.squeeze else dc


def grad_wrt_params(model: DenoiserModel, cache: ForwardCache, upstream, rows=None) -> dict[str, np.ndarray]:
    """Gradients of ``sum(upstream * eps)`` for every parameter.

    ``rows`` gives the embedding-table row each batch entry's ``c`` came
    from; without it the table gradient is zero.
    """
    g = _upstream(cache, upstream)
    grads = {"W3": cache.h2.T @ g, "b3": g.sum(0)}
    da2 = (g @ model.W3.T) * silu_grad(cache.a2)
    grads["W2"] = cache.h1.T @ da2
    grads["b2"] = da2.sum(0)
    da1 = (da2 @ model.W2.T) * silu_grad(cache.a1)
    grads["W1"] = cache.x_in.T @ da1
    grads["b1"] = da1.sum(0)
    table = np.zeros_like(model.embed_table)
    if rows is not None:
        dc = da1 @ model.W1[model.d + TIME_DIM :].T
        np.add.at(table, np.atleast_1d(np.asarray(rows)), dc)
    grads["embed_table"] = table
    return grads


@dataclass
class TrainConfig:
    steps: int = 20000
    batch: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    p_uncond: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.p_uncond < 1.0:
            raise ValueError("p_uncond must lie in [0, 1)")
        if self.steps < 1 or self.batch < 1:
            raise ValueError("steps and batch must be >= 1")


@dataclass
class TrainResult:
    model: DenoiserModel
    losses: np.ndarray


def train_denoiser(
    X: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    sched: NoiseSchedule,
    cfg: TrainConfig,
    rng: RngState,
    hidden: int = 128,
    d_c: int = 8,
) -> TrainResult:
    """Fit the noise predictor with Adam on the classifier-free objective.

    Each step draws a minibatch (with replacement), times uniform in
    ``1..T_train`` and fresh Gaussian noise; each example's condition is
    swapped for the null row with probability ``p_uncond``.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    n, d = X.shape
    model = DenoiserModel.init(d, d_c, hidden, n_classes, sched.T_train, rng)
    m = {k: np.zeros_like(v) for k, v in model.params().items()}
    v = {k: np.zeros_like(val) for k, val in model.params().items()}
    B = cfg.batch
    losses = np.empty(cfg.steps)
    for step in range(1, cfg.steps + 1):
        idx = rng.integers(n, B)
        t = rng.integers(sched.T_train, B) + 1
        eps = gaussian(rng, B * d).reshape(B, d)
        drop = rng.uniform(B) < cfg.p_uncond
        rows = np.where(drop, 0, labels[idx] + 1)
        ab = sched.alpha_bars[t][:, None]
        zt = np.sqrt(ab) * X[idx] + np.sqrt(1.0 - ab) * eps
        pred, cache = eps_forward(model, zt, t, model.embed_table[rows])
        resid = pred - eps
        loss = float((resid**2).sum() / B)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"training loss became non-finite at step {step}")
        losses[step - 1] = loss
        grads = grad_wrt_params(model, cache, 2.0 * resid / B, rows)
        bc1 = 1.0 - cfg.beta1**step
        bc2 = 1.0 - cfg.beta2**step
        for name, p in model.params().items():
            gr = grads[name]
            m[name] = cfg.beta1 * m[name] + (1.0 - cfg.beta1) * gr
            v[name] = cfg.beta2 * v[name] + (1.0 - cfg.beta2) * gr * gr
            p -= cfg.lr * (m[name] / bc1) / (np.sqrt(v[name] / bc2) + cfg.adam_eps)
        if step % 5000 == 0:
            log.info("step %d loss %.4f", step, losses[step - 1000 : step].mean())
    return TrainResult(model, losses)
