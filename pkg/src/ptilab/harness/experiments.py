"""Experiment runners: guidance grid, inversion benchmark and trade-off sweep.

Each runner is a pure function of ``(model, schedule, RunConfig)`` and
returns ``(columns, rows)``; :func:`write_report` turns that into a CSV with
a provenance comment line.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from ..dataset import MixtureSpec, sample_class, sample_mixture, sample_shapes
from ..denoiser import TrainResult, embed, train_denoiser
from ..editor import edit_ddim, edit_from_pti, edit_latent_interp
from ..inversion import ddim_reconstruct, null_text_inversion, prompt_tuning_inversion
from ..metrics import mse, psnr_from_mse, ssim, tradeoff_point
from ..numerics import RngState
from ..sampler import invert_trajectory, sample_trajectory
from .config import SCHEMA_VERSION, ConfigError, RunConfig

# Stream indices under the root seed.
DATA_STREAM, TRAIN_STREAM, TEST_STREAM, EDIT_STREAM = 0, 1, 2, 3

GRID_COLUMNS = ["omega_enc", "omega_dec", "mse", "psnr_db", "n"]
BENCH_COLUMNS = ["method", "N", "beta", "omega", "mse", "psnr_db", "ssim", "n"]
TRADEOFF_COLUMNS = ["method", "eta", "alignment_nll", "fidelity_l2", "mse", "psnr_db", "ssim", "n"]


def sample_dataset(cfg: RunConfig, n: int, rng: RngState):
    spec = cfg.data_spec()
    if cfg.dataset.kind == "shapes":
        return sample_shapes(spec, n, rng)
    return sample_mixture(spec, n, rng)


def training_data(cfg: RunConfig):
    return sample_dataset(cfg, cfg.dataset.n_train, RngState(cfg.seed).derive(DATA_STREAM))


def recon_inputs(cfg: RunConfig):
    """Fixed labelled reconstruction inputs."""
    return sample_dataset(cfg, cfg.experiment.n_test, RngState(cfg.seed).derive(TEST_STREAM))


def edit_inputs(cfg: RunConfig) -> np.ndarray:
    """Fixed editing inputs, all drawn from the source class."""
    spec = cfg.data_spec()
    if not isinstance(spec, MixtureSpec):
        raise ConfigError("editing experiments need the mixture dataset")
    return sample_class(spec, cfg.experiment.source_class, cfg.experiment.n_test, RngState(cfg.seed).derive(EDIT_STREAM))


def train(cfg: RunConfig, X=None, labels=None) -> TrainResult:
    if X is None:
        X, labels = training_data(cfg)
    spec = cfg.data_spec()
    return train_denoiser(
        X,
        labels,
        spec.K,
        cfg.noise_schedule(),
        cfg.train_config(),
        RngState(cfg.seed).derive(TRAIN_STREAM),
        hidden=cfg.model.hidden,
        d_c=cfg.model.d_c,
    )


def _source_embeddings(model, labels) -> np.ndarray:
    return model.embed_table[np.asarray(labels) + 1]


def _ssim_mean(cfg, X, R):
    if cfg.dataset.kind != "shapes":
        return None
    return float(np.mean([ssim(a, b, L=2.0) for a, b in zip(X, R)]))


def run_grid_experiment(cfg: RunConfig, model, sched, omegas_enc=None, omegas_dec=None):
    """Mean reconstruction error for every (encode, decode) guidance pair."""
    omegas_enc = cfg.experiment.omegas_enc if omegas_enc is None else omegas_enc
    omegas_dec = cfg.experiment.omegas_dec if omegas_dec is None else omegas_dec
    steps = cfg.ddim_steps()
    X, labels = recon_inputs(cfg)
    C = _source_embeddings(model, labels)
    rows = []
    for w_enc in omegas_enc:
        z_T = invert_trajectory(X, C, w_enc, steps, sched, model).final
        for w_dec in omegas_dec:
            R = sample_trajectory(z_T, [C] * steps.start_index, w_dec, steps, sched, model).final
            err = mse(X, R)
            rows.append([w_enc, w_dec, err, psnr_from_mse(err), len(X)])
    return GRID_COLUMNS, rows


def run_inversion_bench(cfg: RunConfig, model, sched, methods=None, Ns=None, betas=None):
    """Reconstruction quality per (method, N, beta) at the configured guidance."""
    methods = cfg.experiment.methods if methods is None else methods
    Ns = cfg.experiment.Ns if Ns is None else Ns
    betas = cfg.experiment.betas if betas is None else betas
    for n in Ns:
        if int(n) < 1:
            raise ConfigError(f"iterations per step N must be >= 1, got {n}")
    bad = set(methods) - {"ddim", "nti", "pti"}
    if bad:
        raise ConfigError(f"unknown inversion methods {sorted(bad)}")
    steps = cfg.ddim_steps()
    omega = cfg.pti.omega
    X, labels = recon_inputs(cfg)
    C = _source_embeddings(model, labels)
    rows = []
    if "ddim" in methods:
        R = ddim_reconstruct(X, C, 0.0, omega, steps, sched, model)
        err = mse(X, R)
        rows.append(["ddim", "", "", omega, err, psnr_from_mse(err), _ssim_mean(cfg, X, R), len(X)])
    for beta in betas:
        for n in Ns:
            pcfg = cfg.pti_config(N=int(n), beta=beta)
            for method in ("nti", "pti"):
                if method not in methods:
                    continue
                if method == "pti":
                    R = prompt_tuning_inversion(X, C, pcfg, steps, sched, model).recon
                else:
                    R = null_text_inversion(X, C, None, pcfg, steps, sched, model).recon
                err = mse(X, R)
                rows.append([method, int(n), beta, omega, err, psnr_from_mse(err), _ssim_mean(cfg, X, R), len(X)])
    return BENCH_COLUMNS, rows


def _edit_row(spec, method, eta, X, E, target):
    pt = tradeoff_point(spec, X, E, target, eta, method)
    err = mse(X, E)
    return [method, eta, pt.alignment, pt.fidelity, err, psnr_from_mse(err), None, pt.n]


def run_tradeoff(cfg: RunConfig, model, sched, etas=None):
    """Alignment/fidelity points for condition interpolation, DDIM-Edit and latent interpolation."""
    etas = sorted(cfg.experiment.etas if etas is None else etas)
    spec = cfg.data_spec()
    X = edit_inputs(cfg)
    steps = cfg.ddim_steps()
    ecfg = cfg.edit_config()
    target = ecfg.target_class
    c_star = embed(model, target)
    stage1 = prompt_tuning_inversion(X, c_star, ecfg.pti, steps, sched, model)
    ddim_out = edit_ddim(X, target, ecfg.omega, steps, sched, model)
    rows = []
    for eta in etas:
        rows.append(_edit_row(spec, "pti", eta, X, edit_from_pti(stage1, c_star, eta, ecfg.omega, steps, sched, model), target))
        rows.append(_edit_row(spec, "ddim-edit", eta, X, ddim_out, target))
        rows.append(_edit_row(spec, "latent-interp", eta, X, edit_latent_interp(X, target, eta, ecfg.omega, steps, sched, model), target))
    return TRADEOFF_COLUMNS, rows


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.12g}"
    return str(v)


def render_report(cfg: RunConfig, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# seed={cfg.seed} schema_version={SCHEMA_VERSION} config_hash={cfg.config_hash()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_report(path, cfg: RunConfig, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render_report(cfg, columns, rows))
    return path


def read_report(path) -> list[dict]:
    """Parse a report written by :func:`write_report` (skips the comment line)."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))
