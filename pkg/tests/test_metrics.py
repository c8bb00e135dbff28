import math

import numpy as np
import pytest
from conftest import random_model
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ptilab.dataset import MixtureSpec
from ptilab.denoiser import embed
from ptilab.editor import EditConfig, edit_ddim
from ptilab.inversion import PtiConfig, prompt_tuning_inversion
from ptilab.metrics import mse, psnr, psnr_from_mse, ssim, tradeoff_point, tradeoff_sweep
from ptilab.numerics import RngState, gaussian
from ptilab.schedule import ddim_timesteps, make_linear_schedule

SCHED = make_linear_schedule()
STEPS = ddim_timesteps(1000, 20, 0.8)

images = arrays(np.float64, 64, elements=st.floats(-1, 1))


def test_mse_examples():
    assert mse([0.0, 0.0], [1.0, 1.0]) == 1.0
    a = np.array([0.3, -0.2])
    assert mse(a, a) == 0.0
    with pytest.raises(ValueError):
        mse([0.0], [0.0, 1.0])


def test_psnr_examples():
    assert psnr_from_mse(1.0, max_val=1.0) == 0.0
    assert psnr(np.zeros(4), np.zeros(4)) == math.inf
    assert psnr_from_mse(0.04) == pytest.approx(20.0)  # max_val 2
    with pytest.raises(ValueError):
        psnr_from_mse(1.0, max_val=0.0)


@given(st.floats(1e-12, 1e6), st.floats(1e-12, 1e6))
def test_psnr_strictly_decreasing(a, b):
    if a < b:
        assert psnr_from_mse(a) > psnr_from_mse(b)


def test_ssim_identity():
    x = gaussian(RngState(1), 64)
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-15)


def test_ssim_constant_versus_negation():
    a = np.full(64, 0.5)
    # direct evaluation: means 0.5 and -0.5, no variance, C1 = (0.02)^2, C2 = (0.06)^2
    c1, c2 = 0.02**2, 0.06**2
    expected = ((2 * 0.5 * -0.5 + c1) / (0.25 + 0.25 + c1)) * (c2 / c2)
    assert ssim(a, -a, L=2.0) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(-0.998401279, rel=1e-9)


def test_ssim_uncorrelated_noise_band():
    rng = RngState(2)
    vals = [ssim(gaussian(rng, 64), gaussian(rng, 64)) for _ in range(100)]
    assert max(abs(v) for v in vals) < 0.3


def test_ssim_accepts_square_and_rejects_other_shapes():
    x = gaussian(RngState(3), 64)
    assert ssim(x.reshape(8, 8), x.reshape(8, 8)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ssim(np.zeros(2), np.zeros(2))


@given(images, images)
def test_ssim_symmetric_and_bounded(a, b):
    s = ssim(a, b)
    assert s == pytest.approx(ssim(b, a), abs=1e-12)
    assert -1.0 - 1e-12 <= s <= 1.0 + 1e-12


def test_tradeoff_point_values():
    spec = MixtureSpec()
    x = np.array([[1.0, 0.0], [1.0, 0.0]])
    e = np.array([[0.0, 1.0], [1.0, 0.0]])
    pt = tradeoff_point(spec, x, e, 1, 0.5)
    assert pt.fidelity == pytest.approx(math.sqrt(2) / 2)
    nll_at_mean = math.log(2 * math.pi * spec.sigma**2)
    assert pt.alignment == pytest.approx(nll_at_mean + 0.5 * 2 / (2 * spec.sigma**2))
    assert pt.n == 2


@pytest.fixture
def toy():
    rng = RngState(60)
    model = random_model(rng, d=2, d_c=3, hidden=8, n_classes=4, scale=0.3)
    return model, MixtureSpec().means[0] + 0.15 * gaussian(rng, 8).reshape(4, 2)


def test_sweep_degenerate_endpoints(toy):
    model, x = toy
    spec = MixtureSpec()
    cfg = EditConfig(target_class=1, pti=PtiConfig(beta=0.05))
    rec = prompt_tuning_inversion(x, embed(model, 1), cfg.pti, STEPS, SCHED, model).recon
    (zero,) = tradeoff_sweep(x, [0.0], cfg, STEPS, SCHED, model, spec)
    assert zero.fidelity == pytest.approx(np.sqrt(((rec - x) ** 2).sum(-1)).mean(), rel=1e-12)
    (one,) = tradeoff_sweep(x, [1.0], cfg, STEPS, SCHED, model, spec)
    ddim = tradeoff_point(spec, x, edit_ddim(x, 1, 7.5, STEPS, SCHED, model), 1, 1.0)
    assert (one.alignment, one.fidelity) == (ddim.alignment, ddim.fidelity)


def test_sweep_is_ordered_and_pure(toy):
    model, x = toy
    spec = MixtureSpec()
    cfg = EditConfig(target_class=2, pti=PtiConfig(beta=0.05))
    a = tradeoff_sweep(x, [0.7, 0.2, 0.5], cfg, STEPS, SCHED, model, spec)
    b = tradeoff_sweep(x, [0.2, 0.5, 0.7], cfg, STEPS, SCHED, model, spec)
    assert [p.eta for p in a] == [0.2, 0.5, 0.7]
    assert a == b
    with pytest.raises(ValueError):
        tradeoff_sweep(x, [], cfg, STEPS, SCHED, model, spec)
