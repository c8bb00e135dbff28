import time

import numpy as np
import pytest

from ptilab.denoiser import DenoiserModel
from ptilab.harness.checkpoint import load_checkpoint
from ptilab.harness.cli import main
from ptilab.harness.config import RunConfig
from ptilab.harness.experiments import read_report
from ptilab.numerics import RngState, gaussian

SESSION_START = time.perf_counter()

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def default_cfg():
    return RunConfig()


@pytest.fixture(scope="session")
def trained(default_cfg, tmp_path_factory):
    """The default 20k-step mixture model, trained once per session via the CLI."""
    out = tmp_path_factory.mktemp("default_run")
    t0 = time.perf_counter()
    assert main(["--out", str(out), "train"]) == 0
    elapsed = time.perf_counter() - t0
    model, sched, _ = load_checkpoint(out / "model.ckpt.json")
    losses = np.array([float(r["loss"]) for r in read_report(out / "train_loss.csv")])
    return {
        "model": model,
        "losses": losses,
        "sched": sched,
        "steps": default_cfg.ddim_steps(),
        "cfg": default_cfg,
        "seconds": elapsed,
        "out": out,
    }


def random_model(rng: RngState, d=2, d_c=3, hidden=4, n_classes=2, T_train=1000, scale=0.5):
    """Small model with every parameter (biases included) drawn non-zero."""
    shapes = DenoiserModel.expected_shapes(d, d_c, hidden, n_classes)
    tensors = {}
    for name in sorted(shapes):
        shape = shapes[name]
        tensors[name] = scale * gaussian(rng, int(np.prod(shape))).reshape(shape)
    return DenoiserModel(**tensors, T_train=T_train)


def constant_model(d=2, d_c=3, n_classes=2, value=None, T_train=1000):
    """Denoiser whose output ignores every input."""
    model = DenoiserModel.zeros(d, d_c, 4, n_classes, T_train)
    model.b3[:] = np.linspace(0.3, -0.7, d) if value is None else value
    model.embed_table[:] = np.arange(model.embed_table.size).reshape(model.embed_table.shape) * 0.1
    return model


@pytest.fixture
def const_model():
    return constant_model()
