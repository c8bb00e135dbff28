"""JSON checkpoint container: a readable manifest plus base64 tensors.

Tensors are stored as little-endian float64 bytes. The manifest records the
shape of every tensor, so a checkpoint can be validated before any array is
built from it.
"""

from __future__ import annotations

import base64
import binascii
import json
from pathlib import Path

import numpy as np

from ..denoiser import PARAM_NAMES, DenoiserModel
from ..inversion import PtiResult
from ..sampler import Trajectory
from ..schedule import NoiseSchedule, make_linear_schedule
from .config import SCHEMA_VERSION


class CheckpointError(Exception):
    pass


class CheckpointIOError(CheckpointError):
    pass


class CheckpointSchemaError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class CheckpointDimensionError(CheckpointError):
    pass


def _encode(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _decode(name: str, blob: str, shape) -> np.ndarray:
    try:
        raw = base64.b64decode(blob.encode("ascii"), validate=True)
    except (binascii.Error, AttributeError, UnicodeEncodeError) as exc:
        raise CheckpointCorruptError(f"tensor {name!r}: invalid base64 payload") from exc
    expected = int(np.prod(shape, dtype=np.int64)) * 8
    if len(raw) != expected:
        raise CheckpointDimensionError(
            f"tensor {name!r}: manifest shape {list(shape)} needs {expected} bytes, payload has {len(raw)}"
        )
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def write_container(path, manifest: dict, tensors: dict[str, np.ndarray]) -> None:
    manifest = dict(manifest, schema_version=SCHEMA_VERSION, dims={k: list(v.shape) for k, v in tensors.items()})
    doc = {"manifest": manifest, "tensors": {k: _encode(v) for k, v in tensors.items()}}
    text = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CheckpointIOError(f"cannot write {path}: {exc}") from exc


def read_container(path, kind: str) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CheckpointIOError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
        manifest, blobs = doc["manifest"], doc["tensors"]
        dims = manifest["dims"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointCorruptError(f"{path}: not a readable checkpoint container") from exc
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointSchemaError(
            f"{path}: schema_version {manifest.get('schema_version')!r}, expected {SCHEMA_VERSION}"
        )
    if manifest.get("kind") != kind:
        raise CheckpointSchemaError(f"{path}: holds {manifest.get('kind')!r}, expected {kind!r}")
    if set(dims) != set(blobs):
        raise CheckpointCorruptError(f"{path}: manifest dims and tensor names disagree")
    tensors = {name: _decode(name, blobs[name], dims[name]) for name in sorted(dims)}
    return manifest, tensors


def save_checkpoint(model: DenoiserModel, sched: NoiseSchedule, path, seed: int = 0, training_steps: int = 0) -> None:
    manifest = {
        "kind": "denoiser",
        "schedule": sched.params(),
        "seed": seed,
        "training_steps": training_steps,
        "arch": {"d": model.d, "d_c": model.d_c, "hidden": model.hidden, "n_classes": model.n_classes},
    }
    write_container(path, manifest, model.params())


def load_checkpoint(path) -> tuple[DenoiserModel, NoiseSchedule, dict]:
    manifest, tensors = read_container(path, "denoiser")
    try:
        arch = manifest["arch"]
        sched = make_linear_schedule(**manifest["schedule"])
        want = DenoiserModel.expected_shapes(arch["d"], arch["d_c"], arch["hidden"], arch["n_classes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointCorruptError(f"{path}: malformed manifest ({exc})") from exc
    if set(tensors) != set(PARAM_NAMES):
        raise CheckpointCorruptError(f"{path}: tensor set {sorted(tensors)} does not match the model")
    for name, shape in want.items():
        if tensors[name].shape != shape:
            raise CheckpointDimensionError(
                f"tensor {name!r}: shape {list(tensors[name].shape)} inconsistent with architecture {list(shape)}"
            )
    model = DenoiserModel(**tensors, T_train=sched.T_train)
    if not all(np.all(np.isfinite(v)) for v in tensors.values()):
        raise CheckpointCorruptError(f"{path}: non-finite parameters")
    return model, sched, manifest


def save_pti_result(result: PtiResult, path) -> None:
    tensors = {
        "cond_schedule": np.stack(result.cond_schedule),
        "recon": np.asarray(result.recon),
        "per_step_loss": np.stack(result.per_step_loss),
        "trajectory": np.stack(result.trajectory.latents),
    }
    manifest = {"kind": "pti_result", "method": result.method, "trajectory_ts": result.trajectory.ts}
    write_container(path, manifest, tensors)


def load_pti_result(path) -> PtiResult:
    manifest, t = read_container(path, "pti_result")
    traj = Trajectory(list(manifest["trajectory_ts"]), list(t["trajectory"]), "forward")
    return PtiResult(
        cond_schedule=list(t["cond_schedule"]),
        recon=t["recon"],
        per_step_loss=list(t["per_step_loss"]),
        trajectory=traj,
        method=manifest["method"],
    )
