"""Run configuration loaded from JSON with strict key checking."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

import numpy as np

from ..dataset import MixtureSpec, ShapeSpec, circle_means
from ..denoiser import TrainConfig
from ..editor import EditConfig
from ..inversion import PtiConfig
from ..schedule import DdimSteps, NoiseSchedule, ddim_timesteps, make_linear_schedule

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class DatasetSection:
    kind: str = "mixture"
    K: int = 4
    d: int = 2
    sigma: float = 0.15
    means: list | None = None
    n_train: int = 10000
    jitter: int = 1


@dataclass
class ScheduleSection:
    T_train: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass
class DdimSection:
    S: int = 50
    r: float = 0.8


@dataclass
class ModelSection:
    hidden: int = 128
    d_c: int = 8


@dataclass
class TrainSection:
    steps: int = 20000
    batch: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    p_uncond: float = 0.1


@dataclass
class PtiSection:
    omega: float = 7.5
    beta: float = 0.1
    N: int = 1


@dataclass
class EditSection:
    eta: float = 0.9
    omega: float = 7.5
    target_class: int = 1


@dataclass
class ExperimentSection:
    n_test: int = 64
    source_class: int = 0
    omegas_enc: list = field(default_factory=lambda: [0.0, 1.0, 2.5, 5.0])
    omegas_dec: list = field(default_factory=lambda: [0.0, 1.0, 2.5, 5.0, 7.5])
    methods: list = field(default_factory=lambda: ["ddim", "nti", "pti"])
    Ns: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    betas: list = field(default_factory=lambda: [0.01, 0.1])
    etas: list = field(default_factory=lambda: [round(0.1 * i, 1) for i in range(11)])


@dataclass
class RunConfig:
    seed: int = 0
    dataset: DatasetSection = field(default_factory=DatasetSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    ddim: DdimSection = field(default_factory=DdimSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    pti: PtiSection = field(default_factory=PtiSection)
    edit: EditSection = field(default_factory=EditSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    output_dir: str = "out"

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        cfg = _build(cls, data, "")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        """Hash of everything that affects results (the output location does not)."""
        data = self.to_dict()
        data.pop("output_dir")
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # -- derived objects ----------------------------------------------------

    def validate(self) -> None:
        try:
            if not 0 <= self.seed < 2**64:
                raise ValueError("seed must be an unsigned 64-bit integer")
            if self.dataset.kind not in ("mixture", "shapes"):
                raise ValueError(f"unknown dataset kind {self.dataset.kind!r}")
            if self.dataset.n_train < 1 or self.experiment.n_test < 1:
                raise ValueError("n_train and n_test must be >= 1")
            spec = self.data_spec()
            self.noise_schedule()
            self.ddim_steps()
            self.train_config()
            self.pti_config()
            self.edit_config()
            for k in (self.edit.target_class, self.experiment.source_class):
                if not 0 <= k < spec.K:
                    raise ValueError(f"class id {k} outside [0, {spec.K})")
            for n in self.experiment.Ns:
                PtiConfig(self.pti.omega, self.pti.beta, n)
            for b in self.experiment.betas:
                PtiConfig(self.pti.omega, b, self.pti.N)
            bad = set(self.experiment.methods) - {"ddim", "nti", "pti"}
            if bad:
                raise ValueError(f"unknown inversion methods {sorted(bad)}")
            for eta in self.experiment.etas:
                EditConfig(eta=eta)
            if self.model.hidden < 1 or self.model.d_c < 1:
                raise ValueError("model widths must be >= 1")
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    def data_spec(self) -> MixtureSpec | ShapeSpec:
        ds = self.dataset
        if ds.kind == "shapes":
            return ShapeSpec(jitter=ds.jitter)
        if ds.means is not None:
            means = ds.means
        elif ds.d == 2:
            means = circle_means(ds.K)
        elif ds.K <= ds.d:
            means = np.eye(ds.d)[: ds.K]
        else:
            raise ValueError("explicit means are required when d != 2 and K > d")
        return MixtureSpec(K=ds.K, d=ds.d, sigma=ds.sigma, means=means)

    def noise_schedule(self) -> NoiseSchedule:
        s = self.schedule
        return make_linear_schedule(s.T_train, s.beta_start, s.beta_end)

    def ddim_steps(self) -> DdimSteps:
        return ddim_timesteps(self.schedule.T_train, self.ddim.S, self.ddim.r)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**asdict(self.train))

    def pti_config(self, N: int | None = None, beta: float | None = None) -> PtiConfig:
        return PtiConfig(self.pti.omega, self.pti.beta if beta is None else beta, self.pti.N if N is None else N)

    def edit_config(self, eta: float | None = None, target: int | None = None) -> EditConfig:
        return EditConfig(
            eta=self.edit.eta if eta is None else eta,
            omega=self.edit.omega,
            target_class=self.edit.target_class if target is None else target,
            pti=self.pti_config(),
        )


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys at {where or 'top level'}: {unknown}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{where}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)
