"""Training and evaluation configuration with family-dependent defaults."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

from ..losses import DEFAULT_SCALES, NnpeConfig
from ..simulators import ScenarioSpec

METHODS = ("npe", "nnpe", "npe_mmd", "npe_dann")
UDA_METHODS = ("npe_mmd", "npe_dann")

# Gaussian benchmark: 49,920 simulations in batches of 32 = 1560 online steps.
GAUSSIAN_DEFAULTS = dict(n_sim=49_920, n_obs=49_920, batch=32, epochs=1, base_lr=5e-4,
                         weight_decay=0.0, flow_layers=3, nll_per_dim=False)
IMAGE_DEFAULTS = dict(n_sim=50_000, n_obs=1_000, batch=32, epochs=20, base_lr=5e-4,
                      weight_decay=0.01, flow_layers=6, nll_per_dim=True)
IMAGE_MMD_OVERRIDES = dict(batch=128, epochs=80)


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass(frozen=True)
class EvalConfig:
    n_test: int = 100
    S: int = 100
    observed_seen: bool = False

    def __post_init__(self):
        if self.n_test < 2:
            raise ConfigError("n_test must be at least 2")
        if self.S < 2:
            raise ConfigError("S must be at least 2")


@dataclass(frozen=True)
class TrainConfig:
    """One training run. Fields left as ``None`` take the defaults of the scenario family.

    For images, ``n_sim`` and ``n_obs`` are pool sizes and ``epochs`` passes over
    the training pool; for the Gaussian task ``n_sim`` is the online budget.
    """

    method: str = "npe"
    lam: float = 0.0
    seed: int = 0
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    eval: EvalConfig = field(default_factory=EvalConfig)
    n_sim: int | None = None
    n_obs: int | None = None
    batch: int | None = None
    epochs: int | None = None
    base_lr: float | None = None
    weight_decay: float | None = None
    flow_layers: int | None = None
    nll_per_dim: bool | None = None
    grl_weight: float = 1.0
    clip_norm: float = 10.0
    kernel_scales: tuple[float, ...] = DEFAULT_SCALES
    nnpe: NnpeConfig = field(default_factory=NnpeConfig)
    mnist_idx: str | None = None
    usps_idx: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.lam < 0:
            raise ConfigError("lam must be non-negative")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        defaults = dict(GAUSSIAN_DEFAULTS if self.family == "gaussian2d" else IMAGE_DEFAULTS)
        if self.family == "camera" and self.method == "npe_mmd":
            defaults.update(IMAGE_MMD_OVERRIDES)
        for k, v in defaults.items():
            if getattr(self, k) is None:
                object.__setattr__(self, k, v)
        object.__setattr__(self, "kernel_scales", tuple(float(s) for s in self.kernel_scales))
        if min(self.n_sim, self.n_obs, self.batch, self.epochs, self.flow_layers) < 1:
            raise ConfigError("budgets, batch, epochs and flow_layers must be positive")
        if self.batch > self.n_sim:
            raise ConfigError(f"batch {self.batch} exceeds the simulation budget {self.n_sim}")
        if self.family == "gaussian2d":
            if self.n_sim % self.batch:
                raise ConfigError(f"budget {self.n_sim} is not a multiple of batch {self.batch}")
            if self.epochs != 1:
                raise ConfigError("online Gaussian training uses epochs=1")
        if not self.base_lr > 0 or self.weight_decay < 0 or not self.clip_norm > 0:
            raise ConfigError("base_lr and clip_norm must be positive, weight_decay non-negative")
        if not self.grl_weight > 0:
            raise ConfigError("grl_weight must be positive")

    @property
    def family(self) -> str:
        return self.scenario.family

    @property
    def steps_per_epoch(self) -> int:
        return self.n_sim // self.batch

    @property
    def n_steps(self) -> int:
        return self.epochs * self.steps_per_epoch

    @property
    def uses_observed(self) -> bool:
        return self.method in UDA_METHODS

    @property
    def method_label(self) -> str:
        return f"{self.method}(lam={self.lam:g})" if self.uses_observed else self.method

    def training_key(self) -> "TrainConfig":
        """The config with fields that cannot affect training normalised away.

        Methods without an observed-data term never see the scenario, so
        their runs are shared across scenarios of one family.
        """
        cfg = replace(self, eval=EvalConfig())
        if not self.uses_observed:
            cfg = replace(cfg, lam=0.0, scenario=ScenarioSpec(family=self.family, M=self.scenario.M),
                          grl_weight=1.0)
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenario"] = self.scenario.to_dict()
        d["kernel_scales"] = list(self.kernel_scales)
        return d

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        raw = dict(raw)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            if "scenario" in raw:
                scen = raw["scenario"]
                raw["scenario"] = scen if isinstance(scen, ScenarioSpec) else ScenarioSpec.from_dict(scen)
            if "eval" in raw and isinstance(raw["eval"], dict):
                raw["eval"] = EvalConfig(**raw["eval"])
            if "nnpe" in raw and isinstance(raw["nnpe"], dict):
                raw["nnpe"] = NnpeConfig(**raw["nnpe"])
            if "kernel_scales" in raw:
                raw["kernel_scales"] = tuple(raw["kernel_scales"])
            return cls(**raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg: TrainConfig | dict) -> str:
    """First 16 hex digits of the SHA-256 of the canonical JSON form."""
    d = cfg.to_dict() if isinstance(cfg, TrainConfig) else cfg
    return hashlib.sha256(canonical_json(d).encode()).hexdigest()[:16]


def load_config(path) -> TrainConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return TrainConfig.from_dict(raw)
