"""Scenario descriptions and the prior/likelihood dispatch for both model families."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from os import PathLike

import numpy as np

from . import camera
from .gaussian import simulate_gaussian

GAUSSIAN_VARIANTS = ("well_specified", "prior_location", "prior_scale", "likelihood_scale",
                     "contamination")
CAMERA_VARIANTS = ("well_specified", "image_prior_shift", "image_blur", "salt_pepper",
                   "row_blackout")


@dataclass(frozen=True)
class ScenarioSpec:
    """A generative model variant.

    Only the knobs relevant to ``variant`` are read; the rest keep their
    well-specified defaults.
    """

    family: str = "gaussian2d"
    variant: str = "well_specified"
    M: int = 100
    mu0: tuple[float, float] = (0.0, 0.0)
    tau0: float = 1.0
    tau: float = 1.0
    eps: float = 0.0
    c: float = 1.5
    blur_factor: float = 1.25
    frac: float = 0.1
    rows: int = 2

    def __post_init__(self):
        if self.family == "gaussian2d":
            if self.variant not in GAUSSIAN_VARIANTS:
                raise ValueError(f"unknown gaussian2d variant {self.variant!r}")
            if self.M < 1:
                raise ValueError("M must be at least 1")
        elif self.family == "camera":
            if self.variant not in CAMERA_VARIANTS:
                raise ValueError(f"unknown camera variant {self.variant!r}")
        else:
            raise ValueError(f"unknown family {self.family!r}")
        if not 0.0 <= self.eps <= 1.0 or not 0.0 <= self.frac <= 1.0:
            raise ValueError("eps and frac must lie in [0, 1]")
        if min(self.tau, self.tau0, self.blur_factor, self.c) <= 0:
            raise ValueError("tau, tau0, blur_factor and c must be positive")
        if not 0 <= self.rows <= camera.SIDE:
            raise ValueError(f"rows must lie in [0, {camera.SIDE}]")
        object.__setattr__(self, "mu0", tuple(float(v) for v in self.mu0))

    @property
    def param_dim(self) -> int:
        return 2 if self.family == "gaussian2d" else camera.N_PIXELS

    @property
    def is_well_specified(self) -> bool:
        return self.variant == "well_specified"

    def assumed(self) -> "ScenarioSpec":
        """The well-specified model of the same family."""
        return ScenarioSpec(family=self.family, M=self.M)

    def variant_param(self) -> str:
        """Short label of the active misspecification knob, e.g. ``"eps=0.2"``."""
        v = self.variant
        if v == "prior_location":
            return "mu0=" + ",".join(f"{m:g}" for m in self.mu0)
        if v == "prior_scale":
            return f"tau0={self.tau0:g}"
        if v == "likelihood_scale":
            return f"tau={self.tau:g}"
        if v == "contamination":
            return f"eps={self.eps:g},c={self.c:g}"
        if v == "image_blur":
            return f"blur_factor={self.blur_factor:g}"
        if v == "salt_pepper":
            return f"frac={self.frac:g}"
        if v == "row_blackout":
            return f"rows={self.rows}"
        if v == "image_prior_shift":
            return "source=usps"
        return "-"

    @property
    def label(self) -> str:
        return f"{self.family}/{self.variant}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mu0"] = list(self.mu0)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        """Accepts flat fields or the manifest form ``{family, variant, params, M, ...}``."""
        d = dict(d)
        params = d.pop("params", None) or {}
        known = {f for f in cls.__dataclass_fields__}
        merged = {k: v for k, v in {**d, **params}.items() if k in known}
        if "mu0" in merged:
            merged["mu0"] = tuple(merged["mu0"])
        return cls(**merged)

    def with_(self, **changes) -> "ScenarioSpec":
        return replace(self, **changes)


@dataclass
class SimulationBatch:
    """Paired draws: ``theta`` is ``(N, J)``; ``x`` is ``(N, M, D)`` or ``(N, 256)``."""

    theta: np.ndarray
    x: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.theta)

    def __post_init__(self):
        if len(self.theta) != len(self.x):
            raise ValueError(f"{len(self.theta)} parameter rows but {len(self.x)} datasets")

    def subset(self, idx) -> "SimulationBatch":
        return SimulationBatch(self.theta[idx], self.x[idx], dict(self.meta))


def load_scenario(path: str | PathLike) -> tuple[ScenarioSpec, dict]:
    """Read a scenario manifest; returns the scenario and the remaining keys (seed, n_datasets)."""
    with open(path) as fh:
        raw = json.load(fh)
    extra = {k: raw[k] for k in ("seed", "n_datasets") if k in raw}
    return ScenarioSpec.from_dict(raw), extra


def blur_sigma(spec: ScenarioSpec) -> float:
    return camera.BASE_BLUR * (spec.blur_factor if spec.variant == "image_blur" else 1.0)


def sample_prior(spec: ScenarioSpec, n: int, rng: np.random.Generator,
                 source: camera.ImageSource | None = None) -> np.ndarray:
    """``n`` parameter vectors from the scenario's data-generating prior."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if spec.family == "camera":
        if source is None:
            raise ValueError("camera family needs an image source")
        return source.take(n)
    mean = np.zeros(2)
    sd = 1.0
    if spec.variant == "prior_location":
        mean = np.asarray(spec.mu0)
    elif spec.variant == "prior_scale":
        sd = np.sqrt(spec.tau0)
    return mean + sd * rng.standard_normal((n, 2))


def simulate(theta: np.ndarray, spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    """Datasets for a batch of parameters under the scenario's likelihood."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if spec.family == "gaussian2d":
        tau = spec.tau if spec.variant == "likelihood_scale" else 1.0
        eps = spec.eps if spec.variant == "contamination" else 0.0
        return simulate_gaussian(theta, spec.M, rng, tau=tau, eps=eps, c=spec.c)
    x = camera.camera_forward(theta, blur_sigma(spec), rng)
    if spec.variant == "salt_pepper":
        x = camera.salt_pepper(x, spec.frac, rng)
    elif spec.variant == "row_blackout":
        x = camera.blackout_rows(x, spec.rows, rng)
    return x


def simulate_dataset(theta: np.ndarray, spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    """One dataset for one parameter vector."""
    return simulate(np.asarray(theta)[None], spec, rng)[0]


def draw_batch(spec: ScenarioSpec, n: int, rng: np.random.Generator,
               source: camera.ImageSource | None = None) -> SimulationBatch:
    theta = sample_prior(spec, n, rng, source)
    return SimulationBatch(theta, simulate(theta, spec, rng))
