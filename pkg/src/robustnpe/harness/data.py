"""Training and evaluation data for both families.

Gaussian runs simulate online. Camera runs draw parameters (clean images)
from fixed pools: train, observed and two evaluation pools. With an IDX
file the pools are disjoint slices of one seeded permutation; without one
they come from the procedural surrogate, one seeded stream per pool.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..simulators import (
    ScenarioSpec,
    SimulationBatch,
    downscale_antialias,
    draw_batch,
    load_idx,
    narrow_margins,
    simulate,
    surrogate_digits,
)
from .config import TrainConfig
from .seeding import stream

POOL_ORDER = ("train", "obs", "eval", "eval-sim")


def observed_source(scenario: ScenarioSpec) -> str:
    return "usps" if scenario.variant == "image_prior_shift" else "mnist"


@lru_cache(maxsize=4)
def _idx_images(path: str) -> np.ndarray:
    raw = load_idx(path, expect="images")
    if raw.shape[1:] == (28, 28):
        return np.stack([downscale_antialias(img).reshape(-1) for img in raw])
    if raw.shape[1:] == (16, 16):
        return raw.reshape(len(raw), -1) / 127.5 - 1.0
    raise ValueError(f"{path}: unsupported IDX image size {raw.shape[1:]}")


@lru_cache(maxsize=32)
def _surrogate(seed: int, role: str, kind: str, n: int) -> np.ndarray:
    imgs = surrogate_digits(n, stream(seed, f"images-{role}"))
    if kind == "usps":
        imgs = narrow_margins(imgs)
    imgs.setflags(write=False)
    return imgs


def image_pool(cfg: TrainConfig, role: str, kind: str, n: int) -> tuple[np.ndarray, bool]:
    """``n`` clean images for one pool; returns ``(images, is_surrogate)``."""
    if role not in POOL_ORDER:
        raise ValueError(f"unknown pool {role!r}")
    path = cfg.mnist_idx if kind == "mnist" else cfg.usps_idx
    if path is None:
        return np.array(_surrogate(cfg.seed, role, kind, n)), True
    images = _idx_images(str(path))
    order = stream(cfg.seed, f"images-{kind}").permutation(len(images))
    sizes = {"train": cfg.n_sim, "obs": cfg.n_obs, "eval": n, "eval-sim": n}
    if kind == "usps":
        sizes["train"] = 0
    start = 0
    for r in POOL_ORDER:
        if r == role:
            break
        start += sizes[r]
    if start + n > len(images):
        raise ValueError(f"{path} holds {len(images)} images; pools need {start + n}")
    return images[order[start:start + n]], False


class TrainBatches:
    """Simulated training batches under the assumed model."""

    def __init__(self, cfg: TrainConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.assumed = cfg.scenario.assumed()
        self.surrogate = False
        if cfg.family == "camera":
            self.pool, self.surrogate = image_pool(cfg, "train", "mnist", cfg.n_sim)
            self._order = np.empty(0, dtype=int)
            self._pos = 0

    def next(self) -> SimulationBatch:
        if self.cfg.family == "gaussian2d":
            return draw_batch(self.assumed, self.cfg.batch, self.rng)
        if self._pos + self.cfg.batch > len(self._order):
            self._order = self.rng.permutation(len(self.pool))
            self._pos = 0
        idx = self._order[self._pos:self._pos + self.cfg.batch]
        self._pos += self.cfg.batch
        theta = self.pool[idx]
        return SimulationBatch(theta, simulate(theta, self.assumed, self.rng))


class ObservedBatches:
    """Observed-data batches for the adaptation term.

    Fresh scenario draws every step when the observed budget covers all
    steps (Gaussian defaults); otherwise a fixed pool of ``n_obs`` datasets
    is simulated once and batches are drawn from it with replacement.
    """

    def __init__(self, cfg: TrainConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.surrogate = False
        self.fresh = cfg.family == "gaussian2d" and cfg.n_obs >= cfg.n_steps * cfg.batch
        self.pool: SimulationBatch | None = None
        if not self.fresh:
            self.pool = self._build_pool()

    def _build_pool(self) -> SimulationBatch:
        cfg = self.cfg
        if cfg.family == "gaussian2d":
            return draw_batch(cfg.scenario, cfg.n_obs, self.rng)
        theta, self.surrogate = image_pool(cfg, "obs", observed_source(cfg.scenario), cfg.n_obs)
        return SimulationBatch(theta, simulate(theta, cfg.scenario, self.rng))

    def next(self) -> SimulationBatch:
        if self.fresh:
            return draw_batch(self.cfg.scenario, self.cfg.batch, self.rng)
        idx = self.rng.integers(0, len(self.pool), size=self.cfg.batch)
        return self.pool.subset(idx)

    def first(self, n: int) -> SimulationBatch:
        """The first ``n`` observed datasets this stream hands to training."""
        if not self.fresh:
            return self.pool.subset(np.arange(min(n, len(self.pool))))
        parts, total = [], 0
        while total < n:
            b = self.next()
            parts.append(b)
            total += len(b)
        theta = np.concatenate([b.theta for b in parts])[:n]
        x = np.concatenate([b.x for b in parts])[:n]
        return SimulationBatch(theta, x)
