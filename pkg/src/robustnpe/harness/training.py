"""Online training loops for NPE, NNPE, NPE-MMD and NPE-DANN."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import autodiff as ad
from ..losses import KernelSpec, UdaConfig, nnpe_augment, npe_dann_loss, npe_loss, npe_mmd_loss
from ..networks import (
    AmortizedPosterior,
    ClassifierConfig,
    ConvSummary,
    ConvSummaryConfig,
    CouplingFlow,
    CouplingFlowConfig,
    DeepSetSummary,
    DomainClassifier,
    SummaryNetworkConfig,
)
from ..simulators import SimulationBatch
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig, config_hash
from .data import ObservedBatches, TrainBatches
from .seeding import stream

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    """A non-finite value appeared during training."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"non-finite value at step {step}: {detail}")
        self.step = step


@dataclass
class RunRecord:
    config: TrainConfig
    config_hash: str
    loss_trace: np.ndarray
    state: dict[str, np.ndarray]
    wall_clock: float
    checkpoint: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.loss_trace)

    def model(self) -> AmortizedPosterior:
        m = build_model(self.config, np.random.default_rng(0))
        m.load_state_dict(self.state)
        return m


def build_model(cfg: TrainConfig, rng: np.random.Generator) -> AmortizedPosterior:
    """Networks for the config's family; the classifier exists only for DANN.

    Summary and flow weights are drawn before the classifier, so every
    method starts from the same summary and flow weights for one seed.
    Conditioner output layers start at zero: the untrained flow is a
    permutation, which keeps initial latents at the scale of the data.
    """
    if cfg.family == "gaussian2d":
        summary = DeepSetSummary(SummaryNetworkConfig(), rng)
        d_s, hidden = summary.cfg.summary_dim, (256, 256)
    else:
        summary = ConvSummary(ConvSummaryConfig(), rng)
        d_s, hidden = summary.cfg.summary_dim, (256, 256, 256)
    flow = CouplingFlow(CouplingFlowConfig(param_dim=cfg.scenario.param_dim, summary_dim=d_s,
                                           n_layers=cfg.flow_layers), rng, zero_init=True)
    classifier = None
    if cfg.method == "npe_dann":
        classifier = DomainClassifier(ClassifierConfig(input_dim=d_s, hidden=hidden), rng)
    return AmortizedPosterior(summary, flow, classifier)


def _clip_pixels(batch: SimulationBatch, family: str) -> SimulationBatch:
    if family != "camera":
        return batch
    return SimulationBatch(batch.theta, np.clip(batch.x, -1.0, 1.0), batch.meta)


def train(cfg: TrainConfig, checkpoint_dir=None, log_every: int = 0) -> RunRecord:
    """Train one run; optionally write ``<checkpoint_dir>/<hash>.ckpt``.

    Raises :class:`TrainingDiverged` with the failing step index on NaN/Inf.
    """
    t0 = time.perf_counter()
    model = build_model(cfg, stream(cfg.seed, "init"))
    params = model.parameters()
    opt = ad.OptimizerState(cfg.base_lr, cfg.n_steps, weight_decay=cfg.weight_decay)
    sims = TrainBatches(cfg, stream(cfg.seed, "train-sim"))
    obs = ObservedBatches(cfg, stream(cfg.seed, "train-obs")) if cfg.uses_observed else None
    noise_rng = stream(cfg.seed, "train-noise")
    uda = UdaConfig(method={"npe_mmd": "mmd", "npe_dann": "dann"}.get(cfg.method, "none"),
                    lam=cfg.lam, kernel=KernelSpec(cfg.kernel_scales), grl_weight=cfg.grl_weight)
    per_dim = cfg.nll_per_dim
    trace = np.empty(cfg.n_steps)
    for step in range(cfg.n_steps):
        batch = sims.next()
        if cfg.method == "nnpe":
            batch = _clip_pixels(nnpe_augment(batch, cfg.nnpe, noise_rng), cfg.family)
        try:
            if cfg.method == "npe_mmd":
                loss = npe_mmd_loss(batch, obs.next().x, model.summary, model.flow, uda, per_dim)
            elif cfg.method == "npe_dann":
                loss = npe_dann_loss(batch, obs.next().x, model.summary, model.flow,
                                     model.classifier, uda, per_dim)
            else:
                loss = npe_loss(batch, model.summary, model.flow, per_dim=per_dim)
            grads = ad.grad(loss, params)
        except ad.NonFiniteError as exc:
            raise TrainingDiverged(step, str(exc)) from exc
        grads, _ = ad.clip_grad_norm(grads, cfg.clip_norm)
        ad.adam_step(opt, grads, params)
        trace[step] = loss.item()
        if log_every and (step + 1) % log_every == 0:
            log.info("%s step %d/%d loss %.4f lr %.2e", cfg.method_label, step + 1,
                     cfg.n_steps, trace[step], opt.lr)
    meta = {"surrogate_images": bool(sims.surrogate or (obs is not None and obs.surrogate))}
    record = RunRecord(cfg, config_hash(cfg), trace, model.state_dict(),
                       time.perf_counter() - t0, meta=meta)
    if checkpoint_dir is not None:
        path = Path(checkpoint_dir) / f"{record.config_hash}.ckpt"
        save_run(record, path)
    return record


def save_run(record: RunRecord, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    extra = {"loss_trace": [float(v) for v in record.loss_trace],
             "wall_clock": record.wall_clock, "meta": record.meta}
    save_checkpoint(path, record.state, record.config.to_dict(), record.config_hash, extra)
    record.checkpoint = str(path)
    return path


def load_run(path) -> RunRecord:
    state, header = load_checkpoint(path)
    cfg = TrainConfig.from_dict(header["config"])
    extra = header.get("extra", {})
    return RunRecord(cfg, header["config_hash"], np.asarray(extra.get("loss_trace", []), dtype=float),
                     state, float(extra.get("wall_clock", 0.0)), str(path), extra.get("meta", {}))


def train_cached(cfg: TrainConfig, cache_dir) -> RunRecord:
    """Train ``cfg.training_key()`` unless its checkpoint already exists in ``cache_dir``.

    The returned record carries ``cfg`` itself, so evaluating it defaults to
    the requested scenario; ``config_hash`` still names the shared run.
    """
    key = cfg.training_key()
    path = Path(cache_dir) / f"{config_hash(key)}.ckpt"
    record = load_run(path) if path.exists() else train(key, checkpoint_dir=cache_dir)
    record.config = cfg
    return record
