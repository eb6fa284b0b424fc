"""Evaluate a trained run on a scenario and collect a metrics report."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..losses import KernelSpec
from ..metrics import (
    EvalBundle,
    dist_to_analytic,
    ece,
    inld,
    nrmse,
    posterior_contraction,
    ppd,
    ssdd,
)
from ..simulators import ScenarioSpec, SimulationBatch, analytic_posterior_batch, draw_batch, simulate
from .config import ConfigError, EvalConfig
from .data import ObservedBatches, image_pool, observed_source
from .seeding import stream
from .training import RunRecord

CORE_METRICS = ("nrmse", "ece", "pc", "ppd", "ssdd", "inld")
ANALYTIC_METRICS = ("rmse_analytic", "mmd_analytic")


@dataclass
class MetricsReport:
    method: str
    scenario: str
    variant_param: str
    seed: int
    values: dict[str, float]
    config_hash: str
    meta: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [{"method": self.method, "scenario": self.scenario,
                 "variant_param": self.variant_param, "seed": self.seed,
                 "metric": k, "value": self.values[k]} for k in sorted(self.values)]

    def to_dict(self) -> dict:
        return {"method": self.method, "scenario": self.scenario,
                "variant_param": self.variant_param, "seed": self.seed,
                "values": dict(sorted(self.values.items())), "config_hash": self.config_hash,
                "meta": self.meta}


def _eval_stream(seed: int, scenario: ScenarioSpec, tag: str) -> np.random.Generator:
    return stream(seed, f"eval/{tag}/{scenario.label}/{scenario.variant_param()}")


def _test_data(record: RunRecord, scenario: ScenarioSpec, ev: EvalConfig, seed: int):
    cfg = record.config
    surrogate = False
    if ev.observed_seen:
        obs = ObservedBatches(replace(cfg, scenario=scenario), stream(cfg.seed, "train-obs"))
        test = obs.first(ev.n_test)
        surrogate = obs.surrogate
        if len(test) < ev.n_test:
            raise ConfigError(f"observed pool holds {len(test)} datasets, n_test={ev.n_test}")
    elif scenario.family == "gaussian2d":
        test = draw_batch(scenario, ev.n_test, _eval_stream(seed, scenario, "test"))
    else:
        theta, surrogate = image_pool(cfg, "eval", observed_source(scenario), ev.n_test)
        test = SimulationBatch(theta, simulate(theta, scenario, _eval_stream(seed, scenario, "test")))
    sim_rng = _eval_stream(seed, scenario, "sim")
    if scenario.family == "gaussian2d":
        ref = draw_batch(scenario.assumed(), ev.n_test, sim_rng)
    else:
        theta, _ = image_pool(cfg, "eval-sim", "mnist", ev.n_test)
        ref = SimulationBatch(theta, simulate(theta, scenario.assumed(), sim_rng))
    return test, ref, surrogate


def evaluate(record: RunRecord, scenario: ScenarioSpec | None = None,
             ev: EvalConfig | None = None, seed: int | None = None) -> MetricsReport:
    """All applicable metrics for ``record`` on ``scenario``.

    Test datasets come from an evaluation stream disjoint from the training
    streams, unless ``ev.observed_seen`` asks for the observed datasets the
    adaptation term saw during training. Deterministic given the seed.
    """
    cfg = record.config
    scenario = scenario or cfg.scenario
    ev = ev or cfg.eval
    seed = cfg.seed if seed is None else seed
    if scenario.family != cfg.family:
        raise ConfigError(f"run was trained on {cfg.family!r}, scenario is {scenario.family!r}")
    if scenario.family == "gaussian2d" and scenario.M != cfg.scenario.M:
        raise ConfigError(f"run was trained with M={cfg.scenario.M}, scenario has M={scenario.M}")
    kernel = KernelSpec(cfg.kernel_scales)
    model = record.model()
    test, ref, surrogate = _test_data(record, scenario, ev, seed)
    rng = _eval_stream(seed, scenario, "samples")
    s_obs = model.summarize(test.x if scenario.family == "gaussian2d" else np.clip(test.x, -1, 1))
    s_sim = model.summarize(ref.x)
    samples = model.flow.sample(s_obs, ev.S, rng)
    values: dict[str, float] = {}
    if scenario.family == "gaussian2d":
        mean, var = analytic_posterior_batch(test.x)
        bundle = EvalBundle(test.theta, samples, x=test.x, summaries=s_obs, analytic_mean=mean,
                            analytic_var=var, prior_var=np.ones(2))
        values["nrmse"] = nrmse(bundle)
        values["pc"] = posterior_contraction(bundle)
        reference = mean[:, None, :] + np.sqrt(var)[:, None, :] * rng.standard_normal(samples.shape)
        values["rmse_analytic"] = dist_to_analytic(bundle, "rmse")
        values["mmd_analytic"] = dist_to_analytic(bundle, "mmd", rng, kernel)
    else:
        bundle = EvalBundle(test.theta, samples, x=test.x, summaries=s_obs)
        values["nrmse"] = nrmse(bundle, normalize="global")
        values["pc"] = posterior_contraction(bundle, exclude_degenerate=True, pooled=True)
        reference = test.theta[:, None, :]
    values["ece"] = ece(bundle)
    values["ppd"] = ppd(bundle, scenario, rng, kernel=kernel)
    values["ssdd"] = ssdd(s_sim, s_obs, kernel)
    values["inld"] = inld(model.flow, s_obs, reference, rng, kernel)
    meta = {"surrogate_images": bool(surrogate or record.meta.get("surrogate_images", False)),
            "observed_seen": ev.observed_seen, "n_test": ev.n_test, "S": ev.S, "eval_seed": int(seed),
            "train_hash": record.config_hash}
    return MetricsReport(cfg.method_label, scenario.label, scenario.variant_param(), int(cfg.seed),
                         {k: float(v) for k, v in values.items()}, record.config_hash, meta)
