"""Evaluation metrics for posterior samples against data-generating parameters.

Shapes: ``theta_true`` is ``(N, J)``, ``samples`` is ``(N, S, J)``, summary
vectors are ``(N, d_s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .losses import DEFAULT_KERNEL, KernelSpec, imq_gram, mmd2_biased, mmd2_biased_batched
from .simulators import ScenarioSpec, simulate

ECE_LEVELS = np.linspace(0.005, 0.995, 20)


@dataclass
class EvalBundle:
    """Aligned per-dataset evaluation inputs."""

    theta_true: np.ndarray
    samples: np.ndarray
    x: np.ndarray | None = None
    summaries: np.ndarray | None = None
    analytic_mean: np.ndarray | None = None
    analytic_var: np.ndarray | None = None
    prior_var: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta_true = np.atleast_2d(np.asarray(self.theta_true, dtype=float))
        self.samples = np.asarray(self.samples, dtype=float)
        N, J = self.theta_true.shape
        if self.samples.ndim != 3 or self.samples.shape[0] != N or self.samples.shape[2] != J:
            raise ValueError(f"samples shape {self.samples.shape} does not match theta {self.theta_true.shape}")
        if self.samples.shape[1] < 2:
            raise ValueError("need at least two posterior samples per dataset")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("posterior samples contain non-finite values")

    @property
    def n_datasets(self) -> int:
        return self.theta_true.shape[0]


def nrmse(bundle: EvalBundle, normalize: str = "per_parameter") -> float:
    """Sample RMSE around the true parameter over its range, averaged over parameters then datasets.

    ``normalize="global"`` divides by the range over all parameters jointly,
    for images whose border pixels are constant across the test set.
    """
    theta = bundle.theta_true
    if normalize == "per_parameter":
        rng = theta.max(axis=0) - theta.min(axis=0)
    elif normalize == "global":
        rng = np.full(theta.shape[1], theta.max() - theta.min())
    else:
        raise ValueError(f"unknown normalisation {normalize!r}")
    if np.any(rng <= 0):
        raise ValueError("degenerate test set: a parameter has zero range across datasets")
    rmse = np.sqrt(np.mean((bundle.samples - theta[:, None, :]) ** 2, axis=1))
    return float(np.mean(np.mean(rmse / rng, axis=1)))


def ece(bundle: EvalBundle, levels: np.ndarray = ECE_LEVELS) -> float:
    """Median absolute coverage error over central credible intervals, averaged over parameters."""
    theta, samples = bundle.theta_true, bundle.samples
    per_param = []
    for j in range(theta.shape[1]):
        errs = []
        for alpha in levels:
            lo = np.quantile(samples[:, :, j], (1 - alpha) / 2, axis=1)
            hi = np.quantile(samples[:, :, j], 1 - (1 - alpha) / 2, axis=1)
            inside = np.mean((lo <= theta[:, j]) & (theta[:, j] <= hi))
            errs.append(abs(inside - alpha))
        per_param.append(np.median(errs))
    return float(np.mean(per_param))


def posterior_contraction(bundle: EvalBundle, exclude_degenerate: bool = False,
                          pooled: bool = False) -> float:
    """Mean of ``1 - Var(samples) / prior variance`` over datasets and parameters.

    The prior variance is ``bundle.prior_var`` when given, otherwise the
    empirical variance of the true parameters across the test set.
    ``exclude_degenerate`` drops parameters whose prior variance is zero.
    ``pooled`` compares summed variances over parameters per dataset, which
    stays meaningful for images whose border pixels are almost constant.
    """
    prior = bundle.prior_var
    if prior is None:
        prior = bundle.theta_true.var(axis=0, ddof=1)
    prior = np.broadcast_to(np.asarray(prior, dtype=float), (bundle.theta_true.shape[1],))
    keep = prior > 0
    if not keep.all():
        if not exclude_degenerate or not keep.any():
            raise ValueError("zero prior variance")
    post = bundle.samples.var(axis=1, ddof=1)[:, keep]
    if pooled:
        return float(np.mean(1.0 - post.sum(axis=1) / prior[keep].sum()))
    return float(np.mean(1.0 - post / prior[keep]))


def assumed_prior_var(spec: ScenarioSpec) -> np.ndarray | None:
    """Prior variance of the assumed model when it is known in closed form."""
    return np.ones(2) if spec.family == "gaussian2d" else None


def pixel_nrmse(x: np.ndarray, x_hat: np.ndarray) -> np.ndarray:
    """RMSE over pixels divided by the pixel range of ``x``; broadcasts over leading axes."""
    span = np.ptp(x, axis=-1)
    span = np.where(span > 0, span, 1.0)
    return np.sqrt(np.mean((x - x_hat) ** 2, axis=-1)) / span


def ppd(bundle: EvalBundle, spec: ScenarioSpec, rng: np.random.Generator,
        distance: str | None = None, kernel: KernelSpec = DEFAULT_KERNEL) -> float:
    """Distance between each observed dataset and re-simulations from its posterior samples.

    Re-simulation always uses the assumed (well-specified) model of ``spec``'s family.
    """
    if bundle.x is None:
        raise ValueError("bundle has no observed data")
    distance = distance or ("mmd" if spec.family == "gaussian2d" else "nrmse")
    if (distance == "mmd") != (spec.family == "gaussian2d"):
        raise ValueError(f"distance {distance!r} does not fit family {spec.family!r}")
    assumed = spec.assumed()
    N, S, J = bundle.samples.shape
    values = np.empty(N)
    for n in range(N):
        x_hat = simulate(bundle.samples[n], assumed, rng)
        if distance == "mmd":
            x_obs = np.broadcast_to(bundle.x[n], (S, *bundle.x[n].shape))
            kaa = np.full(S, _mean_gram_single(bundle.x[n], kernel))
            d = mmd2_biased_batched(x_obs, x_hat, kernel, kaa=kaa)
        else:
            d = pixel_nrmse(bundle.x[n][None], x_hat)
        values[n] = np.mean(d)
    return float(np.mean(values))


def _mean_gram_single(x: np.ndarray, kernel: KernelSpec) -> float:
    return float(imq_gram(x, x, kernel).mean())


def ssdd(sim_summaries: np.ndarray, obs_summaries: np.ndarray,
         kernel: KernelSpec = DEFAULT_KERNEL) -> float:
    """MMD between the pooled simulated and pooled observed summary sets."""
    return mmd2_biased(sim_summaries, obs_summaries, kernel)


def inld(flow, summaries: np.ndarray, reference: np.ndarray, rng: np.random.Generator,
         kernel: KernelSpec = DEFAULT_KERNEL, max_points: int = 2000) -> float:
    """MMD between flow latents of reference parameters and a standard-normal sample.

    ``reference`` is ``(N, R, J)``: per dataset, R parameter draws pushed
    through the flow conditioned on that dataset's summary. Latents are
    pooled and, beyond ``max_points``, subsampled without replacement.
    """
    if reference is None:
        raise ValueError("missing reference samples")
    reference = np.asarray(reference, dtype=float)
    N, R, J = reference.shape
    s_rep = np.repeat(np.asarray(summaries, dtype=float), R, axis=0)
    with ad.no_grad():
        z, _ = flow.forward(reference.reshape(N * R, J), s_rep)
    z = z.data
    if len(z) > max_points:
        z = z[rng.choice(len(z), size=max_points, replace=False)]
    return mmd2_biased(z, rng.standard_normal(z.shape), kernel)


def dist_to_analytic(bundle: EvalBundle, kind: str, rng: np.random.Generator | None = None,
                     kernel: KernelSpec = DEFAULT_KERNEL) -> float:
    """RMSE of posterior means, or mean per-dataset MMD, against the analytic posterior."""
    if bundle.analytic_mean is None:
        raise ValueError("bundle has no analytic posterior")
    if kind == "rmse":
        err = bundle.samples.mean(axis=1) - bundle.analytic_mean
        return float(np.mean(np.sqrt(np.mean(err ** 2, axis=1))))
    if kind == "mmd":
        if rng is None:
            raise ValueError("mmd distance needs an rng for analytic draws")
        N, S, J = bundle.samples.shape
        sd = np.sqrt(bundle.analytic_var)
        vals = [mmd2_biased(bundle.samples[n],
                            bundle.analytic_mean[n] + sd[n] * rng.standard_normal((S, J)), kernel)
                for n in range(N)]
        return float(math.fsum(vals) / N)
    raise ValueError(f"unknown kind {kind!r}")
