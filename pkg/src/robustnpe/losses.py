"""Training objectives (NPE, NPE-MMD, NPE-DANN, NNPE noise) and the IMQ-kernel MMD.

The exact NumPy MMD estimator is shared with :mod:`robustnpe.metrics`. Its
kernel matrix is built elementwise (sequential sums over coordinates and
scales) and the three kernel sums are reduced with :func:`math.fsum`, so
the result does not depend on the order of points and two identical
multisets give exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .simulators import SimulationBatch

DEFAULT_SCALES = (0.5, 1.0, 2.0, 4.0, 8.0)


@dataclass(frozen=True)
class KernelSpec:
    """Sum of inverse multiquadric kernels ``s^2 / (s^2 + |u - v|^2)``."""

    scales: tuple[float, ...] = DEFAULT_SCALES
    family: str = "inverse_multiquadric"

    def __post_init__(self):
        if self.family != "inverse_multiquadric":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if len(self.scales) == 0 or any(not s > 0 for s in self.scales):
            raise ValueError("kernel needs at least one positive scale")
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))


DEFAULT_KERNEL = KernelSpec()


@dataclass(frozen=True)
class UdaConfig:
    method: str = "none"
    lam: float = 0.0
    kernel: KernelSpec = field(default_factory=KernelSpec)
    grl_weight: float = 1.0

    def __post_init__(self):
        if self.method not in ("none", "mmd", "dann"):
            raise ValueError(f"unknown UDA method {self.method!r}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if not self.grl_weight > 0:
            raise ValueError("gradient reversal weight must be positive")


@dataclass(frozen=True)
class NnpeConfig:
    spike_scale: float = 0.01
    slab_scale: float = 0.25
    p: float = 0.5

    def __post_init__(self):
        if self.spike_scale < 0 or self.slab_scale < 0 or not 0.0 <= self.p <= 1.0:
            raise ValueError("invalid spike-and-slab settings")


# ---------------------------------------------------------------- kernel / MMD


def imq_kernel(u, v, spec: KernelSpec = DEFAULT_KERNEL) -> float:
    u = np.asarray(u, dtype=float).reshape(1, -1)
    v = np.asarray(v, dtype=float).reshape(1, -1)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape[1]} vs {v.shape[1]}")
    return float(imq_gram(u, v, spec)[0, 0])


def imq_gram(A: np.ndarray, B: np.ndarray, spec: KernelSpec = DEFAULT_KERNEL) -> np.ndarray:
    """Kernel matrix ``K[i, j] = k(A[i], B[j])``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    d2 = np.zeros((A.shape[0], B.shape[0]))
    for k in range(A.shape[1]):
        diff = A[:, None, k] - B[None, :, k]
        d2 = d2 + diff * diff
    K = np.zeros_like(d2)
    for s in spec.scales:
        s2 = s * s
        K = K + s2 / (s2 + d2)
    return K


def _fsum(K: np.ndarray) -> float:
    return math.fsum(K.ravel().tolist())


def mmd2_biased(A, B, spec: KernelSpec = DEFAULT_KERNEL):
    """Biased (V-statistic) squared MMD between two point sets.

    NumPy inputs give a float (clamped at zero); if either input is a
    :class:`Tensor` the result is a differentiable scalar tensor.
    """
    if isinstance(A, Tensor) or isinstance(B, Tensor):
        return _mmd2_tensor(ad.as_tensor(A), ad.as_tensor(B), spec)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n, m = len(A), len(B)
    if n == 0 or m == 0:
        raise ValueError("MMD needs two non-empty sets")
    kaa = _fsum(imq_gram(A, A, spec))
    kbb = _fsum(imq_gram(B, B, spec))
    kab = _fsum(imq_gram(A, B, spec))
    return max(0.0, kaa / (n * n) + kbb / (m * m) - 2 * kab / (n * m))


def _gram_tensor(A: Tensor, B: Tensor, spec: KernelSpec) -> Tensor:
    n, d = A.shape
    m = B.shape[0]
    diff = A.reshape(n, 1, d) - B.reshape(1, m, d)
    d2 = (diff * diff).sum(axis=2)
    K = None
    for s in spec.scales:
        s2 = s * s
        term = s2 / (d2 + s2)
        K = term if K is None else K + term
    return K


def _mmd2_tensor(A: Tensor, B: Tensor, spec: KernelSpec) -> Tensor:
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("MMD needs two non-empty sets")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return (_gram_tensor(A, A, spec).mean() + _gram_tensor(B, B, spec).mean()
            - 2.0 * _gram_tensor(A, B, spec).mean())


def mmd2_biased_batched(A: np.ndarray, B: np.ndarray, spec: KernelSpec = DEFAULT_KERNEL,
                        kaa: np.ndarray | None = None) -> np.ndarray:
    """Many independent MMDs at once: ``A`` is ``(K, n, d)``, ``B`` is ``(K, m, d)``.

    Plain NumPy reductions; use :func:`mmd2_biased` where exactness matters.
    ``kaa`` may carry precomputed mean within-``A`` kernel values.
    """
    def mean_gram(X, Y):
        d2 = np.zeros((X.shape[0], X.shape[1], Y.shape[1]))
        for k in range(X.shape[2]):
            diff = X[:, :, None, k] - Y[:, None, :, k]
            d2 += diff * diff
        total = np.zeros(X.shape[0])
        for s in spec.scales:
            s2 = s * s
            total += (s2 / (s2 + d2)).mean(axis=(1, 2))
        return total

    if kaa is None:
        kaa = mean_gram(A, A)
    return np.maximum(0.0, kaa + mean_gram(B, B) - 2.0 * mean_gram(A, B))


# ---------------------------------------------------------------- objectives


def npe_loss(batch: SimulationBatch, summary_net, flow, summaries: Tensor | None = None,
             per_dim: bool = False) -> Tensor:
    """Mean negative log posterior density of the batch parameters.

    ``per_dim`` divides by the parameter dimension, which keeps the loss of
    high-dimensional parameters (images) on the scale of a per-pixel error.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    s = summary_net(batch.x) if summaries is None else summaries
    nll = -flow.log_prob(batch.theta, s).mean()
    return nll / batch.theta.shape[1] if per_dim else nll


def npe_mmd_loss(batch: SimulationBatch, obs_x, summary_net, flow, cfg: UdaConfig,
                 per_dim: bool = False) -> Tensor:
    """NPE loss plus ``lam * MMD^2`` between simulated and observed summaries."""
    if cfg.method != "mmd":
        raise ValueError("npe_mmd_loss needs a UdaConfig with method='mmd'")
    if len(obs_x) == 0:
        raise ValueError("empty observed batch")
    s_sim = summary_net(batch.x)
    s_obs = summary_net(obs_x)
    nll = npe_loss(batch, summary_net, flow, s_sim, per_dim)
    return nll + cfg.lam * mmd2_biased(s_sim, s_obs, cfg.kernel)


def domain_loss(s_sim: Tensor, s_obs: Tensor, classifier, grl_weight: float | None = 1.0) -> Tensor:
    """Binary cross-entropy of the domain classifier; simulated summaries are class 1.

    ``grl_weight=None`` feeds the summaries without gradient reversal.
    Computed as softplus of logits, i.e. ``-log sigmoid(z) = softplus(-z)``.
    """
    if grl_weight is not None:
        s_sim = ad.grad_reverse(s_sim, grl_weight)
        s_obs = ad.grad_reverse(s_obs, grl_weight)
    z_sim = classifier(s_sim)
    z_obs = classifier(s_obs)
    return ad.softplus(-z_sim).mean() + ad.softplus(z_obs).mean()


def npe_dann_loss(batch: SimulationBatch, obs_x, summary_net, flow, classifier,
                  cfg: UdaConfig, per_dim: bool = False) -> Tensor:
    """NPE loss plus ``lam`` times the domain loss seen through gradient reversal."""
    if cfg.method != "dann":
        raise ValueError("npe_dann_loss needs a UdaConfig with method='dann'")
    if len(obs_x) == 0:
        raise ValueError("empty observed batch")
    s_sim = summary_net(batch.x)
    s_obs = summary_net(obs_x)
    l_d = domain_loss(s_sim, s_obs, classifier, cfg.grl_weight)
    return npe_loss(batch, summary_net, flow, s_sim, per_dim) + cfg.lam * l_d


def spike_slab_noise(shape, cfg: NnpeConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-element noise: ``spike_scale * N(0,1)`` with prob. ``p``, else ``slab_scale * Cauchy``.

    Returns the noise and the boolean spike mask.
    """
    spike = rng.random(shape) < cfg.p
    normal = rng.standard_normal(shape)
    cauchy = rng.standard_cauchy(shape)
    noise = np.where(spike, cfg.spike_scale * normal, cfg.slab_scale * cauchy)
    return noise, spike


def nnpe_augment(batch: SimulationBatch, cfg: NnpeConfig, rng: np.random.Generator) -> SimulationBatch:
    noise, _ = spike_slab_noise(np.shape(batch.x), cfg, rng)
    return SimulationBatch(batch.theta, batch.x + noise, dict(batch.meta))
