"""Two-dimensional Gaussian-means model and its conjugate posterior."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AnalyticPosterior:
    """Posterior of the assumed model: prior N(0, I_2), likelihood N(mu, I_2)."""

    mean: np.ndarray
    cov: np.ndarray

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        sd = np.sqrt(self.cov[0, 0])
        return self.mean + sd * rng.standard_normal((n, self.mean.shape[0]))


def analytic_posterior(x: np.ndarray) -> AnalyticPosterior:
    """Conjugate update of N(0, I) with M rows of N(mu, I) observations.

    The assumed model is used no matter how ``x`` was generated.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"need a non-empty (M, D) dataset, got shape {x.shape}")
    M, D = x.shape
    shrink = M / (M + 1.0)
    return AnalyticPosterior(mean=shrink * x.mean(axis=0), cov=np.eye(D) / (M + 1.0))


def analytic_posterior_batch(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`analytic_posterior` over ``(N, M, D)``; returns means and variances."""
    x = np.asarray(x, dtype=float)
    M = x.shape[1]
    if M == 0:
        raise ValueError("empty datasets")
    means = (M / (M + 1.0)) * x.mean(axis=1)
    var = np.full_like(means, 1.0 / (M + 1.0))
    return means, var


def simulate_gaussian(theta: np.ndarray, M: int, rng: np.random.Generator, tau: float = 1.0,
                      eps: float = 0.0, c: float = 1.5) -> np.ndarray:
    """``(N, 2)`` means to ``(N, M, 2)`` datasets.

    Rows are N(theta, tau * I). With contamination ``eps`` each row is
    independently replaced by ``+c * 1`` (prob. eps/2) or ``-c * 1`` (prob. eps/2).
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if M < 1:
        raise ValueError("M must be at least 1")
    N, D = theta.shape
    x = theta[:, None, :] + np.sqrt(tau) * rng.standard_normal((N, M, D))
    if eps > 0:
        u = rng.random((N, M))
        x[u < eps / 2] = c
        x[(u >= eps / 2) & (u < eps)] = -c
    return x
