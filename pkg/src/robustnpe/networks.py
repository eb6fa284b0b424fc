"""Summary networks, the conditional affine coupling flow and the domain classifier.

All networks hold their weights as named :class:`~robustnpe.autodiff.Tensor`
parameters and evaluate on batches: a deep-set input is ``(B, M, D)``, an
image input is ``(B, 256)``, parameter vectors and summaries are ``(B, J)``
and ``(B, d_s)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu, "softplus": ad.softplus}

LOG_2PI = math.log(2.0 * math.pi)


class Module:
    """Container of named parameters."""

    def __init__(self, prefix: str):
        self.prefix = prefix
        self.params: dict[str, Tensor] = {}

    def _param(self, local: str, value: np.ndarray) -> Tensor:
        name = f"{self.prefix}.{local}"
        t = ad.parameter(value, name)
        self.params[name] = t
        return t

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.params)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            value = np.asarray(state[k], dtype=ad.DTYPE)
            if value.shape != p.shape:
                raise ValueError(f"{k}: checkpoint shape {value.shape} != {p.shape}")
            p.data = value.copy()


class Dense(Module):
    def __init__(self, rng: np.random.Generator, fan_in: int, fan_out: int, prefix: str,
                 zero: bool = False):
        super().__init__(prefix)
        w = np.zeros((fan_in, fan_out)) if zero else ad.glorot_uniform(rng, fan_in, fan_out)
        self.W = self._param("W", w)
        self.b = self._param("b", np.zeros(fan_out))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.W + self.b


class MLP(Module):
    """Stack of dense layers; the activation is skipped after the last one."""

    def __init__(self, rng, sizes, prefix: str, activation: str = "relu", zero_last: bool = False):
        super().__init__(prefix)
        self.act = ACTIVATIONS[activation]
        self.layers = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            layer = Dense(rng, a, b, f"{prefix}.{i}", zero=zero_last and last)
            self.layers.append(layer)
            self.params.update(layer.params)

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = self.act(x)
        return x


# ---------------------------------------------------------------- deep set


@dataclass(frozen=True)
class SummaryNetworkConfig:
    input_dim: int = 2
    inner_widths: tuple[int, ...] = (64, 64)
    head_widths: tuple[int, ...] = (64,)
    summary_dim: int = 4
    activation: str = "tanh"


class DeepSetSummary(Module):
    """Row-wise network, mean pooling over rows, then a head to ``summary_dim``."""

    def __init__(self, cfg: SummaryNetworkConfig, rng: np.random.Generator, prefix: str = "summary"):
        super().__init__(prefix)
        self.cfg = cfg
        inner = (cfg.input_dim, *cfg.inner_widths)
        self.inner = MLP(rng, inner, f"{prefix}.inner", cfg.activation)
        self.head = MLP(rng, (cfg.inner_widths[-1], *cfg.head_widths, cfg.summary_dim),
                        f"{prefix}.head", cfg.activation)
        self.params.update(self.inner.params)
        self.params.update(self.head.params)

    def __call__(self, x) -> Tensor:
        x = ad.as_tensor(x)
        if x.ndim == 2:
            x = x.reshape(1, *x.shape)
        if x.ndim != 3:
            raise ValueError(f"deep set expects (B, M, D) input, got {x.shape}")
        B, M, D = x.shape
        if M < 1:
            raise ValueError("deep set needs at least one row per dataset")
        if D != self.cfg.input_dim:
            raise ValueError(f"row dimension {D} != configured {self.cfg.input_dim}")
        h = self.inner(x.reshape(B * M, D))
        # inner MLP skips its last activation; apply it before pooling
        h = self.inner.act(h).reshape(B, M, -1)
        # sort each feature over rows first so the floating-point mean is
        # exactly invariant to row order
        pooled = ad.sort(h, axis=1).mean(axis=1)
        return self.head(pooled)


# ---------------------------------------------------------------- conv summary


@dataclass(frozen=True)
class ConvSummaryConfig:
    image_side: int = 16
    channels: tuple[int, ...] = (16, 32, 32, 32)
    strides: tuple[int, ...] = (2, 2, 2, 1)
    kernel: int = 3
    summary_dim: int = 32


class ConvSummary(Module):
    """Four 3x3 convolutions, global average pooling, linear map to the summary."""

    def __init__(self, cfg: ConvSummaryConfig, rng: np.random.Generator, prefix: str = "summary"):
        super().__init__(prefix)
        self.cfg = cfg
        self.kernels = []
        self.biases = []
        c_in = 1
        k = cfg.kernel
        for i, c_out in enumerate(cfg.channels):
            w = ad.glorot_uniform(rng, c_in * k * k, c_out * k * k, (c_out, c_in, k, k))
            self.kernels.append(self._param(f"conv{i}.W", w))
            self.biases.append(self._param(f"conv{i}.b", np.zeros((1, c_out, 1, 1))))
            c_in = c_out
        self.out = Dense(rng, c_in, cfg.summary_dim, f"{prefix}.out")
        self.params.update(self.out.params)

    def __call__(self, images) -> Tensor:
        side = self.cfg.image_side
        images = images.data if isinstance(images, Tensor) else np.asarray(images, dtype=float)
        if images.ndim == 1:
            images = images[None]
        if images.shape[-1] != side * side:
            raise ValueError(f"expected flattened {side}x{side} images, got {images.shape}")
        if images.min() < -1.0 or images.max() > 1.0:
            warnings.warn("pixel values outside [-1, 1] clipped", RuntimeWarning, stacklevel=2)
            images = np.clip(images, -1.0, 1.0)
        h = Tensor(images.reshape(-1, 1, side, side))
        for w, b, stride in zip(self.kernels, self.biases, self.cfg.strides):
            h = ad.relu(ad.conv2d(h, w, stride=stride, padding=self.cfg.kernel // 2) + b)
        pooled = h.mean(axis=(2, 3))
        return self.out(pooled)


# ---------------------------------------------------------------- coupling flow


@dataclass(frozen=True)
class CouplingFlowConfig:
    param_dim: int = 2
    summary_dim: int = 4
    n_layers: int = 3
    hidden: tuple[int, ...] = (128, 128)
    clamp: float = 1.9
    permutation_seed: int = 0


def _layer_permutations(J: int, n_layers: int, seed: int) -> list[np.ndarray]:
    if J == 2:
        return [np.array([1, 0]) for _ in range(n_layers)]
    rng = np.random.default_rng(seed)
    return [rng.permutation(J) for _ in range(n_layers)]


class CouplingFlow(Module):
    """Conditional affine coupling flow mapping parameters to a standard-normal latent.

    Each layer permutes the coordinates, splits them into halves ``(u, v)``
    and applies two affine couplings in turn: ``v`` conditioned on ``u``,
    then ``u`` conditioned on the new ``v``. A coupling maps its half by
    ``x * exp(c * tanh(a)) + t`` with ``(a, t)`` from a conditioner fed the
    other half and the summary vector, so every log-scale lies in ``(-c, c)``.
    """

    def __init__(self, cfg: CouplingFlowConfig, rng: np.random.Generator, prefix: str = "flow",
                 zero_init: bool = False):
        super().__init__(prefix)
        J = cfg.param_dim
        if J < 2:
            raise ValueError("coupling flow needs at least two parameter dimensions")
        self.cfg = cfg
        self.split = J // 2
        self.perms = _layer_permutations(J, cfg.n_layers, cfg.permutation_seed)
        self.inv_perms = [np.argsort(p) for p in self.perms]
        n_u, n_v = self.split, J - self.split
        self.conditioners = []
        for i in range(cfg.n_layers):
            pair = []
            for tag, n_in, n_out in (("v", n_u, n_v), ("u", n_v, n_u)):
                sizes = (n_in + cfg.summary_dim, *cfg.hidden, 2 * n_out)
                net = MLP(rng, sizes, f"{prefix}.coupling{i}.{tag}", "relu", zero_last=zero_init)
                self.params.update(net.params)
                pair.append(net)
            self.conditioners.append(pair)

    def _scale_shift(self, net: MLP, cond: Tensor, s: Tensor, n_out: int) -> tuple[Tensor, Tensor]:
        out = net(ad.concat([cond, s], axis=1))
        return self.cfg.clamp * ad.tanh(out[:, :n_out]), out[:, n_out:]

    def _prepare(self, v, s) -> tuple[Tensor, Tensor]:
        v, s = ad.as_tensor(v), ad.as_tensor(s)
        if v.ndim == 1:
            v = v.reshape(1, -1)
        if s.ndim == 1:
            s = s.reshape(1, -1)
        if v.shape[1] != self.cfg.param_dim:
            raise ValueError(f"expected {self.cfg.param_dim} parameters, got {v.shape[1]}")
        if s.shape[1] != self.cfg.summary_dim:
            raise ValueError(f"expected {self.cfg.summary_dim} summaries, got {s.shape[1]}")
        if s.shape[0] != v.shape[0]:
            raise ValueError(f"batch mismatch: {v.shape[0]} parameter rows, {s.shape[0]} summaries")
        return v, s

    def forward(self, theta, s) -> tuple[Tensor, Tensor]:
        """Return ``(z, log_det)`` with ``log_det = log|det dz/dtheta|`` per row."""
        x, s = self._prepare(theta, s)
        n_u, n_v = self.split, self.cfg.param_dim - self.split
        log_det = None
        for perm, (net_v, net_u) in zip(self.perms, self.conditioners):
            x = x[:, perm]
            u, v = x[:, :n_u], x[:, n_u:]
            a_v, t_v = self._scale_shift(net_v, u, s, n_v)
            v = v * ad.exp(a_v) + t_v
            a_u, t_u = self._scale_shift(net_u, v, s, n_u)
            u = u * ad.exp(a_u) + t_u
            x = ad.concat([u, v], axis=1)
            ld = a_v.sum(axis=1) + a_u.sum(axis=1)
            log_det = ld if log_det is None else log_det + ld
        return x, log_det

    __call__ = forward

    def inverse(self, z, s, return_log_det: bool = False):
        x, s = self._prepare(z, s)
        n_u, n_v = self.split, self.cfg.param_dim - self.split
        log_det = None
        for i in reversed(range(self.cfg.n_layers)):
            net_v, net_u = self.conditioners[i]
            u, v = x[:, :n_u], x[:, n_u:]
            a_u, t_u = self._scale_shift(net_u, v, s, n_u)
            u = (u - t_u) * ad.exp(-a_u)
            a_v, t_v = self._scale_shift(net_v, u, s, n_v)
            v = (v - t_v) * ad.exp(-a_v)
            x = ad.concat([u, v], axis=1)[:, self.inv_perms[i]]
            ld = -(a_v.sum(axis=1) + a_u.sum(axis=1))
            log_det = ld if log_det is None else log_det + ld
        return (x, log_det) if return_log_det else x

    def log_prob(self, theta, s) -> Tensor:
        z, log_det = self.forward(theta, s)
        J = self.cfg.param_dim
        return -0.5 * (z * z).sum(axis=1) - 0.5 * J * LOG_2PI + log_det

    def sample(self, s: np.ndarray, n_samples: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n_samples`` parameters per summary row; returns ``(B, n_samples, J)``."""
        s = np.atleast_2d(np.asarray(s, dtype=float))
        B, J = s.shape[0], self.cfg.param_dim
        z = rng.standard_normal((B * n_samples, J))
        s_rep = np.repeat(s, n_samples, axis=0)
        with ad.no_grad():
            theta = self.inverse(z, s_rep).data
        return theta.reshape(B, n_samples, J)


# ---------------------------------------------------------------- classifier


@dataclass(frozen=True)
class ClassifierConfig:
    input_dim: int = 4
    hidden: tuple[int, ...] = (256, 256)
    zero_output: bool = False


class DomainClassifier(Module):
    """Feed-forward network returning one logit per summary vector (simulated = 1)."""

    def __init__(self, cfg: ClassifierConfig, rng: np.random.Generator, prefix: str = "classifier"):
        super().__init__(prefix)
        self.cfg = cfg
        self.net = MLP(rng, (cfg.input_dim, *cfg.hidden, 1), prefix, "relu",
                       zero_last=cfg.zero_output)
        self.params.update(self.net.params)

    def __call__(self, s) -> Tensor:
        s = ad.as_tensor(s)
        if s.ndim == 1:
            s = s.reshape(1, -1)
        if s.shape[1] != self.cfg.input_dim:
            raise ValueError(f"classifier expects {self.cfg.input_dim} inputs, got {s.shape[1]}")
        return self.net(s).reshape(-1)


def logistic(logit) -> np.ndarray:
    logit = logit.data if isinstance(logit, Tensor) else np.asarray(logit)
    return 0.5 * (1.0 + np.tanh(0.5 * logit))


# ---------------------------------------------------------------- bundle


@dataclass
class AmortizedPosterior:
    """Summary network plus flow, and the domain classifier when DANN is used."""

    summary: Module
    flow: CouplingFlow
    classifier: DomainClassifier | None = None
    extras: dict = field(default_factory=dict)

    def parameters(self) -> dict[str, Tensor]:
        out = {**self.summary.parameters(), **self.flow.parameters()}
        if self.classifier is not None:
            out.update(self.classifier.parameters())
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.summary.load_state_dict(state)
        self.flow.load_state_dict(state)
        if self.classifier is not None:
            self.classifier.load_state_dict(state)

    def summarize(self, x) -> np.ndarray:
        with ad.no_grad():
            return self.summary(x).data

    def sample(self, x, n_samples: int, rng: np.random.Generator) -> np.ndarray:
        return self.flow.sample(self.summarize(x), n_samples, rng)
