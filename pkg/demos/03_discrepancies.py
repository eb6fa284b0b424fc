"""
Kernel discrepancies and gradient reversal
==========================================
"""

# %%
import numpy as np

from robustnpe import autodiff as ad
from robustnpe.losses import KernelSpec, NnpeConfig, imq_gram, mmd2_biased, spike_slab_noise

rng = np.random.default_rng(2)

# %% [markdown]
# The kernel is a sum of inverse multiquadrics over five scales.
# A Gram matrix of a set with itself is positive semi-definite.

# %%
A = rng.standard_normal((200, 3))
K = imq_gram(A, A)
print("smallest Gram eigenvalue", np.linalg.eigvalsh(K).min())
print("kernel scales", KernelSpec().scales)

# %%
# identical sets give exactly zero; the value grows with a mean shift
print("mmd2(A, A) =", mmd2_biased(A, A))
for shift in (0.0, 0.25, 0.5, 1.0, 2.0):
    B = rng.standard_normal((200, 3)) + shift
    print(f"shift {shift:4.2f}  mmd2 {mmd2_biased(A, B):.5f}")

# %% [markdown]
# Gradient reversal is the identity going forward and flips (and scales)
# the gradient going back. DANN uses it so that one backward pass trains
# the classifier to separate domains while the summary network learns to
# confuse it.

# %%
v = ad.parameter(np.array([1.0, -2.0, 3.0]), "v")
out = (ad.grad_reverse(v, weight=0.5) * ad.Tensor(np.array([1.0, 1.0, 1.0]))).sum()
print("forward", ad.grad_reverse(v).data, "grad", ad.grad(out, {"v": v})["v"])

# %% [markdown]
# NNPE instead hardens the estimator against outliers. Each simulated
# value has a 50/50 chance of a tiny Gaussian spike or a Cauchy slab.

# %%
noise, is_spike = spike_slab_noise((100_000,), NnpeConfig(), rng)
print("spike fraction", is_spike.mean())
print("spike std", noise[is_spike].std())
print("slab quartiles", np.quantile(noise[~is_spike], [0.25, 0.75]).round(3))
