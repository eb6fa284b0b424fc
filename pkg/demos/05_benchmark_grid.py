"""
A resumable benchmark grid
==========================

Grids are described by a manifest. Every cell writes its own JSON record,
so an interrupted run picks up where it stopped.
"""

# %%
from pathlib import Path

from robustnpe.harness import run_grid, write_reports

manifest = {
    "methods": ["npe", "nnpe", {"method": "npe_mmd", "lam": [0.1, 1.0]}],
    "scenarios": [
        {"family": "gaussian2d", "variant": "well_specified"},
        {"family": "gaussian2d", "variant": "contamination", "params": {"eps": 0.2}},
    ],
    "seeds": [0, 1],
    "train": {"n_sim": 3200, "n_obs": 3200},
    "eval": {"n_test": 30, "S": 50},
}

# %%
out = Path("demo_grid")
result = run_grid(manifest, out)
print(len(result.completed), "cells run,", result.skipped, "already done,", len(result.failed), "failed")

# %%
# a second call finds every cell on disk and trains nothing
again = run_grid(manifest, out)
print("skipped on rerun:", again.skipped)

# %%
paths = write_reports(out)
print(paths["csv"].read_text())

# %% [markdown]
# The radar table rescales each metric by its largest value over methods within a scenario.

# %%
print(paths["radar"].read_text())
