"""Gaussian-means and noisy-camera simulators with their misspecification variants."""

from .camera import (
    BASE_BLUR,
    ImageSource,
    ImageSourceExhausted,
    blackout_rows,
    camera_forward,
    downscale_antialias,
    gaussian_blur,
    make_image_source,
    narrow_margins,
    salt_pepper,
    surrogate_digits,
)
from .gaussian import AnalyticPosterior, analytic_posterior, analytic_posterior_batch
from .idx import IdxFormatError, encode_idx, load_idx, parse_idx, write_idx
from .scenario import (
    ScenarioSpec,
    SimulationBatch,
    blur_sigma,
    draw_batch,
    load_scenario,
    sample_prior,
    simulate,
    simulate_dataset,
)

__all__ = [
    "AnalyticPosterior", "BASE_BLUR", "IdxFormatError", "ImageSource", "ImageSourceExhausted",
    "ScenarioSpec", "SimulationBatch", "analytic_posterior", "analytic_posterior_batch",
    "blackout_rows", "blur_sigma", "camera_forward", "downscale_antialias", "draw_batch",
    "encode_idx", "gaussian_blur", "load_idx", "load_scenario", "make_image_source",
    "narrow_margins", "parse_idx", "salt_pepper", "sample_prior", "simulate",
    "simulate_dataset", "surrogate_digits", "write_idx",
]
