"""Noisy camera model, image contaminations and digit image sources.

Images are flattened 16x16 vectors with pixel values in [-1, 1]; every
function accepts a single image ``(256,)`` or a batch ``(N, 256)``.
"""

from __future__ import annotations

import math
from os import PathLike

import numpy as np
from scipy import ndimage
from skimage.transform import resize

from .idx import load_idx

SIDE = 16
N_PIXELS = SIDE * SIDE
BASE_BLUR = 1.4
POISSON_LEVELS = 256


def _as_batch(image) -> tuple[np.ndarray, bool]:
    image = np.asarray(image, dtype=float)
    single = image.ndim == 1
    batch = image[None] if single else image
    if batch.ndim != 2 or batch.shape[1] != N_PIXELS:
        raise ValueError(f"expected flattened {SIDE}x{SIDE} image(s), got shape {image.shape}")
    return batch, single


def gaussian_blur(image, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, radius ceil(4 sigma), reflect padding."""
    if not sigma > 0:
        raise ValueError("blur sigma must be positive")
    batch, single = _as_batch(image)
    grid = batch.reshape(-1, SIDE, SIDE)
    r = int(math.ceil(4.0 * sigma))
    out = ndimage.gaussian_filter(grid, sigma=(0.0, sigma, sigma), mode="reflect",
                                  radius=(0, r, r))
    out = out.reshape(-1, N_PIXELS)
    return out[0] if single else out


def camera_forward(image, blur_sigma: float, rng: np.random.Generator,
                   levels: int = POISSON_LEVELS) -> np.ndarray:
    """Clip, Poisson shot noise at ``levels`` intensity quanta, then blur."""
    batch, single = _as_batch(image)
    if not blur_sigma > 0:
        raise ValueError("blur sigma must be positive")
    unit = (np.clip(batch, -1.0, 1.0) + 1.0) / 2.0
    noisy = rng.poisson(unit * levels) / levels
    out = gaussian_blur(2.0 * noisy - 1.0, blur_sigma)
    return out[0] if single else out


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def salt_pepper(image, frac: float, rng: np.random.Generator) -> np.ndarray:
    """Set ``round(frac * 256)`` distinct pixels per image to -1 or +1 at random."""
    if not 0.0 <= frac <= 1.0:
        raise ValueError("frac must lie in [0, 1]")
    batch, single = _as_batch(image)
    out = batch.copy()
    count = _round_half_up(frac * N_PIXELS)
    for row in out:
        idx = rng.choice(N_PIXELS, size=count, replace=False)
        row[idx] = rng.choice((-1.0, 1.0), size=count)
    return out[0] if single else out


def blackout_rows(image, rows: int, rng: np.random.Generator) -> np.ndarray:
    """Set ``rows`` distinct image rows to black (-1)."""
    if not 0 <= rows <= SIDE:
        raise ValueError(f"rows must lie in [0, {SIDE}]")
    batch, single = _as_batch(image)
    out = batch.copy().reshape(-1, SIDE, SIDE)
    for img in out:
        img[rng.choice(SIDE, size=rows, replace=False)] = -1.0
    out = out.reshape(-1, N_PIXELS)
    return out[0] if single else out


def downscale_antialias(image28) -> np.ndarray:
    """28x28 grey levels in [0, 255] to a 16x16 grid in [-1, 1].

    Gaussian pre-filter with sigma (28/16 - 1) / 2 followed by bilinear resampling.
    """
    image28 = np.asarray(image28, dtype=float)
    if image28.shape != (28, 28):
        raise ValueError(f"expected a 28x28 image, got {image28.shape}")
    small = resize(image28 / 255.0, (SIDE, SIDE), order=1, mode="reflect",
                   anti_aliasing=True, anti_aliasing_sigma=(28 / SIDE - 1) / 2,
                   preserve_range=True)
    return np.clip(2.0 * small - 1.0, -1.0, 1.0)


def narrow_margins(image, crop: int = 2) -> np.ndarray:
    """Centre-crop ``crop`` pixels per side and rescale back to 16x16.

    Stands in for USPS-style digits, which fill more of the frame.
    """
    batch, single = _as_batch(image)
    out = np.empty_like(batch)
    for i, img in enumerate(batch.reshape(-1, SIDE, SIDE)):
        inner = img[crop:SIDE - crop, crop:SIDE - crop]
        out[i] = resize(inner, (SIDE, SIDE), order=1, mode="edge",
                        anti_aliasing=False, preserve_range=True).reshape(-1)
    out = np.clip(out, -1.0, 1.0)
    return out[0] if single else out


class ImageSourceExhausted(RuntimeError):
    pass


class ImageSource:
    """A finite pool of 16x16 images handed out without replacement."""

    def __init__(self, images: np.ndarray, name: str, surrogate: bool = False):
        images = np.asarray(images, dtype=float).reshape(-1, N_PIXELS)
        self.images = images
        self.name = name
        self.surrogate = surrogate
        self._cursor = 0

    def __len__(self) -> int:
        return len(self.images)

    @property
    def remaining(self) -> int:
        return len(self.images) - self._cursor

    def take(self, n: int) -> np.ndarray:
        if n > self.remaining:
            raise ImageSourceExhausted(
                f"image source {self.name!r} has {self.remaining} images left, {n} requested")
        out = self.images[self._cursor:self._cursor + n]
        self._cursor += n
        return out.copy()

    def split(self, n: int) -> tuple["ImageSource", "ImageSource"]:
        """First ``n`` remaining images and the rest as two independent sources."""
        head = self.take(n)
        tail = self.take(self.remaining)
        return (ImageSource(head, self.name, self.surrogate),
                ImageSource(tail, self.name, self.surrogate))


def _jittered_digit(base8: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """8x8 digit (0..16) to a 28x28 frame (0..255) with a 20x20 box and random affine jitter."""
    box = ndimage.zoom(base8 * (255.0 / 16.0), 20 / 8, order=1)
    canvas = np.zeros((28, 28))
    canvas[4:24, 4:24] = box
    angle = np.deg2rad(rng.uniform(-12, 12))
    scale = rng.uniform(0.9, 1.1)
    shift = rng.uniform(-1.5, 1.5, size=2)
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]) / scale
    centre = np.array([13.5, 13.5])
    offset = centre - rot @ (centre + shift)
    out = ndimage.affine_transform(canvas, rot, offset=offset, order=1, mode="constant")
    return np.clip(out, 0.0, 255.0)


def surrogate_digits(n: int, rng: np.random.Generator) -> np.ndarray:
    """MNIST-like 16x16 digits rendered offline from scikit-learn's 8x8 digit set."""
    from sklearn.datasets import load_digits

    base = load_digits().images
    picks = rng.integers(0, len(base), size=n)
    return np.stack([downscale_antialias(_jittered_digit(base[i], rng)).reshape(-1) for i in picks])


def make_image_source(kind: str, n: int, rng: np.random.Generator,
                      idx_path: str | PathLike | None = None) -> ImageSource:
    """Build an ``"mnist"`` or ``"usps"`` image pool of ``n`` images.

    With ``idx_path`` the images come from an IDX file (28x28 images are
    downscaled; 16x16 images are used as is). Without it a procedural
    surrogate is generated and the source is flagged ``surrogate=True``.
    """
    if kind not in ("mnist", "usps"):
        raise ValueError(f"unknown image source {kind!r}")
    if idx_path is not None:
        raw = load_idx(idx_path, expect="images")
        order = rng.permutation(len(raw))[:n]
        if raw.shape[1:] == (28, 28):
            imgs = np.stack([downscale_antialias(raw[i]).reshape(-1) for i in order])
        elif raw.shape[1:] == (SIDE, SIDE):
            imgs = raw[order].reshape(-1, N_PIXELS) / 127.5 - 1.0
        else:
            raise ValueError(f"unsupported IDX image size {raw.shape[1:]}")
        return ImageSource(imgs, kind)
    imgs = surrogate_digits(n, rng)
    if kind == "usps":
        imgs = narrow_margins(imgs)
    return ImageSource(imgs, kind, surrogate=True)
