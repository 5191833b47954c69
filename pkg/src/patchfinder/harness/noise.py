"""Seeded Gaussian brightening noise for robustness experiments.

Each pixel value (on the [0, 1] scale) gains the absolute value of a Gaussian
draw and is clamped at white: ``v' = clamp(v + |g|, 0, 1)`` with
``g ~ Normal(0, sigma)``. Taking the magnitude biases the noise toward white,
so dark text on a light background fades the way poor scans do. Fully
deterministic for a given seed.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


def inject_noise(image: Image.Image, sigma: float, seed: int) -> Image.Image:
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if image.mode not in ("L", "RGB"):
        image = image.convert("RGB")
    rng = np.random.default_rng(seed)
    values = np.asarray(image, dtype=np.float64) / 255.0
    noisy = np.clip(values + np.abs(rng.normal(0.0, sigma, size=values.shape)), 0.0, 1.0)
    return Image.fromarray(np.round(noisy * 255.0).astype(np.uint8), mode=image.mode)
