"""Synthetic noise models and blind noise-level estimators.

Intensity convention: images live on [0, 1]; sigma here is on that scale
(divide a 0-255 sigma by 255). Poisson corruption draws counts ~ Poisson(
alpha * x) and returns both the normalized image counts/alpha and the raw
counts, since the level estimator is defined on counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .image import Image

# median(|N(0, s^2)|) = 0.6745 * s: the MAD-to-sigma normalizer.
_MAD_TO_SIGMA = 0.6745


@dataclass(frozen=True)
class AwgnNoise:
    sigma: float  # on the [0, 1] intensity scale

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class PoissonNoise:
    alpha: float  # expected counts per unit intensity

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")


NoiseModel = Union[AwgnNoise, PoissonNoise]


class PoissonSample(NamedTuple):
    image: Image          # counts / alpha, the normalized noisy image
    counts: np.ndarray    # raw counts, float64 (h, w, c)


def add_awgn(img: Image, sigma: float, rng: np.random.Generator) -> Image:
    """y = x + N(0, sigma^2) elementwise. The result is NOT clamped to [0, 1]."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    return Image(img.data + sigma * rng.standard_normal(img.data.shape))


def add_poisson(img: Image, alpha: float, rng: np.random.Generator) -> PoissonSample:
    """Draw counts ~ Poisson(alpha * x) and return (counts/alpha, counts)."""
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    if (img.data < 0).any():
        raise ValueError("Poisson corruption requires a non-negative image")
    counts = rng.poisson(alpha * img.data)
    return PoissonSample(Image(counts / alpha), counts)


def estimate_sigma(img: Image) -> float:
    """Robust AWGN level estimate: MAD of the finest diagonal Haar details.

    The orthonormal diagonal detail of a 2x2 block is (a - b - c + d) / 2,
    which for pure noise is N(0, sigma^2); signal structure barely leaks into
    it, and the median absolute deviation ignores what does.
    """
    x = img.data
    h2, w2 = (x.shape[0] // 2) * 2, (x.shape[1] // 2) * 2
    if h2 < 2 or w2 < 2:
        raise ValueError(f"image {x.shape[:2]} too small for a 2x2 Haar step")
    x = x[:h2, :w2]
    d = (x[0::2, 0::2] - x[0::2, 1::2] - x[1::2, 0::2] + x[1::2, 1::2]) / 2.0
    return float(np.median(np.abs(d)) / _MAD_TO_SIGMA)


def estimate_alpha(counts: np.ndarray) -> float:
    """Photon-level estimate from raw counts: alpha_hat = 2 * mean(counts).

    Unbiased when the underlying clean image has mean intensity 0.5.
    """
    counts = np.asarray(counts)
    if counts.size == 0:
        raise ValueError("empty count array")
    if (counts < 0).any():
        raise ValueError("counts must be non-negative")
    return float(2.0 * counts.mean())


def residual_threshold(noise: NoiseModel) -> float:
    """Target mean squared residual for the lambda search.

    AWGN: sigma^2. Poisson on the normalized image: 1 / (2 * alpha).
    """
    if isinstance(noise, AwgnNoise):
        return noise.sigma**2
    if isinstance(noise, PoissonNoise):
        return 1.0 / (2.0 * noise.alpha)
    raise TypeError(f"expected AwgnNoise or PoissonNoise, got {type(noise).__name__}")


def threshold_db(noise: NoiseModel) -> float:
    """The residual threshold expressed as -10*log10(tau), i.e. a PSNR floor."""
    return -10.0 * math.log10(residual_threshold(noise))
