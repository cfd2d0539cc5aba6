"""Shared fixtures.

The expensive fixture here is ``desk_model``: a 5000-step training run on a
128x128 crop at sigma=25.  It is session-scoped because several acceptance
criteria (offset ablation, denoising gain, entropy-model sanity) probe the
same trained network.  Everything else is cheap.
"""

import time
from dataclasses import dataclass

import numpy as np
import pytest

from zsncd.denoiser import TrainConfig, TrainResult, train
from zsncd.image import Image, psnr
from zsncd.noise import add_awgn

SIGMA_25 = 25.0 / 255.0


def _cameraman() -> np.ndarray:
    """256x256 grayscale test image in [0, 1] (2x2-mean downsample of the
    classic 512x512 camera photograph)."""
    import skimage.data

    full = skimage.data.camera().astype(np.float64)
    return full.reshape(256, 2, 256, 2).mean(axis=(1, 3)) / 255.0


@pytest.fixture(scope="session")
def cameraman() -> np.ndarray:
    return _cameraman()


@pytest.fixture(scope="session")
def clean_crop(cameraman) -> Image:
    # central-ish 128x128 crop: face, tripod, background detail
    return Image(cameraman[64:192, 64:192])


@pytest.fixture(scope="session")
def noisy_crop(clean_crop) -> Image:
    return add_awgn(clean_crop, SIGMA_25, np.random.default_rng(0))


@dataclass
class DeskRun:
    result: TrainResult
    clean: Image
    noisy: Image
    noisy_psnr: float
    train_seconds: float
    config: TrainConfig


@pytest.fixture(scope="session")
def desk_model(clean_crop, noisy_crop) -> DeskRun:
    cfg = TrainConfig(lam=850.0, total_steps=5000, seed=0)
    t0 = time.perf_counter()
    result = train(noisy_crop, cfg)
    elapsed = time.perf_counter() - t0
    return DeskRun(result, clean_crop, noisy_crop,
                   psnr(clean_crop, noisy_crop), elapsed, cfg)
