"""Zero-shot image denoising via patchwise neural compression.

Train a small rate-constrained autoencoder on overlapping patches of a single
noisy image; denoise by averaging the overlapping decoded patches. The
`theory` module validates the codebook-denoising error bounds that motivate
the rate constraint.
"""

__version__ = "0.1.0"

from .codec import build, load_checkpoint, save_checkpoint
from .denoiser import (
    DenoiseResult,
    LambdaSearchConfig,
    LambdaSearchResult,
    TrainConfig,
    default_lambda,
    denoise,
    patch_loss,
    train,
    tune_lambda,
)
from .image import Image, psnr, read_image, ssim, to_grayscale, write_image
from .noise import (
    AwgnNoise,
    PoissonNoise,
    add_awgn,
    add_poisson,
    estimate_alpha,
    estimate_sigma,
    residual_threshold,
)

__all__ = [
    "AwgnNoise", "DenoiseResult", "Image", "LambdaSearchConfig",
    "LambdaSearchResult", "PoissonNoise", "TrainConfig", "__version__",
    "add_awgn", "add_poisson", "build", "default_lambda", "denoise",
    "estimate_alpha", "estimate_sigma", "load_checkpoint", "patch_loss",
    "psnr", "read_image", "residual_threshold", "save_checkpoint", "ssim",
    "to_grayscale", "train", "tune_lambda", "write_image",
]
