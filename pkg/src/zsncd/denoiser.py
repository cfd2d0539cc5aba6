"""Zero-shot training and denoising on a single noisy image.

A small patch codec is trained on minibatches of overlapping patches of the
noisy image itself, minimizing per patch

    distortion(g(f(P) + u), P) + lambda * bits(f(P) + u)

where u is the uniform rounding relaxation. Denoising then encodes every
patch in the index set, rounds the latents, decodes, and averages the
overlapping reconstructions pixelwise.

Distortion is squared error summed over the patch on the 0-255 intensity
scale (one named constant below); rate is the total code length in bits. The
per-noise-level default lambdas assume exactly this scaling.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .codec import CodecParams, build
from .entropy import channels_last_matrix, matrix_to_latent, quantize
from .errors import DivergenceError
from .image import Image
from .noise import AwgnNoise, NoiseModel, PoissonNoise, residual_threshold
from .optim import Adam, lr_schedule
from .patches import PatchIndexSet, aggregate, extract_batch, sample_minibatch
from .pool import map_chunks

# Squared error is accumulated on the 0-255 intensity scale: with rate in
# bits, this is the scaling under which the default lambdas below balance the
# two terms.
DISTORTION_SCALE = 255.0**2

# Floor inside log() of the Poisson likelihood distortion.
C_FLOOR = 1e-4

_DENOISE_CHUNK = 512

# Default lambda by dataset profile, noise family, and 0-255 noise level.
_LAMBDA_TABLE = {
    "set11-gray": {
        "awgn": {15: 300.0, 25: 850.0, 50: 3000.0},
        "poisson": {15: 3000.0, 25: 1500.0, 50: 1000.0},
    },
    "kodak-rgb": {
        "awgn": {15: 75.0, 25: 150.0, 50: 750.0},
        "poisson": {15: 750.0, 25: 300.0, 50: 150.0},
    },
}

LAMBDA_FALLBACK = 500.0


@dataclass
class TrainConfig:
    lam: float
    variant: str = "conv"
    k: int = 8
    total_steps: int = 20000
    minibatch: int = 32
    seed: int = 0
    distortion: str = "mse"  # "mse" or "poisson_nll"
    alpha: float | None = None  # required by poisson_nll
    kernel_size: int = 3

    def __post_init__(self):
        if self.distortion not in ("mse", "poisson_nll"):
            raise ValueError(f"unknown distortion {self.distortion!r}")
        if self.distortion == "poisson_nll" and not self.alpha:
            raise ValueError("poisson_nll distortion needs alpha")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


class TrainResult(NamedTuple):
    params: CodecParams
    history: list  # rows of (step, distortion, rate_bits, lr), per-patch means


@dataclass
class DenoiseResult:
    estimate: Image
    residual: float        # mean squared deviation from the noisy input, [0,1] scale
    rate_bits: float       # mean code length per patch, bits
    steps_trained: int


# --- the objective -----------------------------------------------------------


def _distortion_mse(recon: np.ndarray, target: np.ndarray):
    diff = recon - target
    val = DISTORTION_SCALE * float(np.sum(diff.astype(np.float64) ** 2))
    grad = (2.0 * DISTORTION_SCALE) * diff
    return val, grad


def _distortion_poisson_nll(recon: np.ndarray, target: np.ndarray, alpha: float):
    counts = alpha * target.astype(np.float64)
    c = np.maximum(recon.astype(np.float64), C_FLOOR)
    val = float(np.sum(alpha * recon.astype(np.float64) - counts * np.log(c)))
    grad = alpha - np.where(recon > C_FLOOR, counts / c, 0.0)
    return val, grad.astype(recon.dtype)


def batch_objective(params: CodecParams, batch: np.ndarray, lam: float,
                    cfg: TrainConfig, noise: np.ndarray | None,
                    compute_grads: bool = True):
    """Mean-per-patch loss over a batch; optionally accumulates param grads.

    `noise` is the additive rounding relaxation, same shape as the latent; if
    None the latents are used as-is (evaluation behavior without rounding).
    Returns (loss, distortion, rate_bits), each a per-patch mean.
    """
    m = batch.shape[0]
    latent = params.encode(batch, cache=compute_grads)
    z = latent + noise if noise is not None else latent
    zmat = channels_last_matrix(z, params.n_b)
    if compute_grads:
        # grad_scale folds the lam/m loss weighting into both the value
        # gradient and the density parameter gradients it accumulates.
        bits, dz_mat = params.density.bits_with_grad(zmat, grad_scale=lam / m)
    else:
        bits = params.density.bits(zmat)
    recon = params.decode(z, cache=compute_grads)
    if cfg.distortion == "mse":
        dist, ddist = _distortion_mse(recon, batch)
    else:
        dist, ddist = _distortion_poisson_nll(recon, batch, cfg.alpha)
    loss = (dist + lam * bits) / m

    if compute_grads:
        g = params.decoder_backward(ddist / m)
        g = g + matrix_to_latent(dz_mat, z.shape).astype(g.dtype)
        params.encoder_backward(g)
    return loss, dist / m, bits / m


def patch_loss(params: CodecParams, patch: np.ndarray, cfg: TrainConfig,
               rng: np.random.Generator) -> float:
    """Single-patch training objective with a fresh relaxation draw."""
    batch = np.asarray(patch, dtype=params.dtype)[None]
    latent_shape = params.encode(batch).shape
    noise = rng.uniform(-0.5, 0.5, size=latent_shape).astype(params.dtype)
    loss, _, _ = batch_objective(params, batch, cfg.lam, cfg, noise,
                                 compute_grads=False)
    return loss


# --- training ----------------------------------------------------------------


def train(y: Image, cfg: TrainConfig, *, params: CodecParams | None = None,
          loss_csv: str | Path | None = None) -> TrainResult:
    """Fit a codec to the noisy image; warm-starts from `params` if given."""
    if params is None:
        params = build(cfg.variant, cfg.k, y.channels, seed=cfg.seed,
                       kernel_size=cfg.kernel_size)
    elif (params.variant, params.k, params.channels) != (cfg.variant, cfg.k, y.channels):
        raise ValueError("warm-start params do not match the config/image")

    arr = y.data.astype(params.dtype)
    index_set = PatchIndexSet(y.height, y.width, cfg.k)
    # Seeding by (seed, resume point) keeps reruns bit-identical while giving
    # warm-started continuation runs a fresh, but still deterministic, stream.
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, params.steps_trained]))
    opt = Adam(params.parameters())
    history = []

    for _ in range(cfg.total_steps):
        step = params.steps_trained
        lr = lr_schedule(step, cfg)
        idx = sample_minibatch(index_set, cfg.minibatch, rng)
        batch = extract_batch(arr, idx, cfg.k)
        latent_shape = (cfg.minibatch, 1, 1, params.n_b) if cfg.variant == "conv" \
            else (cfg.minibatch, params.n_b)
        noise = rng.uniform(-0.5, 0.5, size=latent_shape).astype(params.dtype)
        opt.zero_grads()
        loss, dist, bits = batch_objective(params, batch, cfg.lam, cfg, noise)
        if not math.isfinite(loss):
            raise DivergenceError(step)
        opt.step(lr)
        params.steps_trained += 1
        history.append((step, dist, bits, lr))

    if loss_csv is not None:
        with open(loss_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "distortion", "rate_bits", "lr"])
            writer.writerows(history)
    return TrainResult(params, history)


# --- denoising ---------------------------------------------------------------


def reconstruct_patches(y: Image, params: CodecParams, *, threads: int | None = 1,
                        chunk: int = _DENOISE_CHUNK):
    """Encode-round-decode every patch of the full index set.

    Returns (corner indices (m, 2), reconstructions (m, k, k, c) float32,
    total rate in bits). Chunks are processed independently (cache-free
    forwards), so threading never changes the result.
    """
    arr = y.data.astype(params.dtype)
    index_set = PatchIndexSet(y.height, y.width, params.k)
    idx = index_set.indices()

    def work(a: int, b: int):
        batch = extract_batch(arr, idx[a:b], params.k)
        z = quantize(params.encode(batch))
        bits = params.density.bits(channels_last_matrix(z, params.n_b))
        return params.decode(z), bits

    parts = map_chunks(work, len(idx), chunk, threads)
    out = np.concatenate([p[0] for p in parts], axis=0)
    total_bits = float(sum(p[1] for p in parts))
    return idx, out, total_bits


def denoise(y: Image, params: CodecParams, *, threads: int | None = 1) -> DenoiseResult:
    """Aggregate overlapping patch reconstructions into the denoised estimate."""
    idx, outputs, total_bits = reconstruct_patches(y, params, threads=threads)
    est = aggregate(idx, outputs, y.height, y.width)
    residual = float(np.mean((est - y.data) ** 2))
    return DenoiseResult(Image(est), residual, total_bits / len(idx),
                         params.steps_trained)


# --- lambda selection ----------------------------------------------------------


@dataclass
class LambdaSearchConfig:
    lam0: float
    tau: float                 # residual target, [0,1]^2 scale
    tol: float = 0.1
    zeta: float = 0.5
    k_max: int = 12
    probe_steps: int = 2000

    def __post_init__(self):
        if self.lam0 <= 0 or self.tau <= 0:
            raise ValueError("lam0 and tau must be positive")
        if self.tol <= 0 or self.zeta <= 0 or self.k_max < 1:
            raise ValueError("tol, zeta must be positive and k_max >= 1")


@dataclass
class ProbeRecord:
    iteration: int
    lam: float
    residual: float
    beta: float
    action: str  # "stop", "decrease", or "increase"


@dataclass
class LambdaSearchResult:
    lambda_star: float
    converged: bool
    probes: list[ProbeRecord] = field(default_factory=list)


def tune_lambda(y: Image, cfg: TrainConfig, search: LambdaSearchConfig, *,
                evaluate: Callable | None = None,
                threads: int | None = 1) -> LambdaSearchResult:
    """Multiplicative residual-matching search for lambda.

    Each probe trains `probe_steps` more steps at the current lambda (warm
    starting from the previous probe's weights), denoises, and compares the
    residual r against the target tau via beta = (r - tau) / tau:

        |beta| <= tol          -> stop, return this lambda
        beta > 0 (r too big)   -> lambda /= 1 + zeta*|beta|
        beta < 0 (r too small) -> lambda *= 1 + zeta*|beta|

    If k_max probes never satisfy the tolerance, the lambda with the smallest
    |beta| is returned with converged=False. `evaluate(lam, state) ->
    (residual, state)` replaces the real train+denoise probe when given.
    """
    if evaluate is None:
        def evaluate(lam: float, state: CodecParams | None):
            probe_cfg = replace(cfg, lam=lam, total_steps=search.probe_steps)
            state = train(y, probe_cfg, params=state).params
            return denoise(y, state, threads=threads).residual, state

    lam = search.lam0
    state = None
    probes: list[ProbeRecord] = []
    for it in range(search.k_max):
        residual, state = evaluate(lam, state)
        beta = (residual - search.tau) / search.tau
        if abs(beta) <= search.tol:
            probes.append(ProbeRecord(it, lam, residual, beta, "stop"))
            return LambdaSearchResult(lam, True, probes)
        if beta > 0:
            action, nxt = "decrease", lam / (1.0 + search.zeta * abs(beta))
        else:
            action, nxt = "increase", lam * (1.0 + search.zeta * abs(beta))
        probes.append(ProbeRecord(it, lam, residual, beta, action))
        lam = nxt
    best = min(probes, key=lambda p: abs(p.beta))
    return LambdaSearchResult(best.lam, False, probes)


def default_lambda(profile: str, noise: NoiseModel) -> float:
    """Table lookup of the per-profile default lambda for a noise level."""
    try:
        table = _LAMBDA_TABLE[profile]
    except KeyError:
        raise ValueError(
            f"unknown profile {profile!r}; expected one of {sorted(_LAMBDA_TABLE)}"
        ) from None
    if isinstance(noise, AwgnNoise):
        family, level = "awgn", noise.sigma * 255.0
    elif isinstance(noise, PoissonNoise):
        family, level = "poisson", noise.alpha
    else:
        raise ValueError(f"unsupported noise model {noise!r}")
    for key, lam in table[family].items():
        if abs(level - key) < 1e-6:
            return lam
    raise ValueError(
        f"no default lambda for {family} level {level:g} in profile {profile!r}; "
        f"known levels: {sorted(table[family])}"
    )


def search_config_for(noise: NoiseModel, lam0: float, **overrides) -> LambdaSearchConfig:
    """LambdaSearchConfig with tau set from the noise model's residual target."""
    return LambdaSearchConfig(lam0=lam0, tau=residual_threshold(noise), **overrides)
