"""Images as float arrays on [0, 1], binary PGM/PPM I/O, and quality metrics.

Pixel data is stored as a float64 array of shape (height, width, channels) in
row-major order, channels last (1 for grayscale, 3 for RGB). Values are
nominally on [0, 1] but are never silently clamped: noisy images legitimately
carry values outside that range and only the writer quantizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .errors import (
    MalformedHeaderError,
    TruncatedPayloadError,
    UnsupportedMaxvalError,
)

_MAXVAL = 255

# SSIM constants: 11x11 Gaussian window with sigma 1.5 and the usual
# stabilizers C1 = (0.01)^2, C2 = (0.03)^2 on the [0, 1] dynamic range.
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


@dataclass
class Image:
    """A float image, shape (h, w, c) with c in {1, 3}."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, c) with c in {{1, 3}}, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"empty image: shape {arr.shape}")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def to_grayscale(img: Image) -> Image:
    """Channel-mean grayscale conversion; a no-op for single-channel images."""
    if img.channels == 1:
        return Image(img.data.copy())
    return Image(img.data.mean(axis=2, keepdims=True))


# --- PGM (P5) / PPM (P6) ----------------------------------------------------


def _read_header_tokens(buf: bytes, count: int, pos: int) -> tuple[list[bytes], int]:
    """Read `count` whitespace-delimited tokens, honoring '#' comments."""
    tokens: list[bytes] = []
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace() and buf[pos : pos + 1] != b"#":
            pos += 1
        if pos == start:
            raise MalformedHeaderError("unexpected end of header")
        tokens.append(buf[start:pos])
    return tokens, pos


def read_image(path: str | Path) -> Image:
    """Read a binary PGM (P5) or PPM (P6) file with maxval 255.

    Returns intensities divided by 255, so the result lies on [0, 1].
    """
    buf = Path(path).read_bytes()
    if len(buf) < 2:
        raise MalformedHeaderError("file too short for a magic number")
    magic = buf[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise MalformedHeaderError(f"unsupported magic {magic!r}; expected P5 or P6")

    tokens, pos = _read_header_tokens(buf, 3, 2)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise MalformedHeaderError(f"non-integer header token: {exc}") from exc
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"invalid dimensions {width}x{height}")
    if maxval != _MAXVAL:
        raise UnsupportedMaxvalError(f"maxval {maxval} not supported; only 255")
    # Exactly one whitespace byte separates the header from the payload.
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise MalformedHeaderError("missing whitespace after maxval")
    pos += 1

    expected = width * height * channels
    payload = buf[pos : pos + expected]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"payload has {len(payload)} bytes, expected {expected}"
        )
    arr = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / _MAXVAL
    return Image(arr.reshape(height, width, channels))


def write_image(img: Image, path: str | Path) -> None:
    """Write PGM for 1-channel and PPM for 3-channel images.

    Values are clamped to [0, 1] and quantized with round-half-up:
    byte = floor(255*v + 0.5).
    """
    data = np.clip(img.data, 0.0, 1.0)
    quant = np.floor(data * _MAXVAL + 0.5).astype(np.uint8)
    magic = b"P5" if img.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n%d\n" % (img.width, img.height, _MAXVAL)
    Path(path).write_bytes(header + quant.tobytes())


# --- metrics ----------------------------------------------------------------


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB on the [0, 1] scale, capped at 100."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return 100.0
    return min(-10.0 * math.log10(mse), 100.0)


def _gaussian_taps(window: int, sigma: float) -> np.ndarray:
    r = window // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    taps = np.exp(-(x**2) / (2.0 * sigma**2))
    return taps / taps.sum()


def _window_mean(a: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable Gaussian-weighted local mean, valid region only."""
    r = len(taps) // 2
    out = correlate1d(a, taps, axis=0, mode="constant")
    out = correlate1d(out, taps, axis=1, mode="constant")
    return out[r:-r, r:-r]


def ssim(a: Image, b: Image) -> float:
    """Mean structural similarity over all fully valid 11x11 windows.

    RGB inputs are first converted to grayscale by channel mean.
    """
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    x = to_grayscale(a).data[:, :, 0]
    y = to_grayscale(b).data[:, :, 0]
    if min(x.shape) < _SSIM_WINDOW:
        raise ValueError(
            f"image {x.shape} smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} window"
        )
    taps = _gaussian_taps(_SSIM_WINDOW, _SSIM_SIGMA)
    mx = _window_mean(x, taps)
    my = _window_mean(y, taps)
    mxx = _window_mean(x * x, taps)
    myy = _window_mean(y * y, taps)
    mxy = _window_mean(x * y, taps)
    vx = np.maximum(mxx - mx * mx, 0.0)
    vy = np.maximum(myy - my * my, 0.0)
    cov = mxy - mx * my
    num = (2.0 * mx * my + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
    den = (mx * mx + my * my + _SSIM_C1) * (vx + vy + _SSIM_C2)
    return float(np.mean(num / den))
