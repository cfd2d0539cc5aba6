"""Patch autoencoders (conv and MLP variants) and their checkpoint format.

Both variants expose the same surface — encode / decode / parameters — so the
trainer never branches on the architecture:

* conv: stride-2 3x3 convolutions (128 channels except the bottleneck) with
  GDN between them, until the spatial size reaches 1x1; the decoder mirrors
  with transposed convolutions and inverse GDN. Bottleneck width is 32 for RGB
  and 16 for grayscale.
* mlp: 3 dense layers of 1024, 1024, 16 units with ReLU between them; the
  decoder mirrors. The bottleneck is 16 regardless of channel count.

Patch size k is 8 or 16 (the conv path downsamples k -> 1 in log2(k) stages).

Checkpoints are a flat little-endian binary format: magic "ZNCD", a format
version, the architecture fields, every parameter tensor as a shape header
plus float32 payload, and a trailing CRC-32 over everything after the magic.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .entropy import FactorizedDensity
from .errors import (
    BadMagicError,
    ChecksumError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from .nn import GDN, Conv2d, ConvTranspose2d, Dense, Layer, ReLU

MAGIC = b"ZNCD"
FORMAT_VERSION = 1

_VARIANTS = ("conv", "mlp")
_HIDDEN_CONV = 128
_HIDDEN_MLP = 1024
_BOTTLENECK_MLP = 16


def bottleneck_width(variant: str, channels: int) -> int:
    if variant == "mlp":
        return _BOTTLENECK_MLP
    return 32 if channels == 3 else 16


class CodecParams:
    """All state of one patch codec: layers, entropy model, and bookkeeping."""

    def __init__(self, variant: str, k: int, channels: int, kernel_size: int,
                 encoder: list[Layer], decoder: list[Layer],
                 density: FactorizedDensity, dtype):
        self.variant = variant
        self.k = k
        self.channels = channels
        self.kernel_size = kernel_size
        self.encoder = encoder
        self.decoder = decoder
        self.density = density
        self.dtype = dtype
        self.n_b = density.channels
        self.steps_trained = 0

    def parameters(self) -> list:
        out = []
        for layer in [*self.encoder, *self.decoder]:
            out.extend(layer.params())
        out.extend(self.density.params())
        return out

    def param_count(self) -> int:
        return sum(p.value.size for p in self.parameters())

    def _ensure_batch(self, x: np.ndarray, patch_like: bool) -> tuple[np.ndarray, bool]:
        want = 4 if (self.variant == "conv" or patch_like) else 2
        if x.ndim == want - 1:
            return x[None], True
        if x.ndim != want:
            raise ValueError(f"bad input rank {x.ndim}")
        return x, False

    def encode(self, patches: np.ndarray, cache: bool = False) -> np.ndarray:
        """(n, k, k, c) patches -> latent (n, 1, 1, n_b) conv / (n, n_b) mlp.

        A single (k, k, c) patch yields an unbatched latent.
        """
        x, single = self._ensure_batch(np.asarray(patches, dtype=self.dtype), True)
        if x.shape[1:] != (self.k, self.k, self.channels):
            raise ValueError(f"expected patches (*, {self.k}, {self.k}, {self.channels})")
        h = x if self.variant == "conv" else x.reshape(x.shape[0], -1)
        for layer in self.encoder:
            h = layer.forward(h, cache=cache)
        return h[0] if single else h

    def decode(self, latent: np.ndarray, cache: bool = False) -> np.ndarray:
        """Latent -> reconstructed patches (n, k, k, c)."""
        z, single = self._ensure_batch(
            np.asarray(latent, dtype=self.dtype), self.variant == "conv"
        )
        h = z
        for layer in self.decoder:
            h = layer.forward(h, cache=cache)
        out = h.reshape(h.shape[0], self.k, self.k, self.channels)
        return out[0] if single else out

    def encoder_backward(self, dlatent: np.ndarray) -> np.ndarray:
        g = dlatent
        for layer in reversed(self.encoder):
            g = layer.backward(g)
        return g

    def decoder_backward(self, dout: np.ndarray) -> np.ndarray:
        g = dout.reshape(dout.shape[0], -1) if self.variant == "mlp" else dout
        for layer in reversed(self.decoder):
            g = layer.backward(g)
        return g


def build(variant: str, k: int, channels: int, *, seed: int = 0,
          kernel_size: int = 3, dtype=np.float32) -> CodecParams:
    """Construct a freshly initialized codec.

    Dense/conv kernels are Glorot-uniform, biases zero, GDN beta=1 and
    gamma=0.1*I, and the entropy model starts as a wide logistic-like CDF.
    """
    if variant not in _VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {_VARIANTS}")
    if k not in (8, 16):
        raise ValueError(f"unsupported patch size k={k}; expected 8 or 16")
    if channels not in (1, 3):
        raise ValueError(f"unsupported channel count {channels}; expected 1 or 3")
    rng = np.random.default_rng(np.random.SeedSequence([0x5ACD, seed]))
    n_b = bottleneck_width(variant, channels)
    encoder: list[Layer] = []
    decoder: list[Layer] = []

    if variant == "conv":
        stages = k.bit_length() - 1  # stride-2 stages until 1x1: 3 for k=8, 4 for k=16
        pad = kernel_size // 2
        sizes = [k >> i for i in range(stages + 1)]  # k, k/2, ..., 1
        widths = [channels] + [_HIDDEN_CONV] * (stages - 1) + [n_b]
        for i in range(stages):
            encoder.append(Conv2d(widths[i], widths[i + 1], kernel_size, 2, pad,
                                  rng, dtype, name=f"enc{i}"))
            if i < stages - 1:
                encoder.append(GDN(widths[i + 1], dtype=dtype, name=f"enc{i}.gdn"))
        for i in range(stages):
            in_c, out_c = widths[stages - i], widths[stages - i - 1]
            out_hw = (sizes[stages - i - 1], sizes[stages - i - 1])
            decoder.append(ConvTranspose2d(in_c, out_c, kernel_size, 2, pad,
                                           out_hw, rng, dtype, name=f"dec{i}"))
            if i < stages - 1:
                decoder.append(GDN(out_c, inverse=True, dtype=dtype, name=f"dec{i}.igdn"))
    else:
        flat = k * k * channels
        enc_widths = [flat, _HIDDEN_MLP, _HIDDEN_MLP, n_b]
        for i in range(3):
            encoder.append(Dense(enc_widths[i], enc_widths[i + 1], rng, dtype, name=f"enc{i}"))
            if i < 2:
                encoder.append(ReLU())
        dec_widths = [n_b, _HIDDEN_MLP, _HIDDEN_MLP, flat]
        for i in range(3):
            decoder.append(Dense(dec_widths[i], dec_widths[i + 1], rng, dtype, name=f"dec{i}"))
            if i < 2:
                decoder.append(ReLU())

    density = FactorizedDensity(n_b, rng, dtype=dtype)
    return CodecParams(variant, k, channels, kernel_size, encoder, decoder, density, dtype)


# --- checkpoints --------------------------------------------------------------


def save_checkpoint(params: CodecParams, path: str | Path) -> None:
    body = bytearray()
    body += struct.pack("<HBHBBI", FORMAT_VERSION, _VARIANTS.index(params.variant),
                        params.k, params.channels, params.kernel_size,
                        params.steps_trained)
    tensors = params.parameters()
    body += struct.pack("<I", len(tensors))
    for p in tensors:
        arr = np.ascontiguousarray(p.value, dtype="<f4")
        body += struct.pack("<B", arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += arr.tobytes()
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    Path(path).write_bytes(MAGIC + bytes(body) + struct.pack("<I", crc))


def load_checkpoint(path: str | Path) -> CodecParams:
    raw = Path(path).read_bytes()
    if len(raw) < 6:
        raise TruncatedCheckpointError(f"only {len(raw)} bytes, no complete header")
    if raw[:4] != MAGIC:
        raise BadMagicError(f"not a ZNCD checkpoint: magic {raw[:4]!r}")
    # Version precedes the CRC check: a well-formed file from a future format
    # should say so rather than fail the (possibly relocated) checksum.
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"format version {version}, supported {FORMAT_VERSION}")
    if len(raw) < 4 + 11 + 4 + 4:
        raise TruncatedCheckpointError("file shorter than the fixed header")
    body, stored_crc = raw[4:-4], struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise ChecksumError("payload CRC-32 mismatch")
    _, variant_idx, k, channels, kernel_size, steps = struct.unpack_from("<HBHBBI", body, 0)
    if variant_idx >= len(_VARIANTS):
        raise TruncatedCheckpointError(f"unknown variant tag {variant_idx}")
    pos = struct.calcsize("<HBHBBI")
    (n_tensors,) = struct.unpack_from("<I", body, pos)
    pos += 4

    params = build(_VARIANTS[variant_idx], k, channels,
                   kernel_size=kernel_size, dtype=np.float32)
    tensors = params.parameters()
    if n_tensors != len(tensors):
        raise TruncatedCheckpointError(
            f"checkpoint has {n_tensors} tensors, architecture needs {len(tensors)}"
        )
    for p in tensors:
        try:
            (ndim,) = struct.unpack_from("<B", body, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            flat = np.frombuffer(body, dtype="<f4", count=count, offset=pos)
            pos += 4 * count
        except (struct.error, ValueError) as exc:
            raise TruncatedCheckpointError(f"tensor records end early: {exc}") from exc
        if tuple(shape) != p.value.shape:
            raise TruncatedCheckpointError(
                f"tensor shape {tuple(shape)} does not match architecture {p.value.shape}"
            )
        p.value[...] = flat.reshape(shape)
    params.steps_trained = steps
    return params
