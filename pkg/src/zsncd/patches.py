"""Overlapping patch bookkeeping: extraction, sampling, and aggregation.

The index set I of a (h, w) image with patch size k is every top-left corner
(i, j) with 0 <= i <= h-k and 0 <= j <= w-k, in row-major order. Denoising
reconstructs each patch and averages the overlapping reconstructions, so each
pixel is the mean of every patch that covers it.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class PatchIndexSet:
    """All fully-in-bounds k x k patch positions of an (h, w) image."""

    def __init__(self, h: int, w: int, k: int):
        if k < 1:
            raise ValueError(f"patch size must be positive, got {k}")
        if k > h or k > w:
            raise ValueError(f"patch size {k} exceeds image {h}x{w}")
        self.h, self.w, self.k = h, w, k
        self.rows = h - k + 1
        self.cols = w - k + 1

    def __len__(self) -> int:
        return self.rows * self.cols

    def indices(self) -> np.ndarray:
        """(|I|, 2) array of (i, j) corners in row-major order."""
        ii, jj = np.meshgrid(np.arange(self.rows), np.arange(self.cols), indexing="ij")
        return np.stack([ii.ravel(), jj.ravel()], axis=1)


def extract(img: np.ndarray, i: int, j: int, k: int) -> np.ndarray:
    """Copy the k x k patch with top-left corner (i, j) from an (h, w, c) array."""
    h, w = img.shape[:2]
    if not (0 <= i <= h - k and 0 <= j <= w - k):
        raise ValueError(f"patch ({i}, {j}) of size {k} out of bounds for {h}x{w}")
    return img[i : i + k, j : j + k].copy()

def extract_batch(img: np.ndarray, idx: np.ndarray, k: int) -> np.ndarray:
    """Gather patches for an (m, 2) corner array -> (m, k, k, c)."""
    win = sliding_window_view(img, (k, k), axis=(0, 1))  # (rows, cols, c, k, k)
    out = win[idx[:, 0], idx[:, 1]]  # (m, c, k, k)
    return np.ascontiguousarray(out.transpose(0, 2, 3, 1))


def sample_minibatch(index_set: PatchIndexSet, m: int, rng: np.random.Generator) -> np.ndarray:
    """m corners drawn uniformly with replacement from I."""
    n = len(index_set)
    if n == 0:
        raise ValueError("empty patch index set")
    flat = rng.integers(0, n, size=m)
    return np.stack([flat // index_set.cols, flat % index_set.cols], axis=1)


def coverage_map(h: int, w: int, k: int) -> np.ndarray:
    """(h, w) int array: how many patches of the full index set cover each pixel.

    Coverage is separable: along one axis of length n a pixel at position i is
    covered by min(i, n-k) - max(0, i-k+1) + 1 patch rows.
    """
    def axis_counts(n: int) -> np.ndarray:
        i = np.arange(n)
        return np.minimum(i, n - k) - np.maximum(0, i - k + 1) + 1

    PatchIndexSet(h, w, k)  # validates k against the image
    return axis_counts(h)[:, None] * axis_counts(w)[None, :]


def _scatter_indices(idx: np.ndarray, k: int):
    off = np.arange(k)
    ii = idx[:, 0, None, None] + off[None, :, None]
    jj = idx[:, 1, None, None] + off[None, None, :]
    return ii, jj


def aggregate(idx: np.ndarray, patches: np.ndarray, h: int, w: int) -> np.ndarray:
    """Average overlapping patches onto an (h, w, c) float64 canvas.

    Every pixel must be covered by at least one supplied patch.
    """
    m, k = patches.shape[0], patches.shape[1]
    if idx.shape != (m, 2):
        raise ValueError(f"index array {idx.shape} does not match {m} patches")
    c = patches.shape[3]
    acc = np.zeros((h, w, c), dtype=np.float64)
    cnt = np.zeros((h, w), dtype=np.int64)
    ii, jj = _scatter_indices(idx, k)
    np.add.at(acc, (ii, jj), patches.astype(np.float64))
    np.add.at(cnt, (ii, jj), 1)
    if (cnt == 0).any():
        raise ValueError("aggregation left uncovered pixels")
    return acc / cnt[:, :, None]


def aggregate_single_offset(idx: np.ndarray, patches: np.ndarray, offset: tuple[int, int],
                            h: int, w: int) -> np.ndarray:
    """Reconstruct using only the patch at one in-patch offset per pixel.

    Pixel (i, j) is taken from the patch whose corner is (i - a, j - b) for
    offset (a, b), clamped to the nearest valid corner near the borders (where
    the exact corner would fall outside the index set).
    """
    m, k = patches.shape[0], patches.shape[1]
    a, b = offset
    if not (0 <= a < k and 0 <= b < k):
        raise ValueError(f"offset {offset} outside the k x k patch")
    rows, cols = h - k + 1, w - k + 1
    pos = np.full(rows * cols, -1, dtype=np.int64)
    pos[idx[:, 0] * cols + idx[:, 1]] = np.arange(m)

    ri = np.clip(np.arange(h) - a, 0, rows - 1)  # chosen corner row per pixel row
    cj = np.clip(np.arange(w) - b, 0, cols - 1)
    p = pos[ri[:, None] * cols + cj[None, :]]
    if (p < 0).any():
        raise ValueError("needed patch missing from the supplied set")
    di = np.arange(h)[:, None] - ri[:, None]  # in-patch position, broadcast 2-D
    dj = np.arange(w)[None, :] - cj[None, :]
    return patches.astype(np.float64)[
        p, np.broadcast_to(di, p.shape), np.broadcast_to(dj, p.shape)
    ]
