"""Codebook denoising: constructions, error bounds, and Monte-Carlo validators.

A rate-R codebook C (at most 2^R codewords) denoises by picking the codeword
minimizing a per-sample loss:

* "awgn-mse":    argmin ||y - c||^2          (Gaussian noise, y real)
* "poisson-ml":  argmin sum(alpha*c_i - y_i*log c_i)   (y raw counts)
* "poisson-mse": argmin ||c - y/alpha||^2

`codebook_denoise` does the literal exhaustive search over an explicit
codeword matrix. For validation at realistic rates the module uses a
structured family (`SparseLevelCode`): signals are a constant base plus a
k-sparse deviation with entries in [-amplitude, amplitude], coded by exact
support enumeration plus a b-bit uniform level quantizer. All three losses
are coordinate-separable and the codebook is a union of product sets, so the
exact argmin reduces to per-coordinate best levels plus a top-k gain
selection — no enumeration, identical to exhaustive search.

The high-probability bounds validated here (failure probability 2^(2-eta*R)):

* AWGN, root-mean error:  ||x-xh||/sqrt(n) <= sqrt(delta)
                            + 2*sigma*sqrt(2*ln2*R/n) * (1 + 2*sqrt(eta))
* Poisson ML, mean squared error per coordinate, entries in (x_min, x_max):
      C1*delta + C2*sqrt(R/(n*alpha)),
      C1 = x_max^5/x_min^2,
      C2 = (x_max^2/x_min^3) * ln(1/x_min) * sqrt(4/ln2) * (sqrt(1+eta)+sqrt(eta))
* Poisson normalized-MSE: delta + C*sqrt(R/(n*alpha)),
      C = 4*sqrt(ln2) * (sqrt(1+eta)+sqrt(eta)+1)

plus the Poisson KL identity/sandwich and a Bernstein-style tail bound for
weighted sums of independent Poisson variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product
from typing import NamedTuple

import numpy as np

_LN2 = math.log(2.0)
_LOSSES = ("awgn-mse", "poisson-ml", "poisson-mse")


# --- explicit codebooks --------------------------------------------------------


@dataclass
class Codebook:
    """An explicit codeword matrix, one codeword per row."""

    codewords: np.ndarray  # (m, n) float64

    def __post_init__(self):
        cw = np.asarray(self.codewords, dtype=np.float64)
        if cw.ndim != 2 or cw.shape[0] < 1:
            raise ValueError(f"codewords must be a non-empty (m, n) matrix, got {cw.shape}")
        self.codewords = cw

    @property
    def n(self) -> int:
        return self.codewords.shape[1]

    @property
    def rate(self) -> float:
        return math.log2(self.codewords.shape[0])


def _check_loss(loss: str, alpha: float | None):
    if loss not in _LOSSES:
        raise ValueError(f"unknown loss {loss!r}; expected one of {_LOSSES}")
    if loss.startswith("poisson") and (alpha is None or alpha <= 0):
        raise ValueError("poisson losses need alpha > 0")


def codebook_denoise(y: np.ndarray, codebook: Codebook, loss: str,
                     alpha: float | None = None) -> tuple[np.ndarray, int]:
    """Exhaustive nearest-codeword search; ties go to the lowest index."""
    _check_loss(loss, alpha)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (codebook.n,):
        raise ValueError(f"observation shape {y.shape} != (n,) = ({codebook.n},)")
    cw = codebook.codewords
    if loss == "awgn-mse":
        costs = ((y[None, :] - cw) ** 2).sum(axis=1)
    elif loss == "poisson-mse":
        costs = ((y[None, :] / alpha - cw) ** 2).sum(axis=1)
    else:
        if (y < 0).any():
            raise ValueError("poisson-ml expects non-negative counts")
        if (cw <= 0).any():
            raise ValueError("poisson-ml requires strictly positive codewords")
        costs = (alpha * cw - y[None, :] * np.log(cw)).sum(axis=1)
    idx = int(np.argmin(costs))
    return cw[idx].copy(), idx


# --- structured sparse-level codes ---------------------------------------------


def _log2_comb(n: int, k: int) -> float:
    return (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)) / _LN2


@dataclass
class SparseLevelCode:
    """Support + uniform-level code for base-plus-k-sparse signals.

    Signals: x = base + s with s k-sparse, ||s||_inf <= amplitude. The encoder
    stores the support exactly and each nonzero on a 2^b-level uniform grid of
    cell centers over [-amplitude, amplitude], so the per-coordinate error is
    at most amplitude * 2^-b. b is the smallest integer making the worst-case
    per-sample squared error k * (amplitude * 2^-b)^2 / n no larger than delta.
    """

    n: int
    k: int
    delta: float
    amplitude: float = 1.0
    base: float = 0.0

    def __post_init__(self):
        if not (1 <= self.k <= self.n):
            raise ValueError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        if self.delta <= 0 or self.amplitude <= 0:
            raise ValueError("delta and amplitude must be positive")
        self.bits_per_value = max(
            1, math.ceil(0.5 * math.log2(self.k * self.amplitude**2 / (self.n * self.delta)))
        )
        m = 2**self.bits_per_value
        half_cell = self.amplitude / m
        self.levels = self.base + np.linspace(
            -self.amplitude + half_cell, self.amplitude - half_cell, m
        )
        self.worst_case_distortion = self.k * (self.amplitude / m) ** 2 / self.n

    @property
    def rate(self) -> float:
        """log2 of the exact number of distinct codewords."""
        m = 2**self.bits_per_value
        total = 0.0
        for kk in range(self.k + 1):
            total += math.comb(self.n, kk) * m**kk
        return math.log2(total)

    def rate_bound(self) -> float:
        """Closed-form bound on the rate of the construction (amplitude 1).

        (k/2)*log2(k/(n*delta)) + k*log2(n/k) + log2(k) + k*(log2(e) + 1).
        """
        k, n, d = self.k, self.n, self.delta
        return (0.5 * k * math.log2(k * self.amplitude**2 / (n * d))
                + k * math.log2(n / k) + math.log2(k) + k * (math.log2(math.e) + 1.0))

    # --- encode / decode -------------------------------------------------------

    def nearest_level(self, values: np.ndarray) -> np.ndarray:
        """Index of the closest quantizer level, elementwise."""
        m = len(self.levels)
        step = 2.0 * self.amplitude / m
        j = np.floor((np.asarray(values) - self.levels[0]) / step + 0.5)
        return np.clip(j, 0, m - 1).astype(np.int64)

    def encode(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"signal shape {x.shape} != ({self.n},)")
        dev = x - self.base
        support = np.flatnonzero(dev)
        if len(support) > self.k:
            raise ValueError(f"signal has {len(support)} nonzero deviations > k={self.k}")
        if np.abs(dev).max(initial=0.0) > self.amplitude * (1 + 1e-12):
            raise ValueError("deviation exceeds the code's amplitude")
        return support, self.nearest_level(dev[support])

    def decode(self, support: np.ndarray, level_idx: np.ndarray) -> np.ndarray:
        out = np.full(self.n, self.base)
        out[support] = self.levels[level_idx]
        return out

    # --- exact maximum-likelihood denoising ------------------------------------

    def _per_coordinate_costs(self, y: np.ndarray, loss: str, alpha: float | None):
        """Best in-support level and its cost, plus the stay-at-base cost.

        y is (t, n) (a batch of observations). All three losses decompose as
        sums of per-coordinate terms, which makes this exact.
        """
        if loss == "awgn-mse":
            target = y
        elif loss == "poisson-mse":
            target = y / alpha
        else:  # poisson-ml: convex in the level, so check the two grid
            # neighbors of the unconstrained minimizer y/alpha.
            if (self.levels <= 0).any() or self.base <= 0:
                raise ValueError("poisson-ml requires positive levels and base")
            lo = self.nearest_level(y / alpha)
            cand = [lo, np.clip(lo + 1, 0, len(self.levels) - 1),
                    np.clip(lo - 1, 0, len(self.levels) - 1)]
            costs = [alpha * self.levels[c] - y * np.log(self.levels[c]) for c in cand]
            stacked = np.stack(costs)
            pick = stacked.argmin(axis=0)
            best_cost = np.take_along_axis(stacked, pick[None], axis=0)[0]
            best_level = np.take_along_axis(np.stack(cand), pick[None], axis=0)[0]
            base_cost = alpha * self.base - y * math.log(self.base)
            return best_level, best_cost, base_cost
        idx = self.nearest_level(target)
        best_cost = (target - self.levels[idx]) ** 2
        base_cost = (target - self.base) ** 2
        return idx, best_cost, base_cost

    def ml_denoise(self, y: np.ndarray, loss: str, alpha: float | None = None) -> np.ndarray:
        """Exact argmin over all codewords for a batch of observations (t, n)."""
        _check_loss(loss, alpha)
        y = np.atleast_2d(np.asarray(y, dtype=np.float64))
        level_idx, best_cost, base_cost = self._per_coordinate_costs(y, loss, alpha)
        gain = base_cost - best_cost
        # Keep the k most beneficial switches with strictly positive gain.
        order = np.argpartition(-gain, self.k - 1, axis=1)[:, : self.k]
        xh = np.full(y.shape, self.base)
        rows = np.arange(y.shape[0])[:, None]
        chosen_gain = np.take_along_axis(gain, order, axis=1)
        chosen_levels = self.levels[np.take_along_axis(level_idx, order, axis=1)]
        keep = chosen_gain > 0
        xh[rows, order] = np.where(keep, chosen_levels, self.base)
        return xh

    def enumerate_codebook(self, limit: int = 200_000) -> Codebook:
        """Materialize every codeword (small instances only)."""
        m = 2**self.bits_per_value
        count = sum(math.comb(self.n, kk) * m**kk for kk in range(self.k + 1))
        if count > limit:
            raise ValueError(f"codebook has {count} codewords, over the {limit} limit")
        words = []
        for kk in range(self.k + 1):
            for support in combinations(range(self.n), kk):
                for lv in product(range(m), repeat=kk):
                    w = np.full(self.n, self.base)
                    w[list(support)] = self.levels[list(lv)]
                    words.append(w)
        return Codebook(np.asarray(words))


# --- error bounds ---------------------------------------------------------------


class BoundValue(NamedTuple):
    bound: float
    failure_prob: float  # 2^(2 - eta*R), capped at 1


def _failure_prob(eta: float, rate: float) -> float:
    return min(1.0, 2.0 ** (2.0 - eta * rate))


def awgn_error_bound(n: int, rate: float, delta: float, eta: float,
                     sigma: float) -> BoundValue:
    """High-probability bound on ||x - xh||_2 / sqrt(n) for MSE denoising."""
    if min(n, rate, delta, eta, sigma) <= 0:
        raise ValueError("n, rate, delta, eta, sigma must all be positive")
    b = math.sqrt(delta) + 2.0 * sigma * math.sqrt(2.0 * _LN2 * rate / n) * (
        1.0 + 2.0 * math.sqrt(eta)
    )
    return BoundValue(b, _failure_prob(eta, rate))


def poisson_ml_error_bound(n: int, rate: float, delta: float, eta: float,
                           alpha: float, x_min: float, x_max: float) -> BoundValue:
    """Bound on ||x - xh||^2 / n for ML denoising of Poisson counts."""
    if min(n, rate, delta, eta, alpha) <= 0:
        raise ValueError("n, rate, delta, eta, alpha must all be positive")
    if not (0 < x_min < x_max <= 1):
        raise ValueError(f"need 0 < x_min < x_max <= 1, got ({x_min}, {x_max})")
    c1 = x_max**5 / x_min**2
    c2 = (x_max**2 / x_min**3) * math.log(1.0 / x_min) * math.sqrt(4.0 / _LN2) * (
        math.sqrt(1.0 + eta) + math.sqrt(eta)
    )
    return BoundValue(c1 * delta + c2 * math.sqrt(rate / (n * alpha)),
                      _failure_prob(eta, rate))


def poisson_mse_error_bound(n: int, rate: float, delta: float, eta: float,
                            alpha: float) -> BoundValue:
    """Bound on ||x - xh||^2 / n for normalized-MSE denoising of Poisson counts."""
    if min(n, rate, delta, eta, alpha) <= 0:
        raise ValueError("n, rate, delta, eta, alpha must all be positive")
    c = 4.0 * math.sqrt(_LN2) * (math.sqrt(1.0 + eta) + math.sqrt(eta) + 1.0)
    return BoundValue(delta + c * math.sqrt(rate / (n * alpha)),
                      _failure_prob(eta, rate))


# --- Monte-Carlo validation ------------------------------------------------------


@dataclass
class BoundValidation:
    kind: str
    trials: int
    violations: int
    empirical_rate: float
    prob_ceiling: float
    bound: float
    mean_error: float
    max_error: float

    @property
    def std_error(self) -> float:
        p = self.prob_ceiling
        return math.sqrt(max(p * (1.0 - p), 1e-300) / self.trials)


_BOUND_LOSS = {"awgn": "awgn-mse", "poisson-ml": "poisson-ml",
               "poisson-mse": "poisson-mse"}


def validate_bound(kind: str, code: SparseLevelCode, *, eta: float, trials: int,
                   rng: np.random.Generator, sigma: float | None = None,
                   alpha: float | None = None, batch: int = 2048) -> BoundValidation:
    """Draw signals from the code's class, corrupt, ML-denoise, count violations.

    kind: "awgn" (root-mean error vs the AWGN bound), "poisson-ml", or
    "poisson-mse" (per-coordinate squared error vs the Poisson bounds).
    """
    if kind not in _BOUND_LOSS:
        raise ValueError(f"unknown bound kind {kind!r}; expected {sorted(_BOUND_LOSS)}")
    if code.worst_case_distortion > code.delta * (1 + 1e-12):
        raise ValueError("code construction violates its claimed distortion")
    rate = code.rate
    if kind == "awgn":
        if not sigma or sigma <= 0:
            raise ValueError("awgn validation needs sigma > 0")
        bound = awgn_error_bound(code.n, rate, code.delta, eta, sigma)
    elif kind == "poisson-ml":
        lo, hi = code.base - code.amplitude, code.base + code.amplitude
        bound = poisson_ml_error_bound(code.n, rate, code.delta, eta, alpha or 0.0,
                                       max(lo, 1e-12), hi)
    else:
        if not alpha or alpha <= 0:
            raise ValueError("poisson validation needs alpha > 0")
        bound = poisson_mse_error_bound(code.n, rate, code.delta, eta, alpha)

    loss = _BOUND_LOSS[kind]
    violations = 0
    err_sum, err_max = 0.0, 0.0
    done = 0
    while done < trials:
        t = min(batch, trials - done)
        # k-sparse deviations: uniform supports, uniform values.
        support = np.argpartition(rng.random((t, code.n)), code.k - 1, axis=1)[:, : code.k]
        x = np.full((t, code.n), code.base)
        vals = rng.uniform(code.base - code.amplitude, code.base + code.amplitude,
                           size=(t, code.k))
        np.put_along_axis(x, support, vals, axis=1)
        if kind == "awgn":
            obs = x + sigma * rng.standard_normal(x.shape)
        else:
            obs = rng.poisson(alpha * x).astype(np.float64)
        xh = code.ml_denoise(obs, loss, alpha)
        sq = ((x - xh) ** 2).sum(axis=1)
        err = np.sqrt(sq / code.n) if kind == "awgn" else sq / code.n
        violations += int((err > bound.bound).sum())
        err_sum += float(err.sum())
        err_max = max(err_max, float(err.max()))
        done += t
    return BoundValidation(kind, trials, violations, violations / trials,
                           bound.failure_prob, bound.bound, err_sum / trials, err_max)


# --- Poisson KL and tail lemmas ---------------------------------------------------


def poisson_kl(a1: float, a2: float) -> float:
    """KL(Poisson(a1) || Poisson(a2)) = a2 - a1 + a1*ln(a1/a2), in nats."""
    if a1 <= 0 or a2 <= 0:
        raise ValueError("KL is defined here for positive means only")
    return a2 - a1 + a1 * math.log(a1 / a2)


def poisson_kl_sandwich(a1: float, a2: float, a_min: float, a_max: float):
    """Quadratic lower/upper envelopes of the KL for means inside [a_min, a_max]."""
    if not (0 < a_min <= min(a1, a2) and max(a1, a2) <= a_max):
        raise ValueError("means must lie inside [a_min, a_max] with a_min > 0")
    q = (a2 - a1) ** 2 / (2.0 * a1)
    return (a_min / a_max) ** 2 * q, (a_max / a_min) ** 2 * q


def poisson_tail_bound(weights: np.ndarray, means: np.ndarray, t: float) -> float:
    """Bernstein-style bound on P(sum w_i Y_i >= sum w_i a_i + t), Y_i ~ Poisson(a_i).

    Valid for 0 <= t <= 3*var/(2*max|w|) where var = sum w_i^2 a_i. The same
    value bounds the symmetric lower tail.
    """
    w = np.asarray(weights, dtype=np.float64)
    a = np.asarray(means, dtype=np.float64)
    if w.shape != a.shape or w.ndim != 1 or len(w) == 0:
        raise ValueError("weights and means must be equal-length 1-D arrays")
    if (a <= 0).any():
        raise ValueError("Poisson means must be positive")
    var = float((w**2 * a).sum())
    w_max = float(np.abs(w).max())
    if w_max == 0:
        raise ValueError("all-zero weights")
    upper = 1.5 * var / w_max
    if not (0 <= t <= upper):
        raise ValueError(f"t={t} outside the validity window [0, {upper:g}]")
    return math.exp(-(t**2) / (2.0 * (var + w_max * t / 3.0)))


class TailValidation(NamedTuple):
    upper_empirical: float
    lower_empirical: float
    bound: float
    trials: int


def validate_poisson_tail(weights: np.ndarray, means: np.ndarray, t: float,
                          trials: int, rng: np.random.Generator) -> TailValidation:
    """Empirical two-sided tail frequencies against the analytic bound."""
    bound = poisson_tail_bound(weights, means, t)
    w = np.asarray(weights, dtype=np.float64)
    a = np.asarray(means, dtype=np.float64)
    draws = rng.poisson(a, size=(trials, len(a))).astype(np.float64)
    s = draws @ w
    mu = float(w @ a)
    return TailValidation(float((s >= mu + t).mean()), float((s <= mu - t).mean()),
                          bound, trials)
