"""The compression-denoising theory lab, empirically.

For signals that are a constant base plus a k-sparse deviation, a tiny
explicit code (stored support + quantized levels) admits exact
maximum-likelihood denoising — which makes the high-probability error bounds
checkable by brute-force Monte Carlo:

* AWGN:    ||x - xh||/sqrt(n) <= sqrt(delta) + O(sigma * sqrt(R/n)) whp
* Poisson: ||x - xh||^2/n     <= O(delta)  + O(sqrt(R/(n*alpha)))  whp

plus the two supporting results: a quadratic sandwich on the KL divergence
between Poisson laws, and a Bernstein tail bound for weighted Poisson sums.
"""

import numpy as np

from zsncd.theory import (SparseLevelCode, poisson_kl, poisson_kl_sandwich,
                          validate_bound, validate_poisson_tail)

rng = np.random.default_rng(0)
trials = 4000

print("sparse-level code: n=64, k=4, one sign bit per deviation")
code = SparseLevelCode(n=64, k=4, delta=1 / 64)
print(f"  rate = {code.rate:.2f} bits, worst-case distortion "
      f"{code.worst_case_distortion:.5f} <= delta = {code.delta:.5f}")

print(f"\nAWGN bound, {trials} trials per cell:")
print(f"{'eta':>5} {'sigma':>6} {'bound':>8} {'max err':>8} {'violations':>11}")
for eta in (0.25, 0.5):
    for sigma in (0.05, 0.1):
        v = validate_bound("awgn", code, eta=eta, trials=trials, rng=rng,
                           sigma=sigma)
        print(f"{eta:5.2f} {sigma:6.2f} {v.bound:8.4f} {v.max_error:8.4f} "
              f"{v.violations:4d} (ceiling {v.prob_ceiling:.2e})")

pcode = SparseLevelCode(n=64, k=4, delta=0.0025, amplitude=0.4, base=0.5)
print(f"\nPoisson bounds on [0.1, 0.9], {trials} trials per cell:")
print(f"{'loss':>12} {'alpha':>6} {'bound':>9} {'max err':>9} {'violations':>11}")
for kind in ("poisson-ml", "poisson-mse"):
    for alpha in (25.0, 100.0):
        v = validate_bound(kind, pcode, eta=0.5, trials=trials, rng=rng,
                           alpha=alpha)
        print(f"{kind:>12} {alpha:6.0f} {v.bound:9.4f} {v.max_error:9.4f} "
              f"{v.violations:4d} (ceiling {v.prob_ceiling:.2e})")

print("\nKL sandwich (Poisson means in [0.1, 0.9]):")
for a1, a2 in [(0.2, 0.6), (0.5, 0.51), (0.85, 0.15)]:
    lo, hi = poisson_kl_sandwich(a1, a2, 0.1, 0.9)
    print(f"  KL({a1}, {a2}) = {poisson_kl(a1, a2):.5f} "
          f"in [{lo:.5f}, {hi:.5f}]")

print("\nBernstein tail for a mixed-sign weighted Poisson sum:")
w = np.tile([1.0, -1.0], 50)
means = np.full(100, 4.0)
t = 0.8 * np.sqrt(float((w**2 * means).sum()))
v = validate_poisson_tail(w, means, t, trials=100_000, rng=rng)
print(f"  P(S >= t)  = {v.upper_empirical:.4f} <= bound {v.bound:.4f}")
print(f"  P(S <= -t) = {v.lower_empirical:.4f} <= bound {v.bound:.4f}")
